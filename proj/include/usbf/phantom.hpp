#pragma once

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "usbf/cube.hpp"
#include "usbf/parallel.hpp"

namespace usbf {

struct Scatterer {
  double lateral = 0.0;  // m
  double axial = 0.0;    // m, > 0
  double amplitude = 1.0;

  bool operator==(const Scatterer&) const = default;
};

struct Phantom {
  std::vector<Scatterer> scatterers;
  std::uint64_t seed = 0;

  bool operator==(const Phantom&) const = default;
};

/// Five equal point reflectors: one centered at 63 mm and two pairs at
/// +/-2 mm lateral (4 mm apart) at 65 mm and 68 mm.
inline Phantom point_reflector_phantom() {
  Phantom p;
  p.scatterers = {
      {0.0, 63e-3, 1.0},
      {-2e-3, 65e-3, 1.0},
      {2e-3, 65e-3, 1.0},
      {-2e-3, 68e-3, 1.0},
      {2e-3, 68e-3, 1.0},
  };
  return p;
}

/// Speckle background uniformly filling [-half_width, half_width] x
/// [depth - half_height, depth + half_height] with N(0,1) amplitudes; the
/// disc of `radius` centered at (0, depth) is anechoic (amplitude 0).
inline Phantom cyst_phantom(double radius, double depth, int n_scatterers, std::uint64_t seed,
                            double half_width = 15e-3, double half_height = 10e-3) {
  require(radius > 0.0 && radius < depth, ErrorCode::invalid_argument,
          "cyst radius must satisfy 0 < radius < depth");
  require(n_scatterers >= 1, ErrorCode::invalid_argument, "need at least one scatterer");
  require(half_height < depth, ErrorCode::invalid_argument, "region must stay below the probe");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(-half_width, half_width);
  std::uniform_real_distribution<double> uz(depth - half_height, depth + half_height);
  std::normal_distribution<double> amp(0.0, 1.0);
  Phantom p;
  p.seed = seed;
  p.scatterers.reserve(n_scatterers);
  for (int i = 0; i < n_scatterers; ++i) {
    Scatterer s;
    s.lateral = ux(rng);
    s.axial = uz(rng);
    s.amplitude = amp(rng);
    if (std::hypot(s.lateral, s.axial - depth) < radius) s.amplitude = 0.0;
    p.scatterers.push_back(s);
  }
  return p;
}

/// Hann-windowed cosine burst of `cycles` periods, centered at t = 0.
struct ExcitationPulse {
  int cycles = 2;
  double center_frequency = 3e6;
  double sampling_frequency = 100e6;
  std::vector<double> samples;

  double duration() const { return cycles / center_frequency; }

  double value(double t) const {
    const double half = 0.5 * duration();
    if (t <= -half || t >= half) return 0.0;
    const double window = 0.5 * (1.0 + std::cos(2.0 * kPi * t / duration()));
    return window * std::cos(2.0 * kPi * center_frequency * t);
  }

  static ExcitationPulse make(int cycles, double f0, double fs) {
    require(cycles >= 1 && f0 > 0.0 && fs > 2.0 * f0, ErrorCode::invalid_argument,
            "pulse needs cycles >= 1 and fs > 2 f0");
    ExcitationPulse p{cycles, f0, fs, {}};
    const int half = static_cast<int>(std::floor(0.5 * p.duration() * fs));
    for (int i = -half; i <= half; ++i) p.samples.push_back(p.value(i / fs));
    return p;
  }
};

struct SimulationOptions {
  /// Scale each emission by the narrowband transmit beam pattern
  /// |mean_m exp(j k (|s - p_m| - |f_k - p_m|))| of its focal point.
  bool transmit_weighting = true;
  /// Additive white Gaussian noise relative to the mean cube signal power.
  std::optional<double> noise_snr_db;
  std::uint64_t noise_seed = 0;
};

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Depth coordinate used to decide whether a scatterer is imaged.
inline double imaging_depth(const ScanPlan& scan, const Scatterer& s) {
  return scan.mode == ScanMode::angle ? std::hypot(s.lateral, s.axial) : s.axial;
}
}  // namespace detail

/// Linear pulse-echo simulation. Transmit time of flight is taken from the
/// array center, receive from each element; scatterers whose depth falls
/// outside the scan's depth range are excluded.
inline RawDataCube simulate_raw(const Phantom& phantom, const ProbeGeometry& geom,
                                const ExcitationPulse& pulse, const ScanPlan& scan,
                                const SimulationOptions& options = {}) {
  const auto grid = SampleGrid::make(scan, geom);
  const int M = geom.num_elements;
  const int N = grid.num_samples;
  const int K = scan.num_lines();
  const double c = geom.sound_speed;
  const double fs = geom.sampling_frequency;
  const auto pos = element_positions(geom);
  const double wavenumber = 2.0 * kPi / geom.wavelength();

  std::vector<Scatterer> active;
  for (const auto& s : phantom.scatterers) {
    require(s.axial > 0.0, ErrorCode::invalid_argument, "scatterer axial position must be > 0");
    const double d = detail::imaging_depth(scan, s);
    if (d >= scan.depth_min && d <= scan.depth_max && s.amplitude != 0.0) active.push_back(s);
  }
  const int S = static_cast<int>(active.size());

  // weight(s, k): amplitude times transmit beam pattern.
  RMatrix weight(S, K);
  parallel_for(0, K, [&](int k) {
    const Point2 f = scan.focal_point(k);
    for (int s = 0; s < S; ++s) {
      double w = 1.0;
      if (options.transmit_weighting) {
        cplx acc = 0.0;
        for (int m = 0; m < M; ++m) {
          const double ds = std::hypot(active[s].lateral - pos[m], active[s].axial);
          const double df = std::hypot(f.x - pos[m], f.z);
          acc += std::polar(1.0, wavenumber * (ds - df));
        }
        w = std::abs(acc) / M;
      }
      weight(s, k) = w * active[s].amplitude;
    }
  });

  RawDataCube cube(M, N, K, fs, grid.first_sample);
  const double half = 0.5 * pulse.duration();
  parallel_for(0, M, [&](int m) {
    std::vector<double> acc(static_cast<std::size_t>(N) * K, 0.0);
    std::vector<double> shape;
    for (int s = 0; s < S; ++s) {
      const double tau = (std::hypot(active[s].lateral, active[s].axial) +
                          std::hypot(active[s].lateral - pos[m], active[s].axial)) / c;
      const int lo = std::max(0, static_cast<int>(std::ceil((tau - half) * fs)) - grid.first_sample);
      const int hi = std::min(N - 1, static_cast<int>(std::floor((tau + half) * fs)) - grid.first_sample);
      if (hi < lo) continue;
      shape.resize(hi - lo + 1);
      for (int n = lo; n <= hi; ++n) shape[n - lo] = pulse.value(grid.time(n) - tau);
      for (int k = 0; k < K; ++k) {
        const double w = weight(s, k);
        double* dst = acc.data() + static_cast<std::size_t>(k) * N;
        for (int n = lo; n <= hi; ++n) dst[n] += w * shape[n - lo];
      }
    }
    for (int k = 0; k < K; ++k)
      for (int n = 0; n < N; ++n)
        cube.at(m, n, k) = cplxf(static_cast<float>(acc[static_cast<std::size_t>(k) * N + n]), 0.0f);
  });

  if (options.noise_snr_db) {
    double power = 0.0;
    for (const auto& v : cube.data()) power += double(v.real()) * v.real();
    power /= static_cast<double>(cube.data().size());
    const double sigma = std::sqrt(power / std::pow(10.0, *options.noise_snr_db / 10.0));
    parallel_for(0, K, [&](int k) {
      std::mt19937_64 rng(detail::splitmix64(options.noise_seed ^ detail::splitmix64(k + 1)));
      std::normal_distribution<double> g(0.0, sigma);
      for (int m = 0; m < M; ++m)
        for (auto& v : cube.trace(m, k)) v = cplxf(static_cast<float>(v.real() + g(rng)), 0.0f);
    });
  }
  return cube;
}

// Structured text: header line, seed, count, then one record per scatterer.
inline void write_phantom(const Phantom& p, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error(ErrorCode::io_error, "cannot open for writing: " + path.string());
  os << "usbf-phantom 1\n";
  os << "seed " << p.seed << "\n";
  os << "count " << p.scatterers.size() << "\n";
  os << "# lateral_m axial_m amplitude\n";
  char line[128];
  for (const auto& s : p.scatterers) {
    std::snprintf(line, sizeof line, "%.17g %.17g %.17g\n", s.lateral, s.axial, s.amplitude);
    os << line;
  }
  if (!os) throw Error(ErrorCode::io_error, "write failed: " + path.string());
}

inline Phantom read_phantom(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::io_error, "cannot open for reading: " + path.string());
  std::string tag;
  int version = 0;
  if (!(is >> tag >> version) || tag != "usbf-phantom" || version != 1)
    throw Error(ErrorCode::format_error, "not a phantom file: " + path.string());
  Phantom p;
  std::size_t count = 0;
  std::string key;
  if (!(is >> key >> p.seed) || key != "seed" || !(is >> key >> count) || key != "count")
    throw Error(ErrorCode::format_error, "malformed phantom header");
  std::string line;
  std::getline(is, line);
  p.scatterers.reserve(count);
  while (p.scatterers.size() < count && std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string a, b, c;
    if (!(ls >> a >> b >> c)) throw Error(ErrorCode::format_error, "malformed scatterer record");
    p.scatterers.push_back({std::strtod(a.c_str(), nullptr), std::strtod(b.c_str(), nullptr),
                            std::strtod(c.c_str(), nullptr)});
  }
  if (p.scatterers.size() != count) throw Error(ErrorCode::format_error, "phantom record count mismatch");
  return p;
}

}  // namespace usbf
