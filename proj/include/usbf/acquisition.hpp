#pragma once

#include <cmath>
#include <vector>

#include "usbf/cube.hpp"
#include "usbf/fft.hpp"
#include "usbf/parallel.hpp"

namespace usbf {

/// Discrete analytic signal of one real trace (one-sided spectrum, real part
/// copied verbatim from the input), using caller-owned plans of length x.size().
inline std::vector<cplx> analytic_trace(const std::vector<double>& x, FftPlan& fwd, FftPlan& inv) {
  const int N = static_cast<int>(x.size());
  std::vector<cplx> spec(x.begin(), x.end());
  fwd.execute(spec);
  const int half = N / 2;
  for (int i = 1; i < N; ++i) {
    if (i < (N + 1) / 2) spec[i] *= 2.0;
    else if (!(N % 2 == 0 && i == half)) spec[i] = 0.0;
  }
  inv.execute(spec);
  for (int i = 0; i < N; ++i) spec[i] = cplx(x[i], spec[i].imag() / N);
  return spec;
}

inline std::vector<cplx> analytic_trace(const std::vector<double>& x) {
  const int N = static_cast<int>(x.size());
  if (N == 0) return {};
  FftPlan fwd(N, true), inv(N, false);
  return analytic_trace(x, fwd, inv);
}

/// Per-channel analytic signal of a real cube. Only the emissions listed in
/// `emissions` are converted (all when empty); the others stay zero.
inline RawDataCube analytic_signal(const RawDataCube& cube, const std::vector<int>& emissions = {}) {
  require(!cube.is_analytic, ErrorCode::invalid_argument, "cube is already analytic");
  RawDataCube out = cube.zeros_like();
  out.is_analytic = true;
  const int M = cube.channels();
  std::vector<int> todo = emissions;
  if (todo.empty())
    for (int k = 0; k < cube.emissions(); ++k) todo.push_back(k);
  parallel_for(0, static_cast<int>(todo.size()), [&, M](int i) {
    const int k = todo[i];
    std::vector<double> x(cube.samples());
    FftPlan fwd(cube.samples(), true), inv(cube.samples(), false);
    for (int m = 0; m < M; ++m) {
      const auto src = cube.trace(m, k);
      for (std::size_t n = 0; n < x.size(); ++n) x[n] = src[n].real();
      const auto a = analytic_trace(x, fwd, inv);
      auto dst = out.trace(m, k);
      for (std::size_t n = 0; n < x.size(); ++n)
        dst[n] = cplxf(src[n].real(), static_cast<float>(a[n].imag()));
    }
  });
  return out;
}

/// Round-trip time (transmit from the array center, receive at element_x)
/// of a point q.
inline double round_trip_time(const Point2& q, double element_x, double sound_speed) {
  return (std::hypot(q.x, q.z) + std::hypot(q.x - element_x, q.z)) / sound_speed;
}

/// Throws header_mismatch unless the cube matches the probe and scan.
inline void check_cube_matches(const RawDataCube& cube, const ProbeGeometry& geom,
                               const ScanPlan& scan) {
  const auto grid = SampleGrid::make(scan, geom);
  require(cube.channels() == geom.num_elements && cube.emissions() == scan.num_lines() &&
              cube.samples() == grid.num_samples && cube.first_sample() == grid.first_sample &&
              cube.sampling_frequency() == geom.sampling_frequency,
          ErrorCode::header_mismatch,
          "cube dimensions (M=" + std::to_string(cube.channels()) +
              ", N=" + std::to_string(cube.samples()) + ", K=" + std::to_string(cube.emissions()) +
              ") do not match the probe/scan configuration (M=" +
              std::to_string(geom.num_elements) + ", N=" + std::to_string(grid.num_samples) +
              ", K=" + std::to_string(scan.num_lines()) + ")");
}

/// Dynamic receive focusing. Output sample (m, n, k) holds channel m of
/// emission k at the round-trip time of the scanline-k point at depth n,
/// linearly interpolated; times outside the record give zero. Only the
/// emissions listed in `emissions` are processed (all when empty); the
/// others stay zero.
inline RawDataCube compensate_delays(const RawDataCube& cube, const ProbeGeometry& geom,
                                     const ScanPlan& scan, const std::vector<int>& emissions = {}) {
  require(!cube.is_compensated, ErrorCode::invalid_argument, "cube is already delay-compensated");
  check_cube_matches(cube, geom, scan);
  const auto grid = SampleGrid::make(scan, geom);
  const auto pos = element_positions(geom);
  const int M = cube.channels();
  const int N = cube.samples();
  const double fs = cube.sampling_frequency();

  std::vector<int> todo = emissions;
  if (todo.empty())
    for (int k = 0; k < cube.emissions(); ++k) todo.push_back(k);

  RawDataCube out = cube.zeros_like();
  out.is_compensated = true;
  parallel_for(0, static_cast<int>(todo.size()), [&](int i) {
    const int k = todo[i];
    for (int m = 0; m < M; ++m) {
      const auto src = cube.trace(m, k);
      auto dst = out.trace(m, k);
      for (int n = 0; n < N; ++n) {
        const Point2 q = scan.point(k, grid.depth(n));
        const double idx = round_trip_time(q, pos[m], geom.sound_speed) * fs - grid.first_sample;
        const double lo = std::floor(idx);
        const long j = static_cast<long>(lo);
        if (j < 0 || j >= N) continue;
        const double frac = idx - lo;
        const cplx a(src[j].real(), src[j].imag());
        if (j + 1 >= N) {
          if (frac == 0.0) dst[n] = src[j];
          continue;
        }
        const cplx b(src[j + 1].real(), src[j + 1].imag());
        const cplx v = a + frac * (b - a);
        dst[n] = cplxf(static_cast<float>(v.real()), static_cast<float>(v.imag()));
      }
    }
  });
  return out;
}

}  // namespace usbf
