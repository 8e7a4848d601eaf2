#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "usbf/fft.hpp"
#include "usbf/imaging.hpp"

namespace usbf {

enum class RegionShape { rectangle, disc };

/// Region in image coordinates (meters). Rectangles use half extents
/// (half_lateral, half_axial); discs use `radius`.
struct RegionSpec {
  std::string name;
  RegionShape shape = RegionShape::rectangle;
  double lateral = 0.0;
  double axial = 0.0;
  double half_lateral = 0.0;
  double half_axial = 0.0;
  double radius = 0.0;

  bool contains(const Point2& p) const {
    if (shape == RegionShape::disc) return std::hypot(p.x - lateral, p.z - axial) <= radius;
    return std::abs(p.x - lateral) <= half_lateral && std::abs(p.z - axial) <= half_axial;
  }

  void validate() const {
    if (shape == RegionShape::disc)
      require(radius > 0.0, ErrorCode::degenerate_region, "region '" + name + "' needs radius > 0");
    else
      require(half_lateral > 0.0 && half_axial > 0.0, ErrorCode::degenerate_region,
              "region '" + name + "' needs positive half extents");
  }

  /// Boundary points used to check that the region lies inside the image.
  std::vector<Point2> outline() const {
    std::vector<Point2> pts;
    if (shape == RegionShape::disc) {
      for (int i = 0; i < 32; ++i) {
        const double t = 2.0 * kPi * i / 32;
        pts.push_back({lateral + radius * std::cos(t), axial + radius * std::sin(t)});
      }
    } else {
      for (int sx : {-1, 1})
        for (int sz : {-1, 1}) pts.push_back({lateral + sx * half_lateral, axial + sz * half_axial});
    }
    return pts;
  }
};

/// Whether a point falls within the area covered by the image grid.
inline bool image_covers(const ScanPlan& scan, const SampleGrid& grid, const Point2& p) {
  const double d0 = grid.depth(0), d1 = grid.depth(grid.num_samples - 1);
  if (scan.mode == ScanMode::angle) {
    const double r = std::hypot(p.x, p.z);
    const double t = std::atan2(p.x, p.z);
    return r >= d0 && r <= d1 && t >= scan.lines.front() && t <= scan.lines.back();
  }
  return p.z >= d0 && p.z <= d1 && p.x >= scan.lines.front() && p.x <= scan.lines.back();
}

/// Pixels (k, n) whose centers fall inside the region, as flat indices k + K*n.
inline std::vector<Eigen::Index> region_pixels(const RfImage& img, const RegionSpec& region) {
  region.validate();
  for (const auto& p : region.outline())
    require(image_covers(img.scan, img.grid, p), ErrorCode::degenerate_region,
            "region '" + region.name + "' extends outside the image");
  std::vector<Eigen::Index> idx;
  const int K = img.num_lines();
  for (int n = 0; n < img.num_samples(); ++n) {
    const double depth = img.grid.depth(n);
    for (int k = 0; k < K; ++k)
      if (region.contains(img.scan.point(k, depth))) idx.push_back(k + static_cast<Eigen::Index>(K) * n);
  }
  require(!idx.empty(), ErrorCode::degenerate_region,
          "region '" + region.name + "' contains no pixel centers");
  return idx;
}

struct RegionStats {
  double mean = 0.0;
  double stddev = 0.0;  // population
  std::size_t count = 0;
};

inline RegionStats region_stats(const RfImage& env, const RegionSpec& region) {
  const RMatrix e = envelope_values(env);
  const auto idx = region_pixels(env, region);
  RegionStats s;
  s.count = idx.size();
  for (auto i : idx) s.mean += e.data()[i];
  s.mean /= static_cast<double>(s.count);
  double var = 0.0;
  for (auto i : idx) var += (e.data()[i] - s.mean) * (e.data()[i] - s.mean);
  s.stddev = std::sqrt(var / static_cast<double>(s.count));
  return s;
}

inline bool regions_disjoint(const RfImage& img, const RegionSpec& a, const RegionSpec& b) {
  auto pa = region_pixels(img, a);
  auto pb = region_pixels(img, b);
  std::vector<Eigen::Index> common;
  std::set_intersection(pa.begin(), pa.end(), pb.begin(), pb.end(), std::back_inserter(common));
  return common.empty();
}

/// |mu1 - mu2| / sqrt(s1^2 + s2^2) on the envelope.
inline double cnr(const RfImage& env, const RegionSpec& r1, const RegionSpec& r2) {
  require(regions_disjoint(env, r1, r2), ErrorCode::degenerate_region,
          "regions '" + r1.name + "' and '" + r2.name + "' overlap");
  const auto a = region_stats(env, r1);
  const auto b = region_stats(env, r2);
  const double denom = std::sqrt(a.stddev * a.stddev + b.stddev * b.stddev);
  require(denom > 0.0, ErrorCode::degenerate_region, "CNR undefined: both regions are constant");
  return std::abs(a.mean - b.mean) / denom;
}

/// mu / sigma on the envelope.
inline double snr(const RfImage& env, const RegionSpec& r) {
  const auto s = region_stats(env, r);
  require(s.stddev > 0.0, ErrorCode::degenerate_region,
          "SNR undefined: region '" + r.name + "' is constant");
  return s.mean / s.stddev;
}

/// Number of lags in the connected main lobe (around zero lag) where the
/// normalized 2-D autocorrelation of the zero-mean envelope exceeds -3 dB.
inline double autocorrelation_area(const RMatrix& env) {
  const int K = static_cast<int>(env.rows()), N = static_cast<int>(env.cols());
  require(K >= 1 && N >= 1, ErrorCode::invalid_argument, "empty image");
  const double mean = env.mean();
  const int RK = 2 * K - 1, RN = 2 * N - 1;
  // Row-major (RK x RN) buffer, zero padded.
  std::vector<cplx> buf(static_cast<std::size_t>(RK) * RN, 0.0);
  double energy = 0.0;
  for (int k = 0; k < K; ++k)
    for (int n = 0; n < N; ++n) {
      const double v = env(k, n) - mean;
      buf[static_cast<std::size_t>(k) * RN + n] = v;
      energy += v * v;
    }
  require(energy > 0.0, ErrorCode::degenerate_region, "flat image: autocorrelation undefined");
  FftPlan fwd(RK, RN, true), inv(RK, RN, false);
  fwd.execute(buf);
  for (auto& v : buf) v = std::norm(v);
  inv.execute(buf);
  const double zero_lag = buf[0].real();
  const double level = std::pow(10.0, -3.0 / 10.0);
  // Lags are stored circularly; flood-fill the component containing (0, 0).
  auto rho = [&](int dk, int dn) {
    const int i = (dk + RK) % RK, j = (dn + RN) % RN;
    return buf[static_cast<std::size_t>(i) * RN + j].real() / zero_lag;
  };
  std::vector<char> seen(static_cast<std::size_t>(RK) * RN, 0);
  std::vector<std::pair<int, int>> stack{{0, 0}};
  seen[0] = 1;
  double area = 0.0;
  while (!stack.empty()) {
    const auto [dk, dn] = stack.back();
    stack.pop_back();
    area += 1.0;
    const int nbr[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
    for (const auto& d : nbr) {
      const int a = dk + d[0], b = dn + d[1];
      if (a <= -K || a >= K || b <= -N || b >= N) continue;
      const std::size_t key = static_cast<std::size_t>((a + RK) % RK) * RN + (b + RN) % RN;
      if (seen[key] || rho(a, b) <= level) continue;
      seen[key] = 1;
      stack.push_back({a, b});
    }
  }
  return area;
}

/// area(reference) / area(test); above 1 means finer speckle/PSF than the reference.
inline double resolution_gain(const RfImage& reference_env, const RfImage& test_env) {
  require(reference_env.num_lines() == test_env.num_lines() &&
              reference_env.num_samples() == test_env.num_samples(),
          ErrorCode::dimension_mismatch, "resolution gain needs images on the same grid");
  return autocorrelation_area(envelope_values(reference_env)) /
         autocorrelation_area(envelope_values(test_env));
}

}  // namespace usbf
