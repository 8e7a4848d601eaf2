#pragma once

#include <cmath>
#include <vector>

#include "usbf/geometry.hpp"

namespace usbf {

/// How scanline k is laid out. `lateral`: vertical line at x_k, its
/// direction at depth z is atan(x_k / z). `angle`: ray from the array
/// center at fixed angle theta_k; depth is read as range along the ray.
enum class ScanMode { lateral, angle };

struct Point2 {
  double x = 0.0;  // lateral
  double z = 0.0;  // axial
};

struct ScanPlan {
  ScanMode mode = ScanMode::angle;
  std::vector<double> lines;  // lateral positions [m] or angles [rad]
  double depth_min = 0.0;
  double depth_max = 0.0;
  double focus_depth = 0.0;

  int num_lines() const { return static_cast<int>(lines.size()); }

  void validate() const {
    require(!lines.empty(), ErrorCode::invalid_argument, "scan plan needs K >= 1 lines");
    for (std::size_t k = 1; k < lines.size(); ++k)
      require(lines[k] > lines[k - 1], ErrorCode::invalid_argument,
              "scanline positions must be strictly increasing");
    require(depth_min > 0.0 && depth_max > depth_min, ErrorCode::invalid_argument,
            "depth range must satisfy 0 < depth_min < depth_max");
    require(focus_depth > 0.0, ErrorCode::invalid_argument, "focus depth must be positive");
    if (mode == ScanMode::angle)
      for (double t : lines)
        require(std::abs(t) < kPi / 2, ErrorCode::invalid_argument,
                "scan angles must lie in (-pi/2, pi/2)");
  }

  /// Point of line k at the given depth (range for angle scans).
  Point2 point(int k, double depth) const {
    if (mode == ScanMode::angle) {
      const double t = lines[k];
      return {depth * std::sin(t), depth * std::cos(t)};
    }
    return {lines[k], depth};
  }

  /// Direction of line k seen from the array center at the given depth.
  double angle(int k, double depth) const {
    if (mode == ScanMode::angle) return lines[k];
    return std::atan2(lines[k], depth);
  }

  Point2 focal_point(int k) const { return point(k, focus_depth); }

  static ScanPlan uniform_angle(int K, double half_span, double depth_min, double depth_max,
                                double focus_depth) {
    return {ScanMode::angle, uniform_angles(K, half_span), depth_min, depth_max, focus_depth};
  }

  static ScanPlan uniform_lateral(int K, double half_width, double depth_min, double depth_max,
                                  double focus_depth) {
    return {ScanMode::lateral, uniform_angles(K, half_width), depth_min, depth_max, focus_depth};
  }
};

/// Axial sampling shared by raw cubes and images. Sample n sits at
/// time (first_sample + n) / fs after transmit, i.e. depth c * t / 2.
struct SampleGrid {
  int first_sample = 0;
  int num_samples = 0;
  double sampling_frequency = 1.0;
  double sound_speed = 1540.0;

  double t0() const { return first_sample / sampling_frequency; }
  double time(double n) const { return (first_sample + n) / sampling_frequency; }
  double depth(double n) const { return 0.5 * sound_speed * time(n); }

  /// Index of the sample nearest to a depth, unclamped.
  long nearest(double depth_m) const {
    return std::lround(2.0 * depth_m / sound_speed * sampling_frequency) - first_sample;
  }

  static SampleGrid make(const ScanPlan& scan, const ProbeGeometry& geom) {
    scan.validate();
    geom.validate();
    SampleGrid g;
    g.sampling_frequency = geom.sampling_frequency;
    g.sound_speed = geom.sound_speed;
    g.first_sample = static_cast<int>(
        std::lround(2.0 * scan.depth_min / geom.sound_speed * geom.sampling_frequency));
    g.num_samples = static_cast<int>(std::ceil(
        (scan.depth_max - scan.depth_min) * 2.0 * geom.sampling_frequency / geom.sound_speed - 1e-9));
    return g;
  }
};

}  // namespace usbf
