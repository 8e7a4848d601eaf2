#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "usbf/classic_bf.hpp"

namespace usbf {

/// Log-compressed image on the (scanline, depth) grid; pixels in dB, <= 0.
struct BModeImage {
  RMatrix pixels;  // K x N
  double dynamic_range = 60.0;
  ScanPlan scan;
  SampleGrid grid;
  std::map<std::string, std::string> provenance;
};

/// Elementwise modulus; the result has kind envelope and zero imaginary part.
inline RfImage envelope(const RfImage& img) {
  require(img.kind == ImageKind::rf, ErrorCode::invalid_argument,
          "envelope detection needs an rf image, got " + to_string(img.kind));
  RfImage out = img;
  out.data = img.data.cwiseAbs().cast<cplx>();
  out.kind = ImageKind::envelope;
  return out;
}

inline RMatrix envelope_values(const RfImage& img) {
  require(img.kind == ImageKind::envelope, ErrorCode::invalid_argument,
          "expected an envelope image, got " + to_string(img.kind));
  return img.data.real();
}

/// 20 log10(env / max env), clamped at -dynamic_range.
inline BModeImage log_compress(const RfImage& env, double dynamic_range = 60.0) {
  require(dynamic_range > 0.0, ErrorCode::invalid_argument, "dynamic range must be positive");
  const RMatrix e = envelope_values(env);
  const double top = e.size() ? e.maxCoeff() : 0.0;
  require(top > 0.0, ErrorCode::invalid_argument, "cannot log-compress an all-zero envelope");
  BModeImage b;
  b.pixels = e.unaryExpr([&](double v) {
    return v <= 0.0 ? -dynamic_range : std::max(-dynamic_range, 20.0 * std::log10(v / top));
  });
  b.dynamic_range = dynamic_range;
  b.scan = env.scan;
  b.grid = env.grid;
  b.provenance = env.provenance;
  return b;
}

/// Lateral coordinate of scanline k at a depth.
inline double lateral_position(const ScanPlan& scan, int k, double depth) {
  return scan.point(k, depth).x;
}

inline nlohmann::json image_extents(const ScanPlan& scan, const SampleGrid& grid) {
  const int N = grid.num_samples;
  nlohmann::json j;
  j["scan_mode"] = scan.mode == ScanMode::angle ? "angle" : "lateral";
  j["lines"] = scan.lines;
  j["depth_first_m"] = grid.depth(0);
  j["depth_last_m"] = grid.depth(N - 1);
  j["depth_step_m"] = grid.sound_speed / (2.0 * grid.sampling_frequency);
  const double mid = grid.depth(0.5 * (N - 1));
  j["lateral_first_m"] = lateral_position(scan, 0, mid);
  j["lateral_last_m"] = lateral_position(scan, scan.num_lines() - 1, mid);
  return j;
}

/// 8-bit PGM (width K, height N, depth downwards) plus a JSON sidecar at
/// `path` + ".json" with extents, dynamic range and provenance.
inline void write_pgm(const BModeImage& img, const std::filesystem::path& path) {
  const int K = static_cast<int>(img.pixels.rows());
  const int N = static_cast<int>(img.pixels.cols());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(ErrorCode::io_error, "cannot open for writing: " + path.string());
  os << "P5\n" << K << " " << N << "\n255\n";
  std::vector<unsigned char> row(K);
  for (int n = 0; n < N; ++n) {
    for (int k = 0; k < K; ++k) {
      const double v = (img.pixels(k, n) + img.dynamic_range) / img.dynamic_range;
      row[k] = static_cast<unsigned char>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)));
    }
    os.write(reinterpret_cast<const char*>(row.data()), K);
  }
  if (!os) throw Error(ErrorCode::io_error, "write failed: " + path.string());

  nlohmann::json meta = image_extents(img.scan, img.grid);
  meta["width"] = K;
  meta["height"] = N;
  meta["dynamic_range_db"] = img.dynamic_range;
  meta["provenance"] = img.provenance;
  std::ofstream ms(path.string() + ".json", std::ios::trunc);
  if (!ms) throw Error(ErrorCode::io_error, "cannot open for writing: " + path.string() + ".json");
  ms << meta.dump(2) << "\n";
}

struct ProfilePoint {
  double lateral = 0.0;
  double amplitude_db = 0.0;
};

/// Envelope averaged over `average_n` depth samples centered at `depth`,
/// in dB relative to its maximum.
inline std::vector<ProfilePoint> lateral_profile(const RfImage& env, double depth, int average_n = 1) {
  const RMatrix e = envelope_values(env);
  require(average_n >= 1, ErrorCode::invalid_argument, "average_n must be >= 1");
  const long center = env.grid.nearest(depth);
  const long lo = center - (average_n - 1) / 2;
  const long hi = lo + average_n - 1;
  require(lo >= 0 && hi < env.num_samples(), ErrorCode::index_out_of_range,
          "profile depth window lies outside the image depth range");
  std::vector<ProfilePoint> out(env.num_lines());
  double top = 0.0;
  for (int k = 0; k < env.num_lines(); ++k) {
    double acc = 0.0;
    for (long n = lo; n <= hi; ++n) acc += e(k, n);
    out[k].lateral = lateral_position(env.scan, k, env.grid.depth(static_cast<double>(center)));
    out[k].amplitude_db = acc / average_n;
    top = std::max(top, out[k].amplitude_db);
  }
  require(top > 0.0, ErrorCode::invalid_argument, "profile is identically zero");
  for (auto& p : out) p.amplitude_db = 20.0 * std::log10(std::max(p.amplitude_db, 1e-300) / top);
  return out;
}

inline void write_profile_csv(const std::vector<ProfilePoint>& profile,
                              const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error(ErrorCode::io_error, "cannot open for writing: " + path.string());
  os << "lateral_m,amplitude_db\n";
  char line[96];
  for (const auto& p : profile) {
    std::snprintf(line, sizeof line, "%.9g,%.6f\n", p.lateral, p.amplitude_db);
    os << line;
  }
  if (!os) throw Error(ErrorCode::io_error, "write failed: " + path.string());
}

}  // namespace usbf
