#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "usbf/acquisition.hpp"
#include "usbf/config.hpp"
#include "usbf/image_io.hpp"

namespace usbf {

/// Process exit status for each error class. 0 is success, 2 is reserved
/// for command-line usage errors.
inline int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_config: return 3;
    case ErrorCode::io_error: return 4;
    case ErrorCode::format_error: return 5;
    case ErrorCode::header_mismatch: return 6;
    case ErrorCode::degenerate_region: return 7;
    case ErrorCode::not_converged: return 8;
    case ErrorCode::singular_matrix: return 9;
    case ErrorCode::invalid_argument: return 10;
    case ErrorCode::dimension_mismatch: return 11;
    case ErrorCode::index_out_of_range: return 12;
  }
  return 1;
}

/// `error: code=<name> message="<text>"` on one line.
inline std::string error_line(std::string_view code, std::string_view message) {
  std::string msg;
  for (char ch : message) {
    if (ch == '\n' || ch == '\r') msg += ' ';
    else if (ch == '"' || ch == '\\') msg += {'\\', ch};
    else msg += ch;
  }
  return "error: code=" + std::string(code) + " message=\"" + msg + "\"";
}

inline std::string format_csv_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

struct BeamformResult {
  RfImage image;
  double wall_seconds = 0.0;
  int emissions_used = 0;
  int nonconverged_depths = 0;
};

/// Emission indices a method needs from the raw cube (empty: all).
inline std::vector<int> emissions_needed(const ExperimentConfig& c, Method m) {
  if (m != Method::bp && m != Method::ls) return {};
  const int K = c.scan.num_lines();
  const int P = K / (m == Method::bp ? c.bp : c.ls).decimation;
  return decimation_indices(K, P);
}

/// analytic signal -> delay compensation -> method. The wall time covers
/// this whole chain and nothing else.
inline BeamformResult beamform(const RawDataCube& raw, const ExperimentConfig& c, Method m) {
  validate_method(c, m);
  check_cube_matches(raw, c.probe, c.scan);
  require(!raw.is_compensated, ErrorCode::invalid_argument, "raw cube is already delay-compensated");
  const auto grid = c.grid();
  const auto used = emissions_needed(c, m);

  BeamformResult res;
  const auto start = std::chrono::steady_clock::now();
  const RawDataCube analytic = raw.is_analytic ? raw : analytic_signal(raw, used);
  const RawDataCube cube = compensate_delays(analytic, c.probe, c.scan, used);
  switch (m) {
    case Method::das:
      res.image = das_beamform(cube, c.apodization, c.scan, grid);
      break;
    case Method::mv:
      res.image = mv_beamform(cube, c.mv, c.scan, grid);
      break;
    case Method::bs_capon: {
      MvOptions o = c.bs_capon;
      o.butler = true;
      res.image = mv_beamform(cube, o, c.scan, grid);
      break;
    }
    case Method::multibeam_capon:
      res.image = multibeam_capon_beamform(cube, c.probe, c.multibeam, c.scan, grid);
      break;
    case Method::iaa:
      res.image = iaa_beamform(cube, c.probe, c.iaa, c.scan, grid);
      break;
    case Method::bp:
    case Method::ls: {
      // The forward model describes the plain channel average, so the
      // observation is formed without receive apodization.
      const RfImage das = das_beamform(cube, Apodization::none, c.scan, grid, used);
      InverseReport rep;
      res.image = inverse_beamform(das, c.probe, m == Method::bp ? c.bp : c.ls, &rep);
      res.nonconverged_depths = rep.nonconverged_depths;
      break;
    }
  }
  res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  res.emissions_used = used.empty() ? raw.emissions() : static_cast<int>(used.size());
  res.image.provenance["emissions_used"] = std::to_string(res.emissions_used);
  res.image.provenance["seed"] = std::to_string(c.seed);
  if (!c.preset.empty()) res.image.provenance["preset"] = c.preset;
  return res;
}

inline RfImage envelope_of(const RfImage& img) {
  return img.kind == ImageKind::envelope ? img : envelope(img);
}

struct MetricsRow {
  std::optional<double> cnr, snr, rg;
};

/// CNR between the first two regions, SNR in the first region (the speckle
/// reference by convention) and RG against the reference image.
inline MetricsRow compute_metrics(const RfImage& img, const std::vector<RegionSpec>& regions,
                                  const RfImage& reference) {
  const RfImage env = envelope_of(img);
  MetricsRow row;
  if (regions.size() >= 2) row.cnr = cnr(env, regions[0], regions[1]);
  if (!regions.empty()) row.snr = snr(env, regions[0]);
  row.rg = resolution_gain(envelope_of(reference), env);
  return row;
}

inline std::string metrics_csv_line(const std::string& method, const MetricsRow& r) {
  auto cell = [](const std::optional<double>& v) { return v ? format_csv_number(*v) : std::string(); };
  return method + "," + cell(r.cnr) + "," + cell(r.snr) + "," + cell(r.rg);
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc | std::ios::binary);
  if (!os) throw Error(ErrorCode::io_error, "cannot open for writing: " + path.string());
  os << text;
  if (!os) throw Error(ErrorCode::io_error, "write failed: " + path.string());
}

inline void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::io_error, "cannot create directory " + dir.string() + ": " + ec.message());
}

inline RawDataCube simulate(const ExperimentConfig& c, const Phantom& ph) {
  const auto pulse = ExcitationPulse::make(c.pulse_cycles, c.probe.center_frequency, c.probe.sampling_frequency);
  return simulate_raw(ph, c.probe, pulse, c.scan, c.simulation_options());
}

/// Writes raw.cube and phantom.txt into `out`.
inline int cmd_simulate(const ExperimentConfig& c, const std::filesystem::path& out, std::ostream& log) {
  ensure_dir(out);
  const Phantom ph = build_phantom(c);
  const RawDataCube raw = simulate(c, ph);
  write_cube(raw, out / "raw.cube");
  write_phantom(ph, out / "phantom.txt");
  log << "simulated M=" << raw.channels() << " N=" << raw.samples() << " K=" << raw.emissions()
      << " scatterers=" << ph.scatterers.size() << " -> " << (out / "raw.cube").string() << "\n";
  return 0;
}

/// B-mode for display; an all-zero image maps to the dynamic-range floor.
inline BModeImage display_image(const RfImage& img, double dynamic_range) {
  const RfImage env = envelope_of(img);
  if (env.data.size() && env.data.real().maxCoeff() > 0.0) return log_compress(env, dynamic_range);
  BModeImage b;
  b.pixels = RMatrix::Constant(env.num_lines(), env.num_samples(), -dynamic_range);
  b.dynamic_range = dynamic_range;
  b.scan = env.scan;
  b.grid = env.grid;
  b.provenance = env.provenance;
  return b;
}

/// Writes <method>.img, <method>.pgm (+ .json sidecar) and
/// <method>.timing.json into `out`.
inline BeamformResult write_beamformed(const RawDataCube& raw, const ExperimentConfig& c, Method m,
                                       const std::filesystem::path& out, std::ostream& log) {
  ensure_dir(out);
  BeamformResult res = beamform(raw, c, m);
  const std::string name = to_string(m);
  write_image(res.image, out / (name + ".img"));
  write_pgm(display_image(res.image, c.dynamic_range), out / (name + ".pgm"));
  json timing{{"method", name},
               {"wall_time_s", res.wall_seconds},
               {"emissions_used", res.emissions_used},
               {"nonconverged_depths", res.nonconverged_depths}};
  write_text_file(out / (name + ".timing.json"), timing.dump(2) + "\n");
  log << "beamformed method=" << name << " emissions_used=" << res.emissions_used
      << " wall_time_s=" << format_csv_number(res.wall_seconds) << " -> "
      << (out / (name + ".img")).string() << "\n";
  return res;
}

inline int cmd_beamform(const ExperimentConfig& c, const std::filesystem::path& raw_path,
                        const std::filesystem::path& out, std::ostream& log) {
  const RawDataCube raw = read_cube(raw_path);
  const auto res = write_beamformed(raw, c, c.method, out, log);
  if (res.nonconverged_depths > 0)
    throw Error(ErrorCode::not_converged, std::to_string(res.nonconverged_depths) +
                                              " depths hit the iteration limit; image written anyway");
  return 0;
}

inline constexpr const char* kMetricsHeader = "method,cnr,snr,rg\n";

inline int cmd_metrics(const std::filesystem::path& image_path, const std::vector<RegionSpec>& regions,
                       const std::optional<std::filesystem::path>& reference_path,
                       const std::filesystem::path& out_csv, std::ostream& log) {
  if (!reference_path)
    throw Error(ErrorCode::invalid_argument, "resolution gain needs --reference <das image>");
  const RfImage img = read_image(image_path);
  const RfImage ref = read_image(*reference_path);
  const auto row = compute_metrics(img, regions, ref);
  const auto it = img.provenance.find("method");
  const std::string line = metrics_csv_line(it == img.provenance.end() ? "unknown" : it->second, row);
  write_text_file(out_csv, std::string(kMetricsHeader) + line + "\n");
  log << line << "\n";
  return 0;
}

inline int cmd_profile(const std::filesystem::path& image_path, double depth, int average_n,
                       const std::filesystem::path& out_csv, std::ostream& log) {
  const RfImage img = read_image(image_path);
  const auto env = envelope_of(img);
  const double d0 = env.grid.depth(0), d1 = env.grid.depth(env.num_samples() - 1);
  require(depth >= d0 && depth <= d1, ErrorCode::index_out_of_range,
          "profile depth " + format_csv_number(depth) + " m outside image range [" + format_csv_number(d0) +
              ", " + format_csv_number(d1) + "]");
  write_profile_csv(lateral_profile(env, depth, average_n), out_csv);
  log << "profile depth=" << format_csv_number(depth) << " average_n=" << average_n << " -> "
      << out_csv.string() << "\n";
  return 0;
}

/// Runs DAS plus every listed method on one raw cube and writes
/// compare.csv (method, cnr, snr, rg, wall_time_s, emissions_used) with
/// DAS as the RG reference.
inline int cmd_compare(const ExperimentConfig& c, const std::optional<std::filesystem::path>& raw_path,
                       const std::filesystem::path& out, std::ostream& log) {
  ensure_dir(out);
  const RawDataCube raw = raw_path ? read_cube(*raw_path) : simulate(c, build_phantom(c));
  std::vector<Method> methods{Method::das};
  for (Method m : c.compare)
    if (m != Method::das) methods.push_back(m);

  std::string csv = "method,cnr,snr,rg,wall_time_s,emissions_used\n";
  std::optional<RfImage> reference;
  int nonconverged = 0;
  for (Method m : methods) {
    const auto res = write_beamformed(raw, c, m, out, log);
    if (!reference) reference = res.image;
    nonconverged += res.nonconverged_depths;
    const auto row = compute_metrics(res.image, c.regions, *reference);
    csv += metrics_csv_line(to_string(m), row) + "," + format_csv_number(res.wall_seconds) + "," +
           std::to_string(res.emissions_used) + "\n";
  }
  write_text_file(out / "compare.csv", csv);
  log << csv;
  if (nonconverged > 0)
    throw Error(ErrorCode::not_converged,
                std::to_string(nonconverged) + " depths hit the iteration limit; outputs written anyway");
  return 0;
}

}  // namespace usbf
