#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "usbf/adaptive_bf.hpp"
#include "usbf/classic_bf.hpp"
#include "usbf/inverse_bf.hpp"
#include "usbf/metrics.hpp"
#include "usbf/phantom.hpp"

namespace usbf {

using nlohmann::json;

enum class Method { das, mv, bs_capon, multibeam_capon, iaa, bp, ls };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::das: return "das";
    case Method::mv: return "mv";
    case Method::bs_capon: return "bs_capon";
    case Method::multibeam_capon: return "multibeam_capon";
    case Method::iaa: return "iaa";
    case Method::bp: return "bp";
    case Method::ls: return "ls";
  }
  return "unknown";
}

inline Method parse_method(const std::string& s) {
  for (Method m : {Method::das, Method::mv, Method::bs_capon, Method::multibeam_capon, Method::iaa,
                   Method::bp, Method::ls})
    if (to_string(m) == s) return m;
  throw Error(ErrorCode::invalid_config, "unknown method '" + s + "'");
}

enum class PhantomKind { none, points, cyst, file };

struct PhantomSpec {
  PhantomKind kind = PhantomKind::points;
  double radius = 5e-3;
  double depth = 80e-3;
  int num_scatterers = 8000;
  double half_width = 15e-3;
  double half_height = 10e-3;
  std::string path;
};

struct ProfileSpec {
  double depth = 0.0;
  int average_n = 1;
};

struct ExperimentConfig {
  std::string preset;
  ProbeGeometry probe;
  ScanPlan scan;
  PhantomSpec phantom;
  int pulse_cycles = 2;
  bool transmit_weighting = true;
  std::optional<double> noise_snr_db;
  Method method = Method::das;
  Apodization apodization = Apodization::hanning;
  MvOptions mv;
  MvOptions bs_capon{0, 5, -1, true};
  MultibeamOptions multibeam;
  IaaOptions iaa;
  SolveConfig bp{0.5, Prior::laplacian_l1};
  SolveConfig ls{0.7, Prior::gaussian_l2};
  double dynamic_range = 60.0;
  std::vector<RegionSpec> regions;
  ProfileSpec profile;
  std::vector<Method> compare;
  std::uint64_t seed = 1;
  std::string output_dir = "out";

  SampleGrid grid() const { return SampleGrid::make(scan, probe); }

  SimulationOptions simulation_options() const {
    SimulationOptions o;
    o.transmit_weighting = transmit_weighting;
    o.noise_snr_db = noise_snr_db;
    o.noise_seed = detail::splitmix64(seed ^ 0x6e6f697365ULL);
    return o;
  }
};

namespace detail {

inline void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw Error(ErrorCode::invalid_config, "'" + where + "' must be an object");
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k))
      throw Error(ErrorCode::invalid_config,
                  "unknown key '" + (where.empty() ? k : where + "." + k) + "'");
}

template <typename T>
T value(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw Error(ErrorCode::invalid_config, "missing key '" + where + "." + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::invalid_config, "bad value for '" + where + "." + key + "'");
  }
}

inline double deg(double d) { return d * kPi / 180.0; }

inline json region_json(const char* name, double lateral, double axial, double radius) {
  return {{"name", name}, {"shape", "disc"}, {"lateral", lateral}, {"axial", axial}, {"radius", radius}};
}

inline json base_preset() {
  return {
      {"probe",
       {{"num_elements", 32},
        {"pitch", 256e-6},
        {"center_frequency", 3e6},
        {"sampling_frequency", 100e6},
        {"sound_speed", 1540.0}}},
      {"scan",
       {{"mode", "angle"},
        {"num_lines", 65},
        {"half_angle_deg", 6.0},
        {"half_width", 10e-3},
        {"depth_min", 60e-3},
        {"depth_max", 71e-3},
        {"focus_depth", 65e-3}}},
      {"phantom",
       {{"type", "points"},
        {"radius", 5e-3},
        {"depth", 80e-3},
        {"num_scatterers", 8000},
        {"half_width", 15e-3},
        {"half_height", 10e-3},
        {"path", ""}}},
      {"acquisition", {{"pulse_cycles", 2}, {"transmit_weighting", true}, {"noise_snr_db", nullptr}}},
      {"method", "bp"},
      {"das", {{"apodization", "hanning"}}},
      {"mv", {{"subaperture", 0}, {"half_window", 5}, {"loading", -1.0}}},
      {"bs_capon", {{"subaperture", 0}, {"half_window", 5}, {"loading", -1.0}}},
      {"multibeam_capon", {{"beams", 0}, {"loading", 0.01}}},
      {"iaa", {{"iterations", 15}, {"beams", 0}, {"loading", 1e-3}}},
      {"bp", {{"reg_lambda", 0.5}, {"max_iters", 5000}, {"tol", 1e-4}, {"decimation", 5}}},
      {"ls", {{"reg_lambda", 0.7}, {"decimation", 5}}},
      {"imaging", {{"dynamic_range", 60.0}}},
      {"regions", json::array()},
      {"profile", {{"depth", 65e-3}, {"average_n", 1}}},
      {"compare", {"das", "mv", "bp", "ls"}},
      {"seed", 1},
      {"output_dir", "out"},
  };
}

}  // namespace detail

inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"point_scatterers", "cyst", "carotid"};
  return names;
}

/// Complete configuration document for a named preset.
inline json preset_json(const std::string& name) {
  json j = detail::base_preset();
  if (name == "point_scatterers") {
    j["compare"] = {"das", "mv", "bs_capon", "multibeam_capon", "iaa", "bp", "ls"};
  } else if (name == "cyst") {
    j["probe"]["sampling_frequency"] = 50e6;
    j["scan"]["half_angle_deg"] = 10.0;
    j["scan"]["depth_min"] = 72e-3;
    j["scan"]["depth_max"] = 88e-3;
    j["scan"]["focus_depth"] = 80e-3;
    j["phantom"]["type"] = "cyst";
    j["ls"]["reg_lambda"] = 1.0;
    j["regions"] = {detail::region_json("speckle", 9e-3, 80e-3, 3e-3),
                    detail::region_json("cyst", 0.0, 80e-3, 3e-3)};
    j["profile"] = {{"depth", 80e-3}, {"average_n", 15}};
  } else if (name == "carotid") {
    j["probe"]["sampling_frequency"] = 50e6;
    j["scan"]["half_angle_deg"] = 10.0;
    j["scan"]["depth_min"] = 14e-3;
    j["scan"]["depth_max"] = 30e-3;
    j["scan"]["focus_depth"] = 22e-3;
    j["phantom"] = {{"type", "cyst"},  {"radius", 3e-3},      {"depth", 22e-3}, {"num_scatterers", 6000},
                    {"half_width", 8e-3}, {"half_height", 8e-3}, {"path", ""}};
    j["bp"]["reg_lambda"] = 0.2;
    j["ls"]["reg_lambda"] = 0.5;
    j["regions"] = {detail::region_json("tissue", 2.5e-3, 27e-3, 1e-3),
                    detail::region_json("lumen", 0.0, 22e-3, 1e-3)};
    j["profile"] = {{"depth", 22e-3}, {"average_n", 15}};
    j["compare"] = {"das", "bp", "ls"};
  } else {
    throw Error(ErrorCode::invalid_config, "unknown preset '" + name + "'");
  }
  j["preset"] = name;
  return j;
}

inline RegionSpec parse_region(const json& r) {
  detail::check_keys(r, "regions[]", {"name", "shape", "lateral", "axial", "radius", "half_lateral", "half_axial"});
  RegionSpec s;
  s.name = detail::value<std::string>(r, "name", "regions[]");
  const auto shape = r.value("shape", std::string("rectangle"));
  if (shape == "disc") {
    s.shape = RegionShape::disc;
    s.radius = detail::value<double>(r, "radius", "regions[]");
  } else if (shape == "rectangle") {
    s.shape = RegionShape::rectangle;
    s.half_lateral = detail::value<double>(r, "half_lateral", "regions[]");
    s.half_axial = detail::value<double>(r, "half_axial", "regions[]");
  } else {
    throw Error(ErrorCode::invalid_config, "unknown region shape '" + shape + "'");
  }
  s.lateral = detail::value<double>(r, "lateral", "regions[]");
  s.axial = detail::value<double>(r, "axial", "regions[]");
  s.validate();
  return s;
}

/// Accepts either an array of regions or an object with a "regions" array.
inline std::vector<RegionSpec> parse_regions(const json& j) {
  const json* arr = &j;
  if (j.is_object()) {
    detail::check_keys(j, "", {"regions"});
    arr = &j.at("regions");
  }
  if (!arr->is_array()) throw Error(ErrorCode::invalid_config, "regions must be an array");
  std::vector<RegionSpec> out;
  for (const auto& r : *arr) out.push_back(parse_region(r));
  return out;
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::io_error, "cannot open for reading: " + path.string());
  try {
    return json::parse(is);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::invalid_config, path.string() + ": " + e.what());
  }
}

/// Checks the parameters of one method against the probe and scan plan.
inline void validate_method(const ExperimentConfig& c, Method m) {
  const int M = c.probe.num_elements, K = c.scan.num_lines();
  auto bad = [](const std::string& what) { throw Error(ErrorCode::invalid_config, what); };
  switch (m) {
    case Method::das: break;
    case Method::mv:
    case Method::bs_capon: {
      const auto& o = m == Method::mv ? c.mv : c.bs_capon;
      const std::string name = to_string(m);
      if (o.subaperture < 0 || o.resolved_subaperture(M) > M)
        bad(name + ".subaperture must lie in [1, M] (0 selects M/8)");
      if (o.half_window < 0) bad(name + ".half_window must be >= 0");
      break;
    }
    case Method::multibeam_capon:
      if (c.multibeam.beams < 0 || c.multibeam.resolved_beams(M) > M)
        bad("multibeam_capon.beams must lie in [1, M] (0 selects M/2+1)");
      if (c.multibeam.loading < 0.0) bad("multibeam_capon.loading must be >= 0");
      break;
    case Method::iaa:
      if (c.iaa.iterations < 1) bad("iaa.iterations must be >= 1");
      if (c.iaa.beams < 0 || c.iaa.beams > M) bad("iaa.beams must lie in [0, M]");
      if (!(c.iaa.loading >= 0.0)) bad("iaa.loading must be >= 0");
      break;
    case Method::bp:
    case Method::ls: {
      const auto& s = m == Method::bp ? c.bp : c.ls;
      const std::string name = to_string(m);
      if (!(s.reg_lambda >= 0.0) || !std::isfinite(s.reg_lambda)) bad(name + ".reg_lambda must be >= 0");
      if (s.decimation < 1 || K % s.decimation != 0)
        bad(name + ".decimation must divide the number of scanlines (" + std::to_string(K) + ")");
      if (m == Method::bp && (s.max_iters < 1 || !(s.tol > 0.0)))
        bad("bp.max_iters must be >= 1 and bp.tol > 0");
      break;
    }
  }
}

/// Parses a complete configuration document. Every key must be known;
/// missing keys are an error (merge onto a preset to get defaults).
inline ExperimentConfig parse_config(const json& j) {
  using detail::check_keys;
  using detail::value;
  check_keys(j, "", {"preset", "probe", "scan", "phantom", "acquisition", "method", "das", "mv", "bs_capon",
                     "multibeam_capon", "iaa", "bp", "ls", "imaging", "regions", "profile", "compare", "seed",
                     "output_dir"});
  ExperimentConfig c;
  c.preset = j.value("preset", std::string());

  const json& p = j.at("probe");
  check_keys(p, "probe", {"num_elements", "pitch", "center_frequency", "sampling_frequency", "sound_speed"});
  c.probe.num_elements = value<int>(p, "num_elements", "probe");
  c.probe.pitch = value<double>(p, "pitch", "probe");
  c.probe.center_frequency = value<double>(p, "center_frequency", "probe");
  c.probe.sampling_frequency = value<double>(p, "sampling_frequency", "probe");
  c.probe.sound_speed = value<double>(p, "sound_speed", "probe");

  const json& s = j.at("scan");
  check_keys(s, "scan", {"mode", "num_lines", "half_angle_deg", "half_width", "depth_min", "depth_max", "focus_depth"});
  const auto mode = value<std::string>(s, "mode", "scan");
  const int K = value<int>(s, "num_lines", "scan");
  if (K < 1) throw Error(ErrorCode::invalid_config, "scan.num_lines must be >= 1");
  const double dmin = value<double>(s, "depth_min", "scan");
  const double dmax = value<double>(s, "depth_max", "scan");
  const double focus = value<double>(s, "focus_depth", "scan");
  if (mode == "angle") {
    const double half = value<double>(s, "half_angle_deg", "scan");
    if (!(half > 0.0 && half < 90.0)) throw Error(ErrorCode::invalid_config, "scan.half_angle_deg must lie in (0, 90)");
    c.scan = ScanPlan::uniform_angle(K, detail::deg(half), dmin, dmax, focus);
  } else if (mode == "lateral") {
    const double half = value<double>(s, "half_width", "scan");
    if (!(half > 0.0)) throw Error(ErrorCode::invalid_config, "scan.half_width must be positive");
    c.scan = ScanPlan::uniform_lateral(K, half, dmin, dmax, focus);
  } else {
    throw Error(ErrorCode::invalid_config, "scan.mode must be 'angle' or 'lateral'");
  }

  const json& ph = j.at("phantom");
  check_keys(ph, "phantom", {"type", "radius", "depth", "num_scatterers", "half_width", "half_height", "path"});
  const auto type = value<std::string>(ph, "type", "phantom");
  if (type == "none") c.phantom.kind = PhantomKind::none;
  else if (type == "points") c.phantom.kind = PhantomKind::points;
  else if (type == "cyst") c.phantom.kind = PhantomKind::cyst;
  else if (type == "file") c.phantom.kind = PhantomKind::file;
  else throw Error(ErrorCode::invalid_config, "phantom.type must be none, points, cyst or file");
  c.phantom.radius = ph.value("radius", c.phantom.radius);
  c.phantom.depth = ph.value("depth", c.phantom.depth);
  c.phantom.num_scatterers = ph.value("num_scatterers", c.phantom.num_scatterers);
  c.phantom.half_width = ph.value("half_width", c.phantom.half_width);
  c.phantom.half_height = ph.value("half_height", c.phantom.half_height);
  c.phantom.path = ph.value("path", std::string());
  if (c.phantom.kind == PhantomKind::file && c.phantom.path.empty())
    throw Error(ErrorCode::invalid_config, "phantom.path is required for type 'file'");

  const json& a = j.at("acquisition");
  check_keys(a, "acquisition", {"pulse_cycles", "transmit_weighting", "noise_snr_db"});
  c.pulse_cycles = value<int>(a, "pulse_cycles", "acquisition");
  c.transmit_weighting = value<bool>(a, "transmit_weighting", "acquisition");
  if (a.contains("noise_snr_db") && !a.at("noise_snr_db").is_null())
    c.noise_snr_db = value<double>(a, "noise_snr_db", "acquisition");

  c.method = parse_method(value<std::string>(j, "method", ""));

  const json& d = j.at("das");
  check_keys(d, "das", {"apodization"});
  const auto apod = value<std::string>(d, "apodization", "das");
  if (apod == "none") c.apodization = Apodization::none;
  else if (apod == "hanning") c.apodization = Apodization::hanning;
  else if (apod == "hamming") c.apodization = Apodization::hamming;
  else throw Error(ErrorCode::invalid_config, "das.apodization must be none, hanning or hamming");

  for (const char* key : {"mv", "bs_capon"}) {
    const json& m = j.at(key);
    check_keys(m, key, {"subaperture", "half_window", "loading"});
    MvOptions& o = std::string(key) == "mv" ? c.mv : c.bs_capon;
    o.subaperture = value<int>(m, "subaperture", key);
    o.half_window = value<int>(m, "half_window", key);
    o.loading = value<double>(m, "loading", key);
  }
  const json& mb = j.at("multibeam_capon");
  check_keys(mb, "multibeam_capon", {"beams", "loading"});
  c.multibeam.beams = value<int>(mb, "beams", "multibeam_capon");
  c.multibeam.loading = value<double>(mb, "loading", "multibeam_capon");
  const json& ia = j.at("iaa");
  check_keys(ia, "iaa", {"iterations", "beams", "loading"});
  c.iaa.iterations = value<int>(ia, "iterations", "iaa");
  c.iaa.beams = value<int>(ia, "beams", "iaa");
  c.iaa.loading = value<double>(ia, "loading", "iaa");

  const json& bp = j.at("bp");
  check_keys(bp, "bp", {"reg_lambda", "max_iters", "tol", "decimation"});
  c.bp.reg_lambda = value<double>(bp, "reg_lambda", "bp");
  c.bp.max_iters = value<int>(bp, "max_iters", "bp");
  c.bp.tol = value<double>(bp, "tol", "bp");
  c.bp.decimation = value<int>(bp, "decimation", "bp");
  const json& ls = j.at("ls");
  check_keys(ls, "ls", {"reg_lambda", "decimation"});
  c.ls.reg_lambda = value<double>(ls, "reg_lambda", "ls");
  c.ls.decimation = value<int>(ls, "decimation", "ls");

  const json& im = j.at("imaging");
  check_keys(im, "imaging", {"dynamic_range"});
  c.dynamic_range = value<double>(im, "dynamic_range", "imaging");
  if (!(c.dynamic_range > 0.0)) throw Error(ErrorCode::invalid_config, "imaging.dynamic_range must be positive");

  c.regions = parse_regions(j.at("regions"));
  const json& pr = j.at("profile");
  check_keys(pr, "profile", {"depth", "average_n"});
  c.profile.depth = value<double>(pr, "depth", "profile");
  c.profile.average_n = value<int>(pr, "average_n", "profile");
  if (c.profile.average_n < 1) throw Error(ErrorCode::invalid_config, "profile.average_n must be >= 1");

  if (!j.at("compare").is_array()) throw Error(ErrorCode::invalid_config, "compare must be a list of methods");
  for (const auto& m : j.at("compare")) {
    if (!m.is_string()) throw Error(ErrorCode::invalid_config, "compare must be a list of methods");
    c.compare.push_back(parse_method(m.get<std::string>()));
  }
  c.seed = value<std::uint64_t>(j, "seed", "");
  c.output_dir = value<std::string>(j, "output_dir", "");

  try {
    c.probe.validate();
    c.scan.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::invalid_config, e.what());
  }
  if (c.pulse_cycles < 1) throw Error(ErrorCode::invalid_config, "acquisition.pulse_cycles must be >= 1");
  validate_method(c, c.method);
  for (Method m : c.compare) validate_method(c, m);
  return c;
}

/// The user document is merged (RFC 7386) onto the preset it names, or onto
/// `preset` when given, or onto point_scatterers.
inline ExperimentConfig load_config(const std::optional<std::filesystem::path>& path,
                                    const std::optional<std::string>& preset = std::nullopt) {
  json user = path ? read_json_file(*path) : json::object();
  if (!user.is_object()) throw Error(ErrorCode::invalid_config, "configuration must be a JSON object");
  std::string name = "point_scatterers";
  if (user.contains("preset")) {
    if (!user.at("preset").is_string()) throw Error(ErrorCode::invalid_config, "preset must be a string");
    name = user.at("preset").get<std::string>();
  }
  if (preset) name = *preset;
  json doc = preset_json(name);
  user.erase("preset");
  doc.merge_patch(user);
  return parse_config(doc);
}

inline Phantom build_phantom(const ExperimentConfig& c) {
  switch (c.phantom.kind) {
    case PhantomKind::none: {
      Phantom p;
      p.seed = c.seed;
      return p;
    }
    case PhantomKind::points: {
      Phantom p = point_reflector_phantom();
      p.seed = c.seed;
      return p;
    }
    case PhantomKind::cyst:
      return cyst_phantom(c.phantom.radius, c.phantom.depth, c.phantom.num_scatterers, c.seed,
                          c.phantom.half_width, c.phantom.half_height);
    case PhantomKind::file:
      return read_phantom(c.phantom.path);
  }
  return {};
}

}  // namespace usbf
