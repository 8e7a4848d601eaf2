#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "usbf/commands.hpp"

namespace {

struct ConfigFlags {
  std::optional<std::string> config;
  std::optional<std::string> preset;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> method;
  std::optional<std::string> out;
};

void add_config_flags(CLI::App* cmd, ConfigFlags& f) {
  cmd->add_option("--config", f.config, "JSON configuration file");
  cmd->add_option("--preset", f.preset, "point_scatterers, cyst or carotid");
  cmd->add_option("--seed", f.seed, "phantom and noise seed");
}

usbf::ExperimentConfig resolve(const ConfigFlags& f) {
  auto c = usbf::load_config(f.config ? std::optional<std::filesystem::path>(*f.config) : std::nullopt,
                             f.preset);
  if (f.seed) c.seed = *f.seed;
  if (f.method) {
    c.method = usbf::parse_method(*f.method);
    usbf::validate_method(c, c.method);
  }
  if (f.out) c.output_dir = *f.out;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ultrasound beamforming toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  int threads = 0;
  app.add_option("--threads", threads, "worker thread cap (0: all cores)")->check(CLI::NonNegativeNumber);

  ConfigFlags sim_flags;
  auto* sim = app.add_subcommand("simulate", "simulate raw channel data");
  add_config_flags(sim, sim_flags);
  sim->add_option("--out", sim_flags.out, "output directory");

  ConfigFlags bf_flags;
  std::optional<std::string> bf_raw;
  auto* bf = app.add_subcommand("beamform", "beamform a raw cube");
  add_config_flags(bf, bf_flags);
  bf->add_option("--method", bf_flags.method, "das, mv, bs_capon, multibeam_capon, iaa, bp or ls");
  bf->add_option("--raw", bf_raw, "raw cube (default: <out>/raw.cube)");
  bf->add_option("--out", bf_flags.out, "output directory");

  ConfigFlags met_flags;
  std::string met_image, met_out = "metrics.csv";
  std::optional<std::string> met_regions, met_reference;
  auto* met = app.add_subcommand("metrics", "CNR, SNR and resolution gain of an image");
  met->add_option("image", met_image, "image file")->required();
  met->add_option("--reference", met_reference, "DAS image used for resolution gain");
  met->add_option("--regions", met_regions, "regions JSON (default: regions of the configuration)");
  met->add_option("--config", met_flags.config, "JSON configuration file");
  met->add_option("--preset", met_flags.preset, "preset providing the regions");
  met->add_option("--out", met_out, "output CSV");

  std::string prof_image, prof_out = "profile.csv";
  double prof_depth = 0.0;
  int prof_avg = 1;
  auto* prof = app.add_subcommand("profile", "lateral profile of an image at one depth");
  prof->add_option("image", prof_image, "image file")->required();
  prof->add_option("--depth", prof_depth, "depth in meters")->required();
  prof->add_option("--average-n", prof_avg, "number of depth samples averaged")->check(CLI::PositiveNumber);
  prof->add_option("--out", prof_out, "output CSV");

  ConfigFlags cmp_flags;
  std::optional<std::string> cmp_raw;
  std::vector<std::string> cmp_methods;
  auto* cmp = app.add_subcommand("compare", "run several methods and tabulate metrics and timing");
  add_config_flags(cmp, cmp_flags);
  cmp->add_option("--raw", cmp_raw, "raw cube (default: simulate from the configuration)");
  cmp->add_option("--method", cmp_methods, "methods to run (default: configuration list)")->delimiter(',');
  cmp->add_option("--out", cmp_flags.out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << usbf::error_line("usage", e.what()) << "\n";
    return 2;
  }

  try {
    usbf::set_max_threads(threads);
    if (*sim) {
      const auto c = resolve(sim_flags);
      return usbf::cmd_simulate(c, c.output_dir, std::cout);
    }
    if (*bf) {
      const auto c = resolve(bf_flags);
      const std::filesystem::path raw =
          bf_raw ? std::filesystem::path(*bf_raw) : std::filesystem::path(c.output_dir) / "raw.cube";
      return usbf::cmd_beamform(c, raw, c.output_dir, std::cout);
    }
    if (*met) {
      std::vector<usbf::RegionSpec> regions;
      if (met_regions)
        regions = usbf::parse_regions(usbf::read_json_file(*met_regions));
      else if (met_flags.config || met_flags.preset)
        regions = resolve(met_flags).regions;
      const auto ref = met_reference ? std::optional<std::filesystem::path>(*met_reference) : std::nullopt;
      return usbf::cmd_metrics(met_image, regions, ref, met_out, std::cout);
    }
    if (*prof) return usbf::cmd_profile(prof_image, prof_depth, prof_avg, prof_out, std::cout);
    if (*cmp) {
      auto c = resolve(cmp_flags);
      if (!cmp_methods.empty()) {
        c.compare.clear();
        for (const auto& m : cmp_methods) {
          c.compare.push_back(usbf::parse_method(m));
          usbf::validate_method(c, c.compare.back());
        }
      }
      const auto raw = cmp_raw ? std::optional<std::filesystem::path>(*cmp_raw) : std::nullopt;
      return usbf::cmd_compare(c, raw, c.output_dir, std::cout);
    }
  } catch (const usbf::Error& e) {
    std::cerr << usbf::error_line(usbf::to_string(e.code()), e.what()) << "\n";
    return usbf::exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << usbf::error_line("internal", e.what()) << "\n";
    return 1;
  }
  return 0;
}
