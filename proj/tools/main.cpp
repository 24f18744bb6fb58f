// biodiscover command-line front end. Links the C API only: argument parsing
// happens here, everything else behind bd_run().
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "biodiscover.h"

namespace {

struct CommonFlags {
  std::string config_path;
  std::string data_root;
  std::string output_dir;
  std::string rule;
  std::string preset;
  std::string scores_file;
  std::vector<int> specimens;
  std::vector<int> nmax;
  std::int64_t seed = -1;
  int n_reps = -1;
  int jobs = -1;
  int exposure = -1;
  double aperture = -1.0;
  bool dry_run = false;
  bool keep_raw = false;
  bool write_masks = false;
  bool debug_geometry = false;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("-c,--config", flags.config_path, "Config JSON file");
  cmd->add_option("--data-root", flags.data_root, "Input data directory or manifest");
  cmd->add_option("-o,--output-dir", flags.output_dir, "Artifact output directory");
  cmd->add_option("--seed", flags.seed, "Master seed");
  cmd->add_option("--n-reps", flags.n_reps, "Number of split repetitions");
  cmd->add_option("--rule", flags.rule, "Decision rule: majority | weighted");
  cmd->add_option("--jobs", flags.jobs, "Parallel jobs for grid cells / repetitions");
  cmd->add_option("--nmax", flags.nmax, "N_max sweep values (0 = unlimited)");
  cmd->add_option("--preset", flags.preset,
                  "Synthetic cohort preset (separable, congener, texture, camera_blind, "
                  "noisy, twelve, custom)");
  cmd->add_option("--specimens", flags.specimens, "Specimens per species");
  cmd->add_option("--exposure", flags.exposure, "Exposure time in microseconds");
  cmd->add_option("--aperture", flags.aperture, "Aperture f-number");
  cmd->add_option("--scores", flags.scores_file, "External per-image score CSV");
  cmd->add_flag("--dry-run", flags.dry_run, "Validate config and inputs, write nothing");
  cmd->add_flag("--keep-raw", flags.keep_raw, "generate: also persist raw sensor frames");
  cmd->add_flag("--write-masks", flags.write_masks, "generate: persist detection masks");
  cmd->add_flag("--debug-geometry", flags.debug_geometry,
                "Emit per-image crop geometry sidecar JSON");
}

std::string read_config(const std::string& path) {
  if (path.empty()) return "{}";
  std::ifstream in(path);
  if (!in) {
    std::cerr << "error,cli,cannot open config file " << path << '\n';
    std::exit(2);
  }
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string overrides_from(const CommonFlags& flags) {
  nlohmann::json j = nlohmann::json::object();
  if (!flags.data_root.empty()) j["paths.data_root"] = flags.data_root;
  if (!flags.output_dir.empty()) j["paths.output_dir"] = flags.output_dir;
  if (flags.seed >= 0) j["seed"] = flags.seed;
  if (flags.n_reps > 0) j["n_reps"] = flags.n_reps;
  if (!flags.rule.empty()) j["rule"] = flags.rule;
  if (flags.jobs > 0) j["jobs"] = flags.jobs;
  if (!flags.nmax.empty()) j["nmax"] = flags.nmax;
  if (!flags.preset.empty()) j["generate.preset"] = flags.preset;
  if (!flags.specimens.empty()) j["generate.specimens_per_species"] = flags.specimens;
  if (flags.exposure > 0) j["settings.exposure_us"] = flags.exposure;
  if (flags.aperture > 0) j["settings.aperture_f"] = flags.aperture;
  if (!flags.scores_file.empty()) j["scores_file"] = flags.scores_file;
  if (flags.keep_raw) j["generate.keep_raw"] = true;
  if (flags.write_masks) j["generate.write_masks"] = true;
  if (flags.debug_geometry) j["debug_geometry"] = true;
  return j.dump();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"BIODISCOVER imaging/classification pipeline"};
  app.require_subcommand(0, 1);

  bool list_subcommands = false;
  app.add_flag("--list-subcommands", list_subcommands, "Print subcommand names as JSON");
  bool version = false;
  app.add_flag("--version", version, "Print library version");

  const std::vector<std::pair<std::string, std::string>> commands{
      {"generate", "Render a synthetic ground-truthed cohort"},
      {"ingest", "Validate a dataset manifest and report statistics"},
      {"calibrate", "Build a background model from calibration frames"},
      {"process", "Detect, crop and featurize raw captures"},
      {"screen", "3-sigma channel-mean outlier review list"},
      {"train", "Train the baseline classifier on the first split"},
      {"evaluate", "Repeated-split specimen-level evaluation"},
      {"grid", "Evaluate a camera-settings grid (aperture rows, exposure columns)"},
      {"ablate-cameras", "Single-camera vs both-camera comparison"},
      {"sweep-nmax", "Accuracy vs images-per-specimen cap"},
      {"biomass-fit", "Per-species log-log dry-weight regressions"},
      {"simulate", "Device pass: drop, image, flush, route"},
  };

  std::map<std::string, CommonFlags> flags;
  for (const auto& [name, desc] : commands) add_common(app.add_subcommand(name, desc), flags[name]);

  CLI11_PARSE(app, argc, argv);

  if (version) {
    std::cout << bd_version() << '\n';
    return 0;
  }
  if (list_subcommands) {
    std::cout << bd_subcommands() << '\n';
    return 0;
  }
  if (app.get_subcommands().empty()) {
    std::cerr << app.help();
    return 2;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  const CommonFlags& f = flags[name];
  const std::string config = read_config(f.config_path);
  const std::string overrides = overrides_from(f);

  char* report = nullptr;
  bd_status status = bd_run(name.c_str(), config.c_str(), overrides.c_str(),
                            f.dry_run ? 1 : 0, &report);
  if (report) {
    std::cout << report << '\n';
    bd_string_free(report);
  }
  if (status != BD_OK) std::cerr << "error,cli," << bd_last_error() << '\n';
  // BD_ERR_ARG folds into the config exit code.
  return status == BD_ERR_ARG ? 2 : static_cast<int>(status);
}
