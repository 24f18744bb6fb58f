#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "biodiscover/aggregate.hpp"
#include "biodiscover/classify.hpp"
#include "biodiscover/eval.hpp"
#include "biodiscover/syndata.hpp"
#include "biodiscover/types.hpp"

namespace biodiscover::config {

struct GenerateConfig {
  std::string preset = "separable";  // preset cohort name, or "custom"
  std::vector<syndata::SpeciesModel> species;  // used when preset == "custom"
  std::vector<int> specimens_per_species;
  bool write_masks = false;
  bool keep_raw = false;
};

struct GridConfig {
  std::vector<int> exposures{1000, 1500, 2000};
  std::vector<double> apertures{3.8, 8.0, 16.0};
  // Index (aperture_idx, exposure_idx) of a cell rendered with heavy extra
  // blur; -1/-1 disables degradation.
  int degraded_aperture_idx = -1;
  int degraded_exposure_idx = -1;
  double degraded_blur_px = 14.0;
};

struct SimulateConfig {
  int n_specimens = 10;
  sim::RoutingRule routing;
  std::map<std::string, int> routing_by_species;  // names resolved at run time
};

struct RunConfig {
  std::filesystem::path data_root;
  std::filesystem::path output_dir = "out";
  CameraSettings settings{1000, 8.0};
  std::uint64_t seed = 42;
  eval::SplitFractions split;
  int n_reps = 10;
  agg::DecisionRule rule = agg::DecisionRule::MajorityVote;
  int theta_trigger = 50;
  classify::TrainSchedule schedule;
  std::vector<int> nmax_values{1, 2, 5, 10, 20, 50};
  int jobs = 1;
  bool debug_geometry = false;  // emit per-image crop geometry sidecars
  std::optional<std::filesystem::path> scores_file;  // external classifier scores
  GenerateConfig generate;
  GridConfig grid;
  SimulateConfig simulate;
  syndata::RenderSettings render;
  sim::SinkParams sink;
};

// Field-by-field validation problem; path is the dotted JSON pointer.
struct ConfigIssue {
  std::string path;
  std::string message;
};

// Parses a config JSON document. Environment variables override file values
// (BIODISCOVER_<PATH> with __ as the nesting separator, e.g.
// BIODISCOVER_PATHS__OUTPUT_DIR); explicit overrides win over both.
RunConfig parse_config(const std::string& json_text,
                       const std::map<std::string, std::string>& overrides = {},
                       std::vector<ConfigIssue>* issues = nullptr);

RunConfig load_config(const std::filesystem::path& path,
                      const std::map<std::string, std::string>& overrides = {});

std::string config_to_json(const RunConfig& cfg);

}  // namespace biodiscover::config
