#include "biodiscover/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "biodiscover/errors.hpp"

extern char** environ;

namespace biodiscover::config {

using nlohmann::json;

namespace {

constexpr const char* kEnvPrefix = "BIODISCOVER_";

// BIODISCOVER_SCHEDULE__BATCH_SIZE=64 -> doc["schedule"]["batch_size"] = 64.
void apply_env_overrides(json& doc) {
  for (char** env = environ; *env != nullptr; ++env) {
    std::string entry(*env);
    if (entry.rfind(kEnvPrefix, 0) != 0) continue;
    const auto eq = entry.find('=');
    if (eq == std::string::npos) continue;
    std::string key = entry.substr(std::strlen(kEnvPrefix), eq - std::strlen(kEnvPrefix));
    std::string value = entry.substr(eq + 1);

    std::vector<std::string> path;
    std::size_t pos = 0;
    while (pos <= key.size()) {
      auto sep = key.find("__", pos);
      std::string part = key.substr(pos, sep == std::string::npos ? std::string::npos : sep - pos);
      std::transform(part.begin(), part.end(), part.begin(),
                     [](unsigned char c) { return std::tolower(c); });
      path.push_back(part);
      if (sep == std::string::npos) break;
      pos = sep + 2;
    }

    json* node = &doc;
    for (std::size_t i = 0; i + 1 < path.size(); ++i) node = &(*node)[path[i]];
    json parsed = json::parse(value, nullptr, false);
    (*node)[path.back()] = parsed.is_discarded() ? json(value) : parsed;
  }
}

void apply_dotted_override(json& doc, const std::string& dotted, const std::string& value) {
  std::vector<std::string> path;
  std::istringstream ss(dotted);
  std::string part;
  while (std::getline(ss, part, '.')) path.push_back(part);
  if (path.empty()) return;
  json* node = &doc;
  for (std::size_t i = 0; i + 1 < path.size(); ++i) node = &(*node)[path[i]];
  json parsed = json::parse(value, nullptr, false);
  (*node)[path.back()] = parsed.is_discarded() ? json(value) : parsed;
}

class Extractor {
 public:
  explicit Extractor(std::vector<ConfigIssue>& issues) : issues_(issues) {}

  template <class T>
  T get(const json& doc, const std::string& path, T fallback) {
    const json* node = resolve(doc, path);
    if (!node || node->is_null()) return fallback;
    try {
      return node->get<T>();
    } catch (const json::exception&) {
      issues_.push_back({path, "wrong type, expected " + type_name<T>()});
      return fallback;
    }
  }

  void require(bool ok, const std::string& path, const std::string& message) {
    if (!ok) issues_.push_back({path, message});
  }

  const json* resolve(const json& doc, const std::string& path) {
    const json* node = &doc;
    std::istringstream ss(path);
    std::string part;
    while (std::getline(ss, part, '.')) {
      if (!node->is_object() || !node->contains(part)) return nullptr;
      node = &(*node)[part];
    }
    return node;
  }

 private:
  template <class T>
  static std::string type_name() {
    if constexpr (std::is_same_v<T, std::string>) return "string";
    else if constexpr (std::is_same_v<T, bool>) return "bool";
    else if constexpr (std::is_integral_v<T>) return "integer";
    else if constexpr (std::is_floating_point_v<T>) return "number";
    else return "value";
  }

  std::vector<ConfigIssue>& issues_;
};

syndata::SpeciesModel species_from_json(const json& j, std::vector<ConfigIssue>& issues,
                                        const std::string& path) {
  syndata::SpeciesModel m;
  Extractor ex(issues);
  m.name = ex.get<std::string>(j, "name", "");
  ex.require(!m.name.empty(), path + ".name", "species name required");
  auto arr3 = [&](const char* key, std::array<double, 3>& out) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (!v.is_array() || v.size() != 3) {
      issues.push_back({path + "." + key, "expected array of 3 numbers"});
      return;
    }
    try {
      for (int c = 0; c < 3; ++c) out[static_cast<std::size_t>(c)] = v.at(c).get<double>();
    } catch (const json::exception&) {
      issues.push_back({path + "." + key, "expected array of 3 numbers"});
    }
  };
  arr3("color_mean", m.color_mean);
  arr3("color_jitter", m.color_jitter);
  arr3("axes_mean", m.axes_mean);
  m.pixel_noise = ex.get<double>(j, "pixel_noise", m.pixel_noise);
  m.axes_sigma = ex.get<double>(j, "axes_sigma", m.axes_sigma);
  m.size_sigma = ex.get<double>(j, "size_sigma", m.size_sigma);
  m.limb_count = ex.get<int>(j, "limb_count", m.limb_count);
  m.angle_jitter = ex.get<double>(j, "angle_jitter", m.angle_jitter);
  if (j.contains("spots")) {
    const auto& js = j.at("spots");
    m.spots.count = ex.get<int>(js, "count", m.spots.count);
    m.spots.radius_px = ex.get<double>(js, "radius_px", m.spots.radius_px);
    m.spots.contrast = ex.get<double>(js, "contrast", m.spots.contrast);
    m.spots.camera = ex.get<int>(js, "camera", m.spots.camera);
  }
  if (j.contains("weight_law") && !j.at("weight_law").is_null()) {
    syndata::WeightLaw law;
    const auto& jl = j.at("weight_law");
    law.coeff = ex.get<double>(jl, "coeff", law.coeff);
    law.exponent = ex.get<double>(jl, "exponent", law.exponent);
    law.noise_sigma = ex.get<double>(jl, "noise_sigma", law.noise_sigma);
    m.weight_law = law;
  }
  return m;
}

}  // namespace

RunConfig parse_config(const std::string& json_text,
                       const std::map<std::string, std::string>& overrides,
                       std::vector<ConfigIssue>* issues_out) {
  std::vector<ConfigIssue> issues;
  RunConfig cfg;

  json doc = json::parse(json_text, nullptr, false);
  if (doc.is_discarded()) {
    issues.push_back({"", "config is not valid JSON"});
  } else if (!doc.is_object()) {
    issues.push_back({"", "config root must be a JSON object"});
    doc = json::object();
  }
  if (doc.is_discarded()) doc = json::object();

  apply_env_overrides(doc);
  for (const auto& [key, value] : overrides) apply_dotted_override(doc, key, value);

  Extractor ex(issues);
  cfg.data_root = ex.get<std::string>(doc, "paths.data_root", "");
  cfg.output_dir = ex.get<std::string>(doc, "paths.output_dir", "out");
  cfg.settings.exposure_us = ex.get<int>(doc, "settings.exposure_us", cfg.settings.exposure_us);
  cfg.settings.aperture_f = ex.get<double>(doc, "settings.aperture_f", cfg.settings.aperture_f);
  ex.require(cfg.settings.exposure_us > 0, "settings.exposure_us", "must be positive");
  ex.require(cfg.settings.aperture_f > 0, "settings.aperture_f", "must be positive");

  cfg.seed = ex.get<std::uint64_t>(doc, "seed", cfg.seed);
  cfg.split.train = ex.get<double>(doc, "split.train", cfg.split.train);
  cfg.split.val = ex.get<double>(doc, "split.val", cfg.split.val);
  cfg.split.test = ex.get<double>(doc, "split.test", cfg.split.test);
  ex.require(std::fabs(cfg.split.train + cfg.split.val + cfg.split.test - 1.0) <= 1e-9, "split",
             "fractions must sum to 1");
  ex.require(cfg.split.train > 0 && cfg.split.val > 0 && cfg.split.test > 0, "split",
             "fractions must be positive");

  cfg.n_reps = ex.get<int>(doc, "n_reps", cfg.n_reps);
  ex.require(cfg.n_reps >= 1, "n_reps", "must be >= 1");

  const std::string rule = ex.get<std::string>(doc, "rule", "majority");
  try {
    cfg.rule = agg::rule_from_name(rule);
  } catch (const Error&) {
    issues.push_back({"rule", "must be 'majority' or 'weighted'"});
  }

  cfg.theta_trigger = ex.get<int>(doc, "theta_trigger", cfg.theta_trigger);
  ex.require(cfg.theta_trigger >= 1, "theta_trigger", "must be >= 1");

  cfg.schedule.learning_rates = ex.get<std::vector<double>>(doc, "schedule.learning_rates",
                                                            cfg.schedule.learning_rates);
  cfg.schedule.epochs_per_rate =
      ex.get<int>(doc, "schedule.epochs_per_rate", cfg.schedule.epochs_per_rate);
  cfg.schedule.batch_size = ex.get<int>(doc, "schedule.batch_size", cfg.schedule.batch_size);
  try {
    classify::validate_schedule(cfg.schedule);
  } catch (const Error& e) {
    issues.push_back({"schedule", e.what()});
  }

  cfg.nmax_values = ex.get<std::vector<int>>(doc, "nmax", cfg.nmax_values);
  for (int v : cfg.nmax_values)
    ex.require(v >= 0, "nmax", "entries must be >= 0 (0 = unlimited)");

  cfg.jobs = ex.get<int>(doc, "jobs", cfg.jobs);
  ex.require(cfg.jobs >= 1, "jobs", "must be >= 1");
  cfg.debug_geometry = ex.get<bool>(doc, "debug_geometry", cfg.debug_geometry);

  {
    std::string scores = ex.get<std::string>(doc, "scores_file", "");
    if (!scores.empty()) cfg.scores_file = scores;
  }

  cfg.generate.preset = ex.get<std::string>(doc, "generate.preset", cfg.generate.preset);
  cfg.generate.specimens_per_species = ex.get<std::vector<int>>(
      doc, "generate.specimens_per_species", cfg.generate.specimens_per_species);
  cfg.generate.write_masks = ex.get<bool>(doc, "generate.write_masks", false);
  cfg.generate.keep_raw = ex.get<bool>(doc, "generate.keep_raw", false);
  if (const json* arr = ex.resolve(doc, "generate.species"); arr && arr->is_array()) {
    int i = 0;
    for (const auto& js : *arr)
      cfg.generate.species.push_back(
          species_from_json(js, issues, "generate.species[" + std::to_string(i++) + "]"));
  }
  ex.require(cfg.generate.preset == "custom" || !cfg.generate.preset.empty(), "generate.preset",
             "preset name required");

  cfg.grid.exposures = ex.get<std::vector<int>>(doc, "grid.exposures", cfg.grid.exposures);
  cfg.grid.apertures = ex.get<std::vector<double>>(doc, "grid.apertures", cfg.grid.apertures);
  ex.require(!cfg.grid.exposures.empty(), "grid.exposures", "must be non-empty");
  ex.require(!cfg.grid.apertures.empty(), "grid.apertures", "must be non-empty");
  if (const json* cell = ex.resolve(doc, "grid.degraded_cell"); cell && cell->is_array()) {
    if (cell->size() == 2) {
      cfg.grid.degraded_aperture_idx = (*cell)[0].get<int>();
      cfg.grid.degraded_exposure_idx = (*cell)[1].get<int>();
    } else {
      issues.push_back({"grid.degraded_cell", "expected [aperture_idx, exposure_idx]"});
    }
  }
  cfg.grid.degraded_blur_px = ex.get<double>(doc, "grid.degraded_blur_px", cfg.grid.degraded_blur_px);

  cfg.simulate.n_specimens = ex.get<int>(doc, "simulate.n_specimens", cfg.simulate.n_specimens);
  ex.require(cfg.simulate.n_specimens >= 1, "simulate.n_specimens", "must be >= 1");
  cfg.simulate.routing.default_container =
      ex.get<int>(doc, "simulate.routing.default_container", 0);
  cfg.simulate.routing.small_container = ex.get<int>(doc, "simulate.routing.small_container", 0);
  cfg.simulate.routing.large_container = ex.get<int>(doc, "simulate.routing.large_container", 1);
  if (const json* thr = ex.resolve(doc, "simulate.routing.size_threshold_px2");
      thr && thr->is_number())
    cfg.simulate.routing.size_threshold_px2 = thr->get<double>();
  if (const json* by = ex.resolve(doc, "simulate.routing.by_species"); by && by->is_object())
    for (auto it = by->begin(); it != by->end(); ++it)
      cfg.simulate.routing_by_species[it.key()] = it.value().get<int>();

  cfg.render.sensor_width = ex.get<int>(doc, "render.sensor_width", cfg.render.sensor_width);
  cfg.render.sensor_height = ex.get<int>(doc, "render.sensor_height", cfg.render.sensor_height);
  cfg.render.background_level =
      ex.get<double>(doc, "render.background_level", cfg.render.background_level);
  cfg.render.background_noise =
      ex.get<double>(doc, "render.background_noise", cfg.render.background_noise);
  cfg.render.flicker_sigma = ex.get<double>(doc, "render.flicker_sigma", cfg.render.flicker_sigma);
  cfg.render.lateral_jitter_px =
      ex.get<double>(doc, "render.lateral_jitter_px", cfg.render.lateral_jitter_px);
  cfg.render.extra_blur_px = ex.get<double>(doc, "render.extra_blur_px", cfg.render.extra_blur_px);
  ex.require(cfg.render.sensor_width >= 496, "render.sensor_width",
             "must accommodate the 496-px cuvette window");
  ex.require(cfg.render.sensor_height >= 496, "render.sensor_height", "must be >= 496");

  cfg.sink.median_sink_s = ex.get<double>(doc, "sink.median_sink_s", cfg.sink.median_sink_s);
  cfg.sink.sigma_log = ex.get<double>(doc, "sink.sigma_log", cfg.sink.sigma_log);
  cfg.sink.frame_drop_prob = ex.get<double>(doc, "sink.frame_drop_prob", cfg.sink.frame_drop_prob);
  ex.require(cfg.sink.median_sink_s > 0, "sink.median_sink_s", "must be positive");
  ex.require(cfg.sink.frame_drop_prob >= 0 && cfg.sink.frame_drop_prob < 1,
             "sink.frame_drop_prob", "must be in [0, 1)");

  if (issues_out) {
    *issues_out = issues;
  } else if (!issues.empty()) {
    std::ostringstream msg;
    msg << "invalid config:";
    for (const auto& issue : issues) msg << "\n  " << issue.path << ": " << issue.message;
    throw ConfigError(msg.str());
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path,
                      const std::map<std::string, std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str(), overrides);
}

std::string config_to_json(const RunConfig& cfg) {
  json j;
  j["paths"] = {{"data_root", cfg.data_root.string()}, {"output_dir", cfg.output_dir.string()}};
  j["settings"] = {{"exposure_us", cfg.settings.exposure_us},
                   {"aperture_f", cfg.settings.aperture_f}};
  j["seed"] = cfg.seed;
  j["split"] = {{"train", cfg.split.train}, {"val", cfg.split.val}, {"test", cfg.split.test}};
  j["n_reps"] = cfg.n_reps;
  j["rule"] = agg::rule_name(cfg.rule);
  j["theta_trigger"] = cfg.theta_trigger;
  j["schedule"] = {{"learning_rates", cfg.schedule.learning_rates},
                   {"epochs_per_rate", cfg.schedule.epochs_per_rate},
                   {"batch_size", cfg.schedule.batch_size}};
  j["nmax"] = cfg.nmax_values;
  j["jobs"] = cfg.jobs;
  if (cfg.scores_file) j["scores_file"] = cfg.scores_file->string();
  j["generate"] = {{"preset", cfg.generate.preset},
                   {"specimens_per_species", cfg.generate.specimens_per_species},
                   {"write_masks", cfg.generate.write_masks},
                   {"keep_raw", cfg.generate.keep_raw}};
  j["grid"] = {{"exposures", cfg.grid.exposures},
               {"apertures", cfg.grid.apertures},
               {"degraded_blur_px", cfg.grid.degraded_blur_px}};
  if (cfg.grid.degraded_aperture_idx >= 0)
    j["grid"]["degraded_cell"] = {cfg.grid.degraded_aperture_idx, cfg.grid.degraded_exposure_idx};
  j["simulate"] = {{"n_specimens", cfg.simulate.n_specimens}};
  j["render"] = {{"sensor_width", cfg.render.sensor_width},
                 {"sensor_height", cfg.render.sensor_height},
                 {"background_level", cfg.render.background_level},
                 {"background_noise", cfg.render.background_noise},
                 {"flicker_sigma", cfg.render.flicker_sigma},
                 {"lateral_jitter_px", cfg.render.lateral_jitter_px},
                 {"extra_blur_px", cfg.render.extra_blur_px}};
  j["sink"] = {{"median_sink_s", cfg.sink.median_sink_s},
               {"sigma_log", cfg.sink.sigma_log},
               {"frame_drop_prob", cfg.sink.frame_drop_prob}};
  return j.dump(2);
}

}  // namespace biodiscover::config
