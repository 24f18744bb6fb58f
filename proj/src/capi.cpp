#include "biodiscover.h"

#include <cstdlib>
#include <cstring>
#include <string>

#include <json.hpp>

#include "biodiscover/biomass.hpp"
#include "biodiscover/config.hpp"
#include "biodiscover/dataset.hpp"
#include "biodiscover/errors.hpp"
#include "biodiscover/eval.hpp"
#include "biodiscover/imgproc.hpp"
#include "biodiscover/pipeline.hpp"
#include "biodiscover/syndata.hpp"

using nlohmann::json;
namespace bd = biodiscover;

// Opaque handle bodies. The C surface owns plain C++ objects; every entry
// point catches and converts into (status, thread-local message).
struct bd_dataset {
  bd::eval::CohortData data;
};

struct bd_splits {
  std::vector<bd::eval::SplitPlan> plans;
};

namespace {

thread_local std::string g_last_error;

void set_error(const std::string& msg) { g_last_error = msg; }

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

bd_status status_from_exception() {
  try {
    throw;
  } catch (const bd::ConfigError& e) {
    set_error(e.what());
    return BD_ERR_CONFIG;
  } catch (const bd::DataError& e) {
    set_error(e.what());
    return BD_ERR_DATA;
  } catch (const std::exception& e) {
    set_error(e.what());
    return BD_ERR_INTERNAL;
  } catch (...) {
    set_error("unknown error");
    return BD_ERR_INTERNAL;
  }
}

template <class Fn>
bd_status guarded(Fn&& fn) {
  try {
    return fn();
  } catch (...) {
    return status_from_exception();
  }
}

bd_status out_json(char** out, const json& j) {
  *out = dup_string(j.dump(2));
  return *out ? BD_OK : BD_ERR_INTERNAL;
}

}  // namespace

extern "C" {

const char* bd_version(void) { return "0.1.0"; }

const char* bd_last_error(void) { return g_last_error.c_str(); }

void bd_string_free(char* s) { std::free(s); }

bd_status bd_dataset_open(const char* manifest_path, int load_pixels, bd_dataset** out) {
  if (!manifest_path || !out) {
    set_error("bd_dataset_open: null argument");
    return BD_ERR_ARG;
  }
  return guarded([&]() {
    auto handle = std::make_unique<bd_dataset>();
    handle->data.dataset = bd::load_manifest(
        manifest_path, {.load_pixels = load_pixels != 0});
    const auto features =
        std::filesystem::path(manifest_path).parent_path() / "features.csv";
    if (std::filesystem::exists(features))
      handle->data.features = bd::classify::load_features_csv(features);
    *out = handle.release();
    return BD_OK;
  });
}

bd_status bd_dataset_generate(const char* config_json, bd_dataset** out) {
  if (!config_json || !out) {
    set_error("bd_dataset_generate: null argument");
    return BD_ERR_ARG;
  }
  return guarded([&]() {
    auto cfg = bd::config::parse_config(config_json);
    auto handle = std::make_unique<bd_dataset>();

    std::vector<bd::syndata::SpeciesModel> models;
    if (cfg.generate.preset == "custom") {
      models = cfg.generate.species;
      if (models.empty())
        throw bd::ConfigError("generate.preset=custom requires generate.species");
    } else if (cfg.generate.preset == "separable") models = bd::syndata::separable_pair();
    else if (cfg.generate.preset == "congener") models = bd::syndata::congener_pair();
    else if (cfg.generate.preset == "texture") models = bd::syndata::texture_pair();
    else if (cfg.generate.preset == "camera_blind") models = bd::syndata::camera_blind_pair();
    else if (cfg.generate.preset == "noisy") models = bd::syndata::noisy_pair();
    else if (cfg.generate.preset == "twelve") models = bd::syndata::twelve_species();
    else throw bd::ConfigError("unknown generate.preset: " + cfg.generate.preset);

    auto counts = cfg.generate.specimens_per_species;
    if (counts.empty()) counts.assign(models.size(), 20);
    if (counts.size() == 1) counts.assign(models.size(), counts[0]);
    if (counts.size() != models.size())
      throw bd::ConfigError("generate.specimens_per_species length mismatch");

    bd::syndata::GenerateOptions opts;
    opts.settings = cfg.settings;
    opts.render = cfg.render;
    opts.sink = cfg.sink;
    opts.calibration.theta_trigger = cfg.theta_trigger;
    handle->data = bd::syndata::generate_cohort(models, counts, opts, cfg.seed).data;
    *out = handle.release();
    return BD_OK;
  });
}

void bd_dataset_close(bd_dataset* ds) { delete ds; }

int bd_dataset_species_count(const bd_dataset* ds) {
  return ds ? ds->data.dataset.registry.size() : -1;
}

int bd_dataset_specimen_count(const bd_dataset* ds) {
  return ds ? static_cast<int>(ds->data.dataset.specimens.size()) : -1;
}

bd_status bd_dataset_validate(const bd_dataset* ds, char** violations_json) {
  if (!ds || !violations_json) {
    set_error("bd_dataset_validate: null argument");
    return BD_ERR_ARG;
  }
  return guarded([&]() {
    json arr = json::array();
    for (const auto& v : bd::validate_dataset(ds->data.dataset))
      arr.push_back({{"code", v.code}, {"subject", v.subject}, {"message", v.message}});
    return out_json(violations_json, arr);
  });
}

bd_status bd_dataset_statistics(const bd_dataset* ds, char** stats_json) {
  if (!ds || !stats_json) {
    set_error("bd_dataset_statistics: null argument");
    return BD_ERR_ARG;
  }
  return guarded([&]() {
    json arr = json::array();
    for (const auto& s : bd::dataset_statistics(ds->data.dataset))
      arr.push_back(
          {{"species", s.species}, {"specimens", s.specimen_count}, {"images", s.image_count}});
    return out_json(stats_json, arr);
  });
}

bd_status bd_dataset_outlier_screen(const bd_dataset* ds, char** report_json) {
  if (!ds || !report_json) {
    set_error("bd_dataset_outlier_screen: null argument");
    return BD_ERR_ARG;
  }
  return guarded([&]() {
    auto screen = bd::imgproc::outlier_screen(ds->data.dataset);
    json flagged = json::array();
    for (const auto& f : screen.flagged)
      flagged.push_back({{"specimen_id", f.specimen_id}, {"channels", f.channels}});
    return out_json(report_json, json{{"flagged", flagged}, {"warnings", screen.warnings}});
  });
}

bd_status bd_splits_make(const bd_dataset* ds, int n_reps, uint64_t seed, bd_splits** out) {
  if (!ds || !out) {
    set_error("bd_splits_make: null argument");
    return BD_ERR_ARG;
  }
  return guarded([&]() {
    auto handle = std::make_unique<bd_splits>();
    handle->plans = bd::eval::make_splits(ds->data.dataset, n_reps, seed);
    *out = handle.release();
    return BD_OK;
  });
}

void bd_splits_close(bd_splits* sp) { delete sp; }

bd_status bd_splits_to_json(const bd_splits* sp, char** out) {
  if (!sp || !out) {
    set_error("bd_splits_to_json: null argument");
    return BD_ERR_ARG;
  }
  return guarded([&]() {
    json plans = json::array();
    for (const auto& plan : sp->plans) {
      json assignment;
      std::vector<std::pair<std::string, bd::eval::SplitRole>> rows(plan.assignment.begin(),
                                                                    plan.assignment.end());
      std::sort(rows.begin(), rows.end());
      for (const auto& [id, role] : rows) assignment[id] = bd::eval::role_name(role);
      plans.push_back({{"repetition", plan.repetition}, {"assignment", assignment}});
    }
    return out_json(out, json{{"plans", plans}});
  });
}

bd_status bd_evaluate(const bd_dataset* ds, const bd_splits* sp, const char* options_json,
                      char** report_json) {
  if (!ds || !sp || !report_json) {
    set_error("bd_evaluate: null argument");
    return BD_ERR_ARG;
  }
  return guarded([&]() {
    if (ds->data.features.empty())
      throw bd::DataError("dataset has no feature table; generate or process first");

    bd::eval::EvalOptions opts;
    bd::classify::TrainSchedule schedule;
    if (options_json && *options_json) {
      json j = json::parse(options_json, nullptr, false);
      if (j.is_discarded()) throw bd::ConfigError("options_json is not valid JSON");
      if (j.contains("rule")) opts.rule = bd::agg::rule_from_name(j["rule"].get<std::string>());
      opts.seed = j.value("seed", opts.seed);
      opts.nmax = j.value("nmax", opts.nmax);
      opts.jobs = j.value("jobs", opts.jobs);
      if (j.contains("schedule")) {
        const auto& js = j["schedule"];
        if (js.contains("learning_rates"))
          schedule.learning_rates = js["learning_rates"].get<std::vector<double>>();
        schedule.epochs_per_rate = js.value("epochs_per_rate", schedule.epochs_per_rate);
        schedule.batch_size = js.value("batch_size", schedule.batch_size);
      }
    }
    auto report = bd::eval::evaluate(ds->data, sp->plans,
                                     bd::eval::baseline_scorer_factory(schedule), opts);
    *report_json = dup_string(bd::eval::report_to_json(report));
    return *report_json ? BD_OK : BD_ERR_INTERNAL;
  });
}

bd_status bd_biomass_fit(const bd_dataset* ds, char** report_json) {
  if (!ds || !report_json) {
    set_error("bd_biomass_fit: null argument");
    return BD_ERR_ARG;
  }
  return guarded([&]() {
    auto summary = bd::biomass::fit_all(ds->data.dataset);
    json fits = json::array();
    for (const auto& f : summary.fits)
      fits.push_back({{"species", f.species},
                      {"a", f.intercept},
                      {"b", f.slope},
                      {"r2", f.r2},
                      {"p_slope", f.p_slope},
                      {"n", f.n}});
    json skipped = json::array();
    for (const auto& s : summary.skipped)
      skipped.push_back({{"species", s.species}, {"weighed_specimens", s.weighed_specimens}});
    return out_json(report_json, json{{"fits", fits}, {"skipped", skipped}});
  });
}

bd_status bd_run(const char* subcommand, const char* config_json, const char* overrides_json,
                 int dry_run, char** report_json) {
  if (!subcommand || !config_json || !report_json) {
    set_error("bd_run: null argument");
    return BD_ERR_ARG;
  }
  return guarded([&]() {
    std::map<std::string, std::string> overrides;
    if (overrides_json && *overrides_json) {
      json j = json::parse(overrides_json, nullptr, false);
      if (j.is_discarded() || !j.is_object())
        throw bd::ConfigError("overrides_json must be a JSON object");
      for (auto it = j.begin(); it != j.end(); ++it) overrides[it.key()] = it.value().dump();
    }
    std::vector<bd::config::ConfigIssue> issues;
    auto cfg = bd::config::parse_config(config_json, overrides, &issues);
    if (!issues.empty()) {
      json report = json::array();
      for (const auto& i : issues) report.push_back({{"path", i.path}, {"message", i.message}});
      set_error("config rejected");
      *report_json = dup_string(json{{"error", {{"type", "config"}, {"issues", report}}}}.dump(2));
      return BD_ERR_CONFIG;
    }
    auto result = bd::pipeline::run_subcommand(subcommand, cfg, {.dry_run = dry_run != 0});
    *report_json = dup_string(result.report_json);
    if (!*report_json) return BD_ERR_INTERNAL;
    switch (result.exit_code) {
      case bd::pipeline::kExitOk: return BD_OK;
      case bd::pipeline::kExitConfigError: set_error(result.report_json); return BD_ERR_CONFIG;
      case bd::pipeline::kExitDataError: set_error(result.report_json); return BD_ERR_DATA;
      default: set_error(result.report_json); return BD_ERR_INTERNAL;
    }
  });
}

const char* bd_subcommands(void) {
  static const std::string names = [] {
    json arr = json::array();
    for (const auto& name : bd::pipeline::subcommands()) arr.push_back(name);
    return arr.dump();
  }();
  return names.c_str();
}

}  // extern "C"
