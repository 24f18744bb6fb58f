#include "biodiscover/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "biodiscover/biomass.hpp"
#include "biodiscover/dataset.hpp"
#include "biodiscover/devicesim.hpp"
#include "biodiscover/errors.hpp"
#include "biodiscover/eval.hpp"
#include "biodiscover/png_io.hpp"
#include "biodiscover/syndata.hpp"

namespace biodiscover::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;
using config::RunConfig;

namespace {

void log(const char* level, const char* module, const std::string& msg) {
  std::cerr << level << ',' << module << ',' << msg << '\n';
}

fs::path subdir(const RunConfig& cfg, const char* name, bool create) {
  fs::path dir = cfg.output_dir / name;
  if (create) fs::create_directories(dir);
  return dir;
}

std::string slug(double aperture) {
  std::ostringstream s;
  s << aperture;
  std::string out = s.str();
  std::replace(out.begin(), out.end(), '.', 'p');
  return out;
}

std::vector<syndata::SpeciesModel> models_from_config(const RunConfig& cfg) {
  const std::string& preset = cfg.generate.preset;
  if (preset == "custom") {
    if (cfg.generate.species.empty())
      throw ConfigError("generate.preset=custom requires generate.species");
    return cfg.generate.species;
  }
  if (preset == "separable") return syndata::separable_pair();
  if (preset == "congener") return syndata::congener_pair();
  if (preset == "texture") return syndata::texture_pair();
  if (preset == "camera_blind") return syndata::camera_blind_pair();
  if (preset == "noisy") return syndata::noisy_pair();
  if (preset == "twelve") return syndata::twelve_species();
  throw ConfigError("unknown generate.preset: " + preset);
}

std::vector<int> counts_from_config(const RunConfig& cfg, std::size_t n_species) {
  auto counts = cfg.generate.specimens_per_species;
  if (counts.empty()) counts.assign(n_species, 20);
  if (counts.size() == 1) counts.assign(n_species, counts[0]);
  if (counts.size() != n_species)
    throw ConfigError("generate.specimens_per_species: expected " + std::to_string(n_species) +
                      " entries, got " + std::to_string(counts.size()));
  return counts;
}

syndata::GenerateOptions generate_options(const RunConfig& cfg) {
  syndata::GenerateOptions opts;
  opts.settings = cfg.settings;
  opts.render = cfg.render;
  opts.sink = cfg.sink;
  opts.calibration.theta_trigger = cfg.theta_trigger;
  return opts;
}

fs::path resolve_manifest(const fs::path& data_root) {
  if (data_root.empty()) throw ConfigError("paths.data_root is required for this subcommand");
  if (data_root.extension() == ".json") return data_root;
  if (fs::exists(data_root / "manifest.json")) return data_root / "manifest.json";
  if (fs::exists(data_root / "dataset" / "manifest.json"))
    return data_root / "dataset" / "manifest.json";
  throw DataError("no manifest.json under " + data_root.string());
}

eval::CohortData load_cohort(const fs::path& data_root) {
  const fs::path manifest = resolve_manifest(data_root);
  eval::CohortData data;
  data.dataset = load_manifest(manifest, {.load_pixels = false});
  const fs::path features = manifest.parent_path() / "features.csv";
  if (!fs::exists(features))
    throw DataError("no features.csv next to " + manifest.string() +
                    " (run the generate or process subcommand first)");
  data.features = classify::load_features_csv(features);
  return data;
}

eval::ScorerFactory scorer_from_config(const RunConfig& cfg, const eval::CohortData& data) {
  if (cfg.scores_file) {
    classify::ScoreLoadReport report;
    auto scores = classify::load_external_scores(*cfg.scores_file, data.dataset, &report);
    if (!report.rejected.empty())
      log("warn", "classify",
          std::to_string(report.rejected.size()) + " score rows rejected from " +
              cfg.scores_file->string());
    return [scores]() { return std::make_unique<eval::ExternalScorer>(scores); };
  }
  return eval::baseline_scorer_factory(cfg.schedule);
}

eval::EvalOptions eval_options(const RunConfig& cfg) {
  eval::EvalOptions opts;
  opts.rule = cfg.rule;
  opts.seed = cfg.seed;
  opts.jobs = cfg.jobs;
  return opts;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (text.empty() || text.back() != '\n') out << '\n';
}

json dataset_summary(const Dataset& ds) {
  std::int64_t images = 0;
  for (const auto& sp : ds.specimens) images += static_cast<std::int64_t>(sp.frames.size());
  return json{{"species", ds.registry.size()},
              {"specimens", ds.specimens.size()},
              {"images", images}};
}

// ---- subcommands ---------------------------------------------------------

json cmd_generate(const RunConfig& cfg, const RunFlags& flags) {
  auto models = models_from_config(cfg);
  auto counts = counts_from_config(cfg, models.size());
  auto opts = generate_options(cfg);

  if (flags.dry_run)
    return json{{"dry_run", true},
                {"preset", cfg.generate.preset},
                {"species", models.size()},
                {"specimens", std::accumulate(counts.begin(), counts.end(), 0)}};

  const fs::path dataset_dir = subdir(cfg, "generate", true) / "dataset";
  fs::create_directories(dataset_dir / "images");
  if (cfg.generate.write_masks) fs::create_directories(dataset_dir / "masks");
  if (cfg.debug_geometry) fs::create_directories(dataset_dir / "geometry");
  fs::create_directories(dataset_dir / "calibration");
  fs::path raw_dir;
  json raw_manifest;
  if (cfg.generate.keep_raw) {
    raw_dir = subdir(cfg, "generate", true) / "raw";
    fs::create_directories(raw_dir / "frames");
    raw_manifest["settings"] = {{"exposure_us", cfg.settings.exposure_us},
                                {"aperture_f", cfg.settings.aperture_f}};
    raw_manifest["specimens"] = json::array();
  }

  syndata::FrameSink sink = [&](const SpecimenRecord&, const FrameImage& frame,
                                const Mask& cropped_mask, const imgproc::CropGeometry& geom) {
    write_png(dataset_dir / frame.file, *frame.pixels);
    if (cfg.generate.write_masks)
      write_mask_png(dataset_dir / "masks" / (frame.image_id + ".png"), cropped_mask);
    if (cfg.debug_geometry) {
      json g{{"raw_width", geom.raw_width},
             {"raw_height", geom.raw_height},
             {"cols", {geom.col0, geom.col1}},
             {"rows", {geom.row0, geom.row1}},
             {"bbox", {geom.specimen_bbox.x0, geom.specimen_bbox.y0, geom.specimen_bbox.x1,
                       geom.specimen_bbox.y1}},
             {"centroid", {geom.centroid_col, geom.centroid_row}},
             {"clamped", geom.clamped}};
      write_text(dataset_dir / "geometry" / (frame.image_id + ".json"), g.dump(2));
    }
  };

  std::map<std::string, json> raw_entries;
  syndata::RawSink raw_sink;
  if (cfg.generate.keep_raw) {
    raw_sink = [&](const std::string& specimen_id, const sim::RawCapture& cap, int index) {
      std::ostringstream name;
      name << specimen_id << "_c" << cap.camera_id << "_f" << std::setw(3) << std::setfill('0')
           << index << ".png";
      write_png(raw_dir / "frames" / name.str(), cap.frame);
      raw_entries[specimen_id]["captures"].push_back({{"file", "frames/" + name.str()},
                                                      {"camera", cap.camera_id},
                                                      {"time_s", cap.t},
                                                      {"capture_index", index}});
    };
  }

  auto cohort = syndata::generate_cohort(models, counts, opts, cfg.seed, sink, raw_sink);

  save_manifest(cohort.data.dataset, dataset_dir, {.write_pixels = false});
  classify::save_features_csv(cohort.data.features, cohort.data.dataset,
                              dataset_dir / "features.csv");
  write_text(dataset_dir / "truth.json", syndata::truth_to_json(cohort.truth));
  imgproc::save_background(cohort.background, dataset_dir / "background.bgm");
  for (std::size_t i = 0; i < cohort.calibration_frames.size(); ++i) {
    std::ostringstream name;
    name << "bg_" << std::setw(3) << std::setfill('0') << i << ".png";
    write_png(dataset_dir / "calibration" / name.str(), cohort.calibration_frames[i]);
  }
  if (cfg.generate.keep_raw) {
    for (const auto& sp : cohort.data.dataset.specimens) {
      json entry = raw_entries.count(sp.specimen_id) ? raw_entries[sp.specimen_id] : json::object();
      entry["id"] = sp.specimen_id;
      entry["species"] = cohort.data.dataset.registry.name_of(sp.label_id);
      raw_manifest["specimens"].push_back(entry);
    }
    write_text(raw_dir / "raw_manifest.json", raw_manifest.dump(2));
  }

  auto violations = validate_dataset(cohort.data.dataset);
  if (!violations.empty())
    throw InternalError("generated dataset failed validation: " + violations.front().message);

  json report = dataset_summary(cohort.data.dataset);
  report["dataset_dir"] = dataset_dir.string();
  log("info", "syndata", "generated " + std::to_string(cohort.data.dataset.specimens.size()) +
                             " specimens under " + dataset_dir.string());
  return report;
}

json cmd_ingest(const RunConfig& cfg, const RunFlags& flags) {
  const fs::path manifest = resolve_manifest(cfg.data_root);
  if (flags.dry_run) return json{{"dry_run", true}, {"manifest", manifest.string()}};

  Dataset ds = load_manifest(manifest, {.load_pixels = false});
  auto violations = validate_dataset(ds);
  auto stats = dataset_statistics(ds);

  json report;
  report["manifest"] = manifest.string();
  report["summary"] = dataset_summary(ds);
  report["violations"] = json::array();
  for (const auto& v : violations)
    report["violations"].push_back({{"code", v.code}, {"subject", v.subject}, {"message", v.message}});
  report["statistics"] = json::array();
  for (const auto& s : stats)
    report["statistics"].push_back(
        {{"species", s.species}, {"specimens", s.specimen_count}, {"images", s.image_count}});

  write_text(subdir(cfg, "ingest", true) / "ingest_report.json", report.dump(2));
  if (!violations.empty())
    throw DataError("dataset has " + std::to_string(violations.size()) +
                    " invariant violations (see ingest_report.json)");
  return report;
}

json cmd_calibrate(const RunConfig& cfg, const RunFlags& flags) {
  fs::path src = cfg.data_root;
  if (src.empty()) throw ConfigError("paths.data_root must point at calibration frames");
  if (fs::exists(src / "calibration")) src = src / "calibration";

  std::vector<fs::path> files;
  if (fs::exists(src))
    for (const auto& entry : fs::directory_iterator(src))
      if (entry.path().extension() == ".png") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("no calibration PNGs under " + src.string());

  if (flags.dry_run) return json{{"dry_run", true}, {"frames", files.size()}};

  std::vector<Image> frames;
  frames.reserve(files.size());
  for (const auto& f : files) frames.push_back(read_png(f));

  imgproc::CalibrationParams params;
  params.theta_trigger = cfg.theta_trigger;
  auto bg = imgproc::calibrate(frames, params);

  const fs::path out = subdir(cfg, "calibrate", true);
  imgproc::save_background(bg, out / "background.bgm");

  float tol_min = bg.tol.empty() ? 0.f : bg.tol[0], tol_max = tol_min;
  for (float t : bg.tol) {
    tol_min = std::min(tol_min, t);
    tol_max = std::max(tol_max, t);
  }
  json report{{"frames", files.size()},
              {"width", bg.width},
              {"height", bg.height},
              {"theta_trigger", bg.theta_trigger},
              {"tolerance_min", tol_min},
              {"tolerance_max", tol_max},
              {"model", (out / "background.bgm").string()}};
  write_text(out / "calibration.json", report.dump(2));
  return report;
}

json cmd_process(const RunConfig& cfg, const RunFlags& flags) {
  if (cfg.data_root.empty()) throw ConfigError("paths.data_root must point at raw captures");
  fs::path raw_manifest_path = cfg.data_root / "raw_manifest.json";
  if (!fs::exists(raw_manifest_path))
    raw_manifest_path = cfg.data_root / "raw" / "raw_manifest.json";
  if (!fs::exists(raw_manifest_path))
    throw DataError("no raw_manifest.json under " + cfg.data_root.string());

  fs::path bg_path = cfg.data_root / "background.bgm";
  if (!fs::exists(bg_path)) bg_path = cfg.data_root / "dataset" / "background.bgm";
  if (!fs::exists(bg_path))
    throw DataError("no background.bgm next to the raw captures; run calibrate first");

  if (flags.dry_run)
    return json{{"dry_run", true}, {"raw_manifest", raw_manifest_path.string()}};

  std::ifstream in(raw_manifest_path);
  json raw_doc;
  in >> raw_doc;
  const fs::path raw_base = raw_manifest_path.parent_path();
  auto bg = imgproc::load_background(bg_path);

  Dataset ds;
  ds.settings.exposure_us = raw_doc.at("settings").at("exposure_us").get<int>();
  ds.settings.aperture_f = raw_doc.at("settings").at("aperture_f").get<double>();
  classify::FeatureTable features;

  const fs::path dataset_dir = subdir(cfg, "process", true) / "dataset";
  fs::create_directories(dataset_dir / "images");
  if (cfg.debug_geometry) fs::create_directories(dataset_dir / "geometry");

  int skipped = 0;
  for (const auto& jsp : raw_doc.at("specimens")) {
    SpecimenRecord record;
    record.specimen_id = jsp.at("id").get<std::string>();
    record.label_id = ds.registry.add(jsp.at("species").get<std::string>());
    for (const auto& jc : jsp.value("captures", json::array())) {
      Image raw = read_png(raw_base / jc.at("file").get<std::string>());
      auto det = imgproc::detect(raw, bg);
      if (!det) {
        ++skipped;
        continue;
      }
      imgproc::CropParams crop_params;
      auto cropped = imgproc::crop(raw, det->mask, det->bbox, crop_params);
      FrameImage frame = std::move(cropped.frame);
      const int cam = jc.at("camera").get<int>();
      std::ostringstream img_id;
      img_id << record.specimen_id << "_c" << cam << "_f" << std::setw(3) << std::setfill('0')
             << jc.value("capture_index", 0);
      frame.image_id = img_id.str();
      frame.camera_id = cam;
      frame.capture_time_s = jc.value("time_s", 0.0);
      frame.file = "images/" + frame.image_id + ".png";
      write_png(dataset_dir / frame.file, *frame.pixels);

      FloatImage scaled = imgproc::rescale_for_classifier(*frame.pixels);
      Mask scaled_mask = imgproc::rescale_mask(cropped.cropped_mask);
      features[frame.image_id] = classify::extract_features(scaled, scaled_mask);

      if (cfg.debug_geometry) {
        const auto& geom = cropped.geometry;
        json g{{"rows", {geom.row0, geom.row1}},
               {"cols", {geom.col0, geom.col1}},
               {"centroid", {geom.centroid_col, geom.centroid_row}},
               {"clamped", geom.clamped}};
        write_text(dataset_dir / "geometry" / (frame.image_id + ".json"), g.dump(2));
      }
      frame.pixels.reset();
      record.frames.push_back(std::move(frame));
    }
    ds.specimens.push_back(std::move(record));
  }
  refresh_mean_areas(ds);

  save_manifest(ds, dataset_dir, {.write_pixels = false});
  classify::save_features_csv(features, ds, dataset_dir / "features.csv");

  json report = dataset_summary(ds);
  report["dataset_dir"] = dataset_dir.string();
  report["captures_without_detection"] = skipped;
  return report;
}

json cmd_screen(const RunConfig& cfg, const RunFlags& flags) {
  const fs::path manifest = resolve_manifest(cfg.data_root);
  if (flags.dry_run) return json{{"dry_run", true}, {"manifest", manifest.string()}};

  Dataset ds = load_manifest(manifest, {.load_pixels = false});
  auto screen = imgproc::outlier_screen(ds);

  json report;
  report["flagged"] = json::array();
  for (const auto& f : screen.flagged) {
    json channels = json::array();
    for (int c : f.channels) channels.push_back(std::array<const char*, 3>{"R", "G", "B"}[static_cast<std::size_t>(c)]);
    report["flagged"].push_back({{"specimen_id", f.specimen_id}, {"channels", channels}});
  }
  report["warnings"] = screen.warnings;
  report["note"] = "review list only; nothing was deleted";

  const fs::path out = subdir(cfg, "screen", true);
  write_text(out / "outliers.json", report.dump(2));
  std::ostringstream csv;
  csv << "specimen_id,channels\n";
  for (const auto& f : screen.flagged) {
    csv << f.specimen_id << ',';
    for (std::size_t i = 0; i < f.channels.size(); ++i)
      csv << (i ? ";" : "") << std::array<const char*, 3>{"R", "G", "B"}[static_cast<std::size_t>(f.channels[i])];
    csv << '\n';
  }
  write_text(out / "outliers.csv", csv.str());
  return report;
}

json cmd_train(const RunConfig& cfg, const RunFlags& flags) {
  auto data = load_cohort(cfg.data_root);
  if (flags.dry_run) return json{{"dry_run", true}, {"specimens", data.dataset.specimens.size()}};

  auto plans = eval::make_splits(data.dataset, cfg.n_reps, cfg.seed, cfg.split);
  eval::BaselineScorer scorer(cfg.schedule);
  scorer.fit(data, plans.front(), derive_seed(cfg.seed, {0x714a1u, 0u}));

  const fs::path out = subdir(cfg, "train", true);
  classify::save_model(scorer.model(), out / "model.json");

  std::ostringstream csv;
  csv << "stage,learning_rate,epoch,global_epoch,train_loss,val_accuracy,checkpoint\n";
  csv.precision(17);
  for (const auto& e : scorer.last_log())
    csv << e.stage << ',' << e.learning_rate << ',' << e.epoch << ',' << e.global_epoch << ','
        << e.train_loss << ',' << e.val_accuracy << ',' << (e.checkpoint ? 1 : 0) << '\n';
  write_text(out / "train_log.csv", csv.str());

  json report{{"model", (out / "model.json").string()},
              {"best_epoch", scorer.model().best_epoch},
              {"best_val_accuracy", scorer.model().best_val_accuracy},
              {"epochs_logged", scorer.last_log().size()}};
  log("info", "classify", "trained baseline, best val accuracy " +
                              std::to_string(scorer.model().best_val_accuracy));
  return report;
}

json cmd_evaluate(const RunConfig& cfg, const RunFlags& flags) {
  auto data = load_cohort(cfg.data_root);
  if (flags.dry_run) return json{{"dry_run", true}, {"specimens", data.dataset.specimens.size()}};

  auto plans = eval::make_splits(data.dataset, cfg.n_reps, cfg.seed, cfg.split);
  auto factory = scorer_from_config(cfg, data);
  std::vector<eval::PredictionRow> predictions;
  auto report = eval::evaluate(data, plans, factory, eval_options(cfg), &predictions);

  const fs::path out = subdir(cfg, "evaluate", true);
  write_text(out / "report.json", eval::report_to_json(report));
  eval::write_confusion_csv(report, out / "confusion.csv");
  eval::write_predictions_csv(predictions, report.labels, out / "predictions.csv");
  eval::splits_to_csv(plans, out / "splits.csv");

  log("info", "eval", "mean accuracy " + std::to_string(report.mean_accuracy) + " (std " +
                          std::to_string(report.std_accuracy) + ")");
  json summary{{"mean_accuracy", report.mean_accuracy},
               {"std_accuracy", report.std_accuracy},
               {"n_reps", report.n_reps},
               {"rule", agg::rule_name(report.rule)},
               {"report", (out / "report.json").string()}};
  return summary;
}

// Shared by grid: per-cell datasets either loaded from disk or regenerated
// with identical specimens (same seed) under each settings combination.
std::map<std::pair<int, double>, eval::CohortData> grid_datasets(const RunConfig& cfg) {
  std::map<std::pair<int, double>, eval::CohortData> cells;
  const bool from_disk =
      !cfg.data_root.empty() &&
      fs::exists(cfg.data_root / ("cell_" + std::to_string(cfg.grid.exposures[0]) + "_" +
                                  slug(cfg.grid.apertures[0])));
  auto models = models_from_config(cfg);
  auto counts = counts_from_config(cfg, models.size());

  for (std::size_t a = 0; a < cfg.grid.apertures.size(); ++a) {
    for (std::size_t e = 0; e < cfg.grid.exposures.size(); ++e) {
      const int exposure = cfg.grid.exposures[e];
      const double aperture = cfg.grid.apertures[a];
      if (from_disk) {
        const fs::path dir =
            cfg.data_root / ("cell_" + std::to_string(exposure) + "_" + slug(aperture));
        cells[{exposure, aperture}] = load_cohort(dir);
      } else {
        auto opts = generate_options(cfg);
        opts.settings = CameraSettings{exposure, aperture};
        if (static_cast<int>(a) == cfg.grid.degraded_aperture_idx &&
            static_cast<int>(e) == cfg.grid.degraded_exposure_idx)
          opts.render.extra_blur_px = cfg.grid.degraded_blur_px;
        auto cohort = syndata::generate_cohort(models, counts, opts, cfg.seed);
        cells[{exposure, aperture}] = std::move(cohort.data);
        log("info", "syndata",
            "grid cell exposure " + std::to_string(exposure) + " f/" + slug(aperture) +
                " generated");
      }
    }
  }
  return cells;
}

json cmd_grid(const RunConfig& cfg, const RunFlags& flags) {
  if (flags.dry_run)
    return json{{"dry_run", true},
                {"cells", cfg.grid.exposures.size() * cfg.grid.apertures.size()}};

  auto cells = grid_datasets(cfg);
  auto plans = eval::make_splits(cells.begin()->second.dataset, cfg.n_reps, cfg.seed, cfg.split);
  auto factory = cfg.scores_file ? scorer_from_config(cfg, cells.begin()->second)
                                 : eval::baseline_scorer_factory(cfg.schedule);
  auto grid = eval::settings_grid(cells, plans, factory, eval_options(cfg), cfg.jobs);

  const fs::path out = subdir(cfg, "grid", true);

  // Table layout: aperture rows, exposure columns.
  std::ostringstream mean_csv, std_csv;
  mean_csv << "aperture";
  for (int e : grid.exposures) mean_csv << ',' << e;
  mean_csv << '\n';
  std_csv << mean_csv.str();
  mean_csv.str("");
  mean_csv << "aperture";
  for (int e : grid.exposures) mean_csv << ',' << e;
  mean_csv << '\n';
  mean_csv.precision(17);
  std_csv.precision(17);
  for (std::size_t a = 0; a < grid.apertures.size(); ++a) {
    mean_csv << "1:" << grid.apertures[a];
    std_csv << "1:" << grid.apertures[a];
    for (std::size_t e = 0; e < grid.exposures.size(); ++e) {
      const auto& r = grid.report_at(static_cast<int>(a), static_cast<int>(e));
      mean_csv << ',' << r.mean_accuracy;
      std_csv << ',' << r.std_accuracy;
    }
    mean_csv << '\n';
    std_csv << '\n';
  }
  write_text(out / "grid_mean.csv", mean_csv.str());
  write_text(out / "grid_std.csv", std_csv.str());

  json jcells = json::array();
  for (std::size_t i = 0; i < grid.cells.size(); ++i) {
    const auto& cell = grid.cells[i];
    const fs::path cell_dir =
        out / ("cell_" + std::to_string(cell.settings.exposure_us) + "_" +
               slug(cell.settings.aperture_f));
    fs::create_directories(cell_dir);
    write_text(cell_dir / "report.json", eval::report_to_json(cell.report));
    eval::write_confusion_csv(cell.report, cell_dir / "confusion.csv");
    jcells.push_back({{"exposure_us", cell.settings.exposure_us},
                      {"aperture_f", cell.settings.aperture_f},
                      {"mean_accuracy", cell.report.mean_accuracy},
                      {"std_accuracy", cell.report.std_accuracy},
                      {"best", static_cast<int>(i) == grid.best_cell}});
  }
  json report{{"cells", jcells},
              {"best_cell",
               {{"exposure_us", grid.cells[static_cast<std::size_t>(grid.best_cell)].settings.exposure_us},
                {"aperture_f", grid.cells[static_cast<std::size_t>(grid.best_cell)].settings.aperture_f}}}};
  write_text(out / "grid.json", report.dump(2));
  return report;
}

json cmd_ablate(const RunConfig& cfg, const RunFlags& flags) {
  eval::CohortData data;
  if (!cfg.data_root.empty() && fs::exists(cfg.data_root)) {
    data = load_cohort(cfg.data_root);
  } else {
    auto models = models_from_config(cfg);
    auto counts = counts_from_config(cfg, models.size());
    data = syndata::generate_cohort(models, counts, generate_options(cfg), cfg.seed).data;
  }
  if (flags.dry_run) return json{{"dry_run", true}, {"specimens", data.dataset.specimens.size()}};

  auto plans = eval::make_splits(data.dataset, cfg.n_reps, cfg.seed, cfg.split);
  auto factory = scorer_from_config(cfg, data);
  auto ablation = eval::camera_ablation(data, plans, factory, eval_options(cfg), cfg.seed);

  const fs::path out = subdir(cfg, "ablation", true);
  write_text(out / "camera1.json", eval::report_to_json(ablation.camera1));
  write_text(out / "camera2.json", eval::report_to_json(ablation.camera2));
  write_text(out / "both.json", eval::report_to_json(ablation.both));
  eval::write_confusion_csv(ablation.both, out / "confusion_both.csv");

  json report{{"camera1", {{"mean", ablation.camera1.mean_accuracy}, {"std", ablation.camera1.std_accuracy}}},
              {"camera2", {{"mean", ablation.camera2.mean_accuracy}, {"std", ablation.camera2.std_accuracy}}},
              {"both", {{"mean", ablation.both.mean_accuracy}, {"std", ablation.both.std_accuracy}}},
              {"excluded_specimens", ablation.excluded_specimens}};
  write_text(out / "ablation.json", report.dump(2));
  return report;
}

json cmd_sweep_nmax(const RunConfig& cfg, const RunFlags& flags) {
  auto data = load_cohort(cfg.data_root);
  if (flags.dry_run) return json{{"dry_run", true}, {"nmax_values", cfg.nmax_values.size()}};

  auto plans = eval::make_splits(data.dataset, cfg.n_reps, cfg.seed, cfg.split);
  auto factory = scorer_from_config(cfg, data);
  auto curve = eval::nmax_sweep(data, plans, factory, eval_options(cfg), cfg.nmax_values);

  const fs::path out = subdir(cfg, "nmax", true);
  eval::write_nmax_csv(curve, out / "nmax_curve.csv");
  json points = json::array();
  for (const auto& p : curve)
    points.push_back({{"n_max", p.nmax}, {"mean", p.mean_accuracy}, {"std", p.std_accuracy}});
  json report{{"curve", points}};
  write_text(out / "nmax.json", report.dump(2));
  return report;
}

json cmd_biomass_fit(const RunConfig& cfg, const RunFlags& flags) {
  const fs::path manifest = resolve_manifest(cfg.data_root);
  if (flags.dry_run) return json{{"dry_run", true}, {"manifest", manifest.string()}};

  Dataset ds = load_manifest(manifest, {.load_pixels = false});
  auto summary = biomass::fit_all(ds);

  const fs::path out = subdir(cfg, "biomass", true);
  biomass::write_fits_csv(summary, out / "fits.csv");
  json fits = json::array();
  for (const auto& f : summary.fits) {
    std::string name = f.species;
    std::replace(name.begin(), name.end(), ' ', '_');
    biomass::write_scatter_csv(ds, f, out / ("scatter_" + name + ".csv"));
    fits.push_back({{"species", f.species},
                    {"a", f.intercept},
                    {"b", f.slope},
                    {"r2", f.r2},
                    {"p_slope", f.p_slope},
                    {"n", f.n}});
  }
  json skipped = json::array();
  for (const auto& s : summary.skipped)
    skipped.push_back({{"species", s.species}, {"weighed_specimens", s.weighed_specimens}});
  json report{{"fits", fits}, {"skipped", skipped}};
  write_text(out / "biomass.json", report.dump(2));
  return report;
}

json cmd_simulate(const RunConfig& cfg, const RunFlags& flags) {
  auto models = models_from_config(cfg);
  std::vector<int> counts(models.size(), 0);
  for (int i = 0; i < cfg.simulate.n_specimens; ++i)
    counts[static_cast<std::size_t>(i) % counts.size()] += 1;
  for (auto& c : counts) c = std::max(1, c);

  if (flags.dry_run)
    return json{{"dry_run", true}, {"specimens", cfg.simulate.n_specimens}};

  auto opts = generate_options(cfg);
  opts.extract_features = false;
  auto cohort = syndata::generate_cohort(models, counts, opts, cfg.seed);

  sim::RoutingRule rule = cfg.simulate.routing;
  for (const auto& [name, container] : cfg.simulate.routing_by_species) {
    const int id = cohort.data.dataset.registry.id_of(name);
    if (id < 0) throw ConfigError("simulate.routing.by_species: unknown species " + name);
    rule.by_class[id] = container;
  }

  sim::Device device;
  std::ostringstream routing_csv;
  routing_csv << "specimen_id,species,mean_area_px2,container,used_default\n";
  double t = 0.0;
  int defaults_used = 0;
  for (std::size_t i = 0; i < cohort.data.dataset.specimens.size(); ++i) {
    const auto& sp = cohort.data.dataset.specimens[i];
    const auto& truth = cohort.truth.specimens[i];
    device.drop_specimen(t);
    const double pass_s = truth.velocity_px_s > 0
                              ? cfg.render.sensor_height / truth.velocity_px_s
                              : 1.0;
    t += pass_s;
    device.imaging_complete(t);
    // The classification stage stands in as a perfect oracle here: routing
    // consumes the true label, as a deployed rule would consume a prediction.
    auto decision = sim::flush_and_route(device, t, rule, sp.label_id, sp.mean_area_px2);
    if (decision.used_default) ++defaults_used;
    t += 1.0;  // refill
    routing_csv << sp.specimen_id << ',' << cohort.data.dataset.registry.name_of(sp.label_id)
                << ',' << sp.mean_area_px2 << ',' << decision.container << ','
                << (decision.used_default ? 1 : 0) << '\n';
  }

  const fs::path out = subdir(cfg, "simulate", true);
  write_text(out / "events.ndjson", sim::event_log_json(device.events()));
  write_text(out / "routing.csv", routing_csv.str());

  json report{{"specimens", cohort.data.dataset.specimens.size()},
              {"events", device.events().size()},
              {"defaults_used", defaults_used}};
  return report;
}

}  // namespace

const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names{
      "generate", "ingest",         "calibrate",  "process",     "screen",  "train",
      "evaluate", "grid",           "ablate-cameras", "sweep-nmax", "biomass-fit", "simulate"};
  return names;
}

RunResult run_subcommand(const std::string& name, const config::RunConfig& cfg,
                         const RunFlags& flags) {
  json report;
  try {
    if (name == "generate") report = cmd_generate(cfg, flags);
    else if (name == "ingest") report = cmd_ingest(cfg, flags);
    else if (name == "calibrate") report = cmd_calibrate(cfg, flags);
    else if (name == "process") report = cmd_process(cfg, flags);
    else if (name == "screen") report = cmd_screen(cfg, flags);
    else if (name == "train") report = cmd_train(cfg, flags);
    else if (name == "evaluate") report = cmd_evaluate(cfg, flags);
    else if (name == "grid") report = cmd_grid(cfg, flags);
    else if (name == "ablate-cameras") report = cmd_ablate(cfg, flags);
    else if (name == "sweep-nmax") report = cmd_sweep_nmax(cfg, flags);
    else if (name == "biomass-fit") report = cmd_biomass_fit(cfg, flags);
    else if (name == "simulate") report = cmd_simulate(cfg, flags);
    else throw ConfigError("unknown subcommand: " + name);
  } catch (const ConfigError& e) {
    log("error", "pipeline", e.what());
    return {kExitConfigError, json{{"error", {{"type", "config"}, {"message", e.what()}}}}.dump(2)};
  } catch (const DataError& e) {
    log("error", "pipeline", e.what());
    return {kExitDataError, json{{"error", {{"type", "data"}, {"message", e.what()}}}}.dump(2)};
  } catch (const std::exception& e) {
    log("error", "pipeline", e.what());
    return {kExitInternalError,
            json{{"error", {{"type", "internal"}, {"message", e.what()}}}}.dump(2)};
  }
  report["subcommand"] = name;
  return {kExitOk, report.dump(2)};
}

}  // namespace biodiscover::pipeline
