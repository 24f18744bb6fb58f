#include "biodiscover/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "biodiscover/dataset.hpp"
#include "biodiscover/errors.hpp"
#include "biodiscover/rng.hpp"

namespace biodiscover::eval {

using nlohmann::json;

const char* role_name(SplitRole role) {
  switch (role) {
    case SplitRole::Train: return "train";
    case SplitRole::Val: return "val";
    case SplitRole::Test: return "test";
  }
  return "?";
}

namespace {

// Largest-remainder apportionment of n into train/val/test. Remainder ties
// resolve in bucket order train, val, test.
std::array<int, 3> largest_remainder(int n, const SplitFractions& fr) {
  const std::array<double, 3> target{n * fr.train, n * fr.val, n * fr.test};
  std::array<int, 3> counts{static_cast<int>(std::floor(target[0])),
                            static_cast<int>(std::floor(target[1])),
                            static_cast<int>(std::floor(target[2]))};
  int assigned = counts[0] + counts[1] + counts[2];
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return target[static_cast<std::size_t>(a)] - counts[static_cast<std::size_t>(a)] >
           target[static_cast<std::size_t>(b)] - counts[static_cast<std::size_t>(b)];
  });
  for (int i = 0; assigned < n; ++i, ++assigned) counts[static_cast<std::size_t>(order[static_cast<std::size_t>(i % 3)])] += 1;
  return counts;
}

}  // namespace

std::vector<SplitPlan> make_splits(const Dataset& ds, int n_reps, std::uint64_t seed,
                                   const SplitFractions& fractions) {
  if (n_reps < 1) throw ConfigError("make_splits: n_reps must be >= 1");
  if (std::fabs(fractions.train + fractions.val + fractions.test - 1.0) > 1e-9)
    throw ConfigError("make_splits: split fractions must sum to 1");

  // Group ids per species name so plans depend only on the id/label sets.
  std::map<std::string, std::vector<std::string>> by_species;
  for (const auto& sp : ds.specimens)
    by_species[ds.registry.name_of(sp.label_id)].push_back(sp.specimen_id);
  for (auto& [name, ids] : by_species) std::sort(ids.begin(), ids.end());

  for (const auto& [name, ids] : by_species) {
    auto counts = largest_remainder(static_cast<int>(ids.size()), fractions);
    if (counts[0] < 1 || counts[1] < 1 || counts[2] < 1)
      throw DataError("make_splits: species " + name + " has " + std::to_string(ids.size()) +
                      " specimens, too few to give every bucket at least one");
  }

  std::vector<SplitPlan> plans;
  plans.reserve(static_cast<std::size_t>(n_reps));
  for (int rep = 0; rep < n_reps; ++rep) {
    SplitPlan plan;
    plan.repetition = rep;
    plan.seed = seed;
    for (const auto& [name, ids] : by_species) {
      std::vector<std::string> shuffled = ids;
      Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(rep), hash_id(name)}));
      rng.shuffle(shuffled);
      auto counts = largest_remainder(static_cast<int>(ids.size()), fractions);
      int i = 0;
      for (int t = 0; t < counts[0]; ++t) plan.assignment[shuffled[static_cast<std::size_t>(i++)]] = SplitRole::Train;
      for (int t = 0; t < counts[1]; ++t) plan.assignment[shuffled[static_cast<std::size_t>(i++)]] = SplitRole::Val;
      for (int t = 0; t < counts[2]; ++t) plan.assignment[shuffled[static_cast<std::size_t>(i++)]] = SplitRole::Test;
    }
    plans.push_back(std::move(plan));
  }
  return plans;
}

void BaselineScorer::fit(const CohortData& data, const SplitPlan& plan, std::uint64_t seed) {
  data_ = &data;
  std::vector<classify::TrainImage> train;
  std::vector<classify::ValSpecimen> val;

  for (const auto& sp : data.dataset.specimens) {
    auto it = plan.assignment.find(sp.specimen_id);
    if (it == plan.assignment.end())
      throw DataError("evaluate: specimen " + sp.specimen_id + " missing from the split plan");
    if (it->second == SplitRole::Train) {
      for (const auto& f : sp.frames) {
        auto ft = data.features.find(f.image_id);
        if (ft == data.features.end())
          throw DataError("evaluate: no features for image " + f.image_id);
        train.push_back({f.image_id, sp.specimen_id, sp.label_id, ft->second});
      }
    } else if (it->second == SplitRole::Val) {
      classify::ValSpecimen vs;
      vs.specimen_id = sp.specimen_id;
      vs.label = sp.label_id;
      for (const auto& f : sp.frames) vs.images.push_back(data.features.at(f.image_id));
      val.push_back(std::move(vs));
    }
  }

  log_.clear();
  model_ = classify::train_baseline(train, val, data.dataset.registry.size(), schedule_, seed,
                                    &log_);
}

ConfidenceVector BaselineScorer::score(const std::string& image_id) const {
  if (!data_) throw InternalError("BaselineScorer: score before fit");
  auto it = data_->features.find(image_id);
  if (it == data_->features.end())
    throw DataError("BaselineScorer: no features for image " + image_id);
  return classify::predict_image(model_, it->second);
}

ConfidenceVector ExternalScorer::score(const std::string& image_id) const {
  auto it = scores_.find(image_id);
  if (it == scores_.end())
    throw DataError("external scores: no row for image " + image_id);
  return it->second;
}

ScorerFactory baseline_scorer_factory(classify::TrainSchedule schedule) {
  return [schedule]() { return std::make_unique<BaselineScorer>(schedule); };
}

namespace {

struct PlanOutcome {
  double accuracy = 0.0;
  std::vector<double> confusion_rows;  // row-normalized K*K
  std::vector<PredictionRow> predictions;
};

PlanOutcome run_plan(const CohortData& data, const SplitPlan& plan,
                     const ScorerFactory& make_scorer, const EvalOptions& opts,
                     const std::vector<std::string>& labels, bool want_predictions) {
  const int k = static_cast<int>(labels.size());
  auto scorer = make_scorer();
  scorer->fit(data, plan,
              derive_seed(opts.seed, {0x714a1u, static_cast<std::uint64_t>(plan.repetition)}));

  std::vector<std::int64_t> counts(static_cast<std::size_t>(k) * k, 0);
  std::vector<std::int64_t> row_totals(static_cast<std::size_t>(k), 0);
  int correct = 0, tested = 0;
  PlanOutcome out;

  for (const auto& sp : data.dataset.specimens) {
    auto it = plan.assignment.find(sp.specimen_id);
    if (it == plan.assignment.end())
      throw DataError("evaluate: specimen " + sp.specimen_id + " missing from the split plan");
    if (it->second != SplitRole::Test) continue;

    std::vector<const FrameImage*> frames;
    frames.reserve(sp.frames.size());
    for (const auto& f : sp.frames) frames.push_back(&f);
    if (opts.nmax > 0 && static_cast<int>(frames.size()) > opts.nmax) {
      Rng rng(derive_seed(opts.seed, {0x9a3bu, static_cast<std::uint64_t>(plan.repetition),
                                      hash_id(sp.specimen_id)}));
      auto keep = rng.sample_indices(static_cast<int>(frames.size()), opts.nmax);
      std::vector<const FrameImage*> sampled;
      sampled.reserve(keep.size());
      for (int idx : keep) sampled.push_back(frames[static_cast<std::size_t>(idx)]);
      frames = std::move(sampled);
    }

    std::vector<ConfidenceVector> vectors;
    vectors.reserve(frames.size());
    for (const auto* f : frames) vectors.push_back(scorer->score(f->image_id));
    auto pred = agg::aggregate(opts.rule, sp.specimen_id, vectors);

    counts[static_cast<std::size_t>(sp.label_id) * k + pred.predicted] += 1;
    row_totals[static_cast<std::size_t>(sp.label_id)] += 1;
    ++tested;
    if (pred.predicted == sp.label_id) ++correct;
    if (want_predictions)
      out.predictions.push_back({sp.specimen_id, opts.rule, pred.predicted, sp.label_id,
                                 static_cast<int>(frames.size()), plan.repetition});
  }

  if (tested == 0) throw DataError("evaluate: plan has no test specimens");
  out.confusion_rows.assign(static_cast<std::size_t>(k) * k, 0.0);
  for (int r = 0; r < k; ++r) {
    if (row_totals[static_cast<std::size_t>(r)] == 0)
      throw DataError("evaluate: species " + labels[static_cast<std::size_t>(r)] +
                      " has no test specimens in repetition " + std::to_string(plan.repetition));
    for (int c = 0; c < k; ++c)
      out.confusion_rows[static_cast<std::size_t>(r) * k + c] =
          static_cast<double>(counts[static_cast<std::size_t>(r) * k + c]) /
          static_cast<double>(row_totals[static_cast<std::size_t>(r)]);
  }
  out.accuracy = static_cast<double>(correct) / static_cast<double>(tested);
  return out;
}

}  // namespace

EvalReport evaluate(const CohortData& data, std::span<const SplitPlan> plans,
                    const ScorerFactory& make_scorer, const EvalOptions& opts,
                    std::vector<PredictionRow>* predictions) {
  if (plans.empty()) throw ConfigError("evaluate: no split plans");
  const int k = data.dataset.registry.size();
  if (k < 2) throw DataError("evaluate: need at least 2 species");

  EvalReport report;
  report.settings = data.dataset.settings;
  report.rule = opts.rule;
  report.n_reps = static_cast<int>(plans.size());
  for (const auto& l : data.dataset.registry.labels()) report.labels.push_back(l.name);
  report.confusion.assign(static_cast<std::size_t>(k) * k, 0.0);

  // Repetitions are independent jobs; outcomes are reduced in repetition
  // order so the report is identical for any jobs count.
  std::vector<PlanOutcome> outcomes(plans.size());
  std::vector<std::string> failures(plans.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= plans.size()) return;
      try {
        outcomes[i] = run_plan(data, plans[i], make_scorer, opts, report.labels,
                               predictions != nullptr);
      } catch (const std::exception& e) {
        failures[i] = e.what();
      }
    }
  };
  const int nthreads = std::max(1, std::min<int>(opts.jobs, static_cast<int>(plans.size())));
  if (nthreads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(nthreads));
    for (int i = 0; i < nthreads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& f : failures)
    if (!f.empty()) throw DataError(f);

  for (const auto& outcome : outcomes) {
    report.per_rep_accuracy.push_back(outcome.accuracy);
    for (std::size_t i = 0; i < report.confusion.size(); ++i)
      report.confusion[i] += outcome.confusion_rows[i];
    if (predictions)
      predictions->insert(predictions->end(), outcome.predictions.begin(),
                          outcome.predictions.end());
  }

  const double n = static_cast<double>(report.per_rep_accuracy.size());
  for (auto& cell : report.confusion) cell /= n;
  double mean = 0.0;
  for (double a : report.per_rep_accuracy) mean += a;
  mean /= n;
  double ss = 0.0;
  for (double a : report.per_rep_accuracy) ss += (a - mean) * (a - mean);
  report.mean_accuracy = mean;
  report.std_accuracy = n > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
  return report;
}

namespace {

std::vector<std::string> sorted_specimen_ids(const Dataset& ds) {
  std::vector<std::string> ids;
  ids.reserve(ds.specimens.size());
  for (const auto& sp : ds.specimens) ids.push_back(sp.specimen_id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace

GridResult settings_grid(const std::map<std::pair<int, double>, CohortData>& datasets,
                         std::span<const SplitPlan> plans, const ScorerFactory& make_scorer,
                         const EvalOptions& opts, int jobs) {
  if (datasets.empty()) throw ConfigError("settings_grid: no datasets");

  GridResult grid;
  {
    std::set<int> exposures;
    std::set<double> apertures;
    for (const auto& [key, _] : datasets) {
      exposures.insert(key.first);
      apertures.insert(key.second);
    }
    grid.exposures.assign(exposures.begin(), exposures.end());
    grid.apertures.assign(apertures.begin(), apertures.end());
  }
  if (datasets.size() != grid.exposures.size() * grid.apertures.size())
    throw ConfigError("settings_grid: datasets do not form a full exposure x aperture grid");

  const auto reference_ids = sorted_specimen_ids(datasets.begin()->second.dataset);
  for (const auto& [key, data] : datasets)
    if (sorted_specimen_ids(data.dataset) != reference_ids)
      throw DataError("settings_grid: datasets do not share specimen ids");

  grid.cells.resize(datasets.size());
  std::vector<const CohortData*> cell_data(datasets.size());
  for (std::size_t a = 0; a < grid.apertures.size(); ++a)
    for (std::size_t e = 0; e < grid.exposures.size(); ++e) {
      const std::size_t idx = a * grid.exposures.size() + e;
      const auto it = datasets.find({grid.exposures[e], grid.apertures[a]});
      grid.cells[idx].settings = CameraSettings{grid.exposures[e], grid.apertures[a]};
      cell_data[idx] = &it->second;
    }

  // Cells are independent; run up to `jobs` of them concurrently.
  std::atomic<std::size_t> next{0};
  std::vector<std::string> errors(grid.cells.size());
  auto worker = [&]() {
    for (;;) {
      const std::size_t idx = next.fetch_add(1);
      if (idx >= grid.cells.size()) return;
      try {
        grid.cells[idx].report = evaluate(*cell_data[idx], plans, make_scorer, opts);
      } catch (const std::exception& e) {
        errors[idx] = e.what();
      }
    }
  };
  const int nthreads = std::max(1, std::min<int>(jobs, static_cast<int>(grid.cells.size())));
  if (nthreads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(nthreads));
    for (int i = 0; i < nthreads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& err : errors)
    if (!err.empty()) throw DataError("settings_grid: " + err);

  grid.best_cell = 0;
  for (std::size_t i = 1; i < grid.cells.size(); ++i)
    if (grid.cells[i].report.mean_accuracy >
        grid.cells[static_cast<std::size_t>(grid.best_cell)].report.mean_accuracy)
      grid.best_cell = static_cast<int>(i);
  return grid;
}

namespace {

CohortData restrict_frames(const CohortData& data,
                           const std::map<std::string, std::set<std::string>>& keep) {
  CohortData out;
  out.dataset.settings = data.dataset.settings;
  out.dataset.registry = data.dataset.registry;
  out.features = data.features;
  for (const auto& sp : data.dataset.specimens) {
    auto it = keep.find(sp.specimen_id);
    if (it == keep.end()) continue;
    SpecimenRecord copy = sp;
    copy.frames.clear();
    for (const auto& f : sp.frames)
      if (it->second.count(f.image_id)) copy.frames.push_back(f);
    out.dataset.specimens.push_back(std::move(copy));
  }
  refresh_mean_areas(out.dataset);
  return out;
}

}  // namespace

AblationResult camera_ablation(const CohortData& data, std::span<const SplitPlan> plans,
                               const ScorerFactory& make_scorer, const EvalOptions& opts,
                               std::uint64_t seed) {
  AblationResult result;
  std::map<std::string, std::set<std::string>> keep_cam1, keep_cam2, keep_both;

  for (const auto& sp : data.dataset.specimens) {
    std::vector<std::string> cam1, cam2, all;
    for (const auto& f : sp.frames) {
      (f.camera_id == 1 ? cam1 : cam2).push_back(f.image_id);
      all.push_back(f.image_id);
    }
    if (cam1.empty() || cam2.empty()) {
      ++result.excluded_specimens;
      continue;
    }
    const int m = static_cast<int>(std::min(cam1.size(), cam2.size()));
    Rng rng(derive_seed(seed, {0xcab1eu, hash_id(sp.specimen_id)}));

    auto pick = [&](const std::vector<std::string>& pool) {
      std::set<std::string> chosen;
      for (int idx : rng.sample_indices(static_cast<int>(pool.size()), m))
        chosen.insert(pool[static_cast<std::size_t>(idx)]);
      return chosen;
    };
    keep_cam1[sp.specimen_id] = pick(cam1);
    keep_cam2[sp.specimen_id] = pick(cam2);
    keep_both[sp.specimen_id] = pick(all);
  }
  if (keep_cam1.empty()) throw DataError("camera_ablation: no specimen has images from both cameras");

  result.camera1 = evaluate(restrict_frames(data, keep_cam1), plans, make_scorer, opts);
  result.camera2 = evaluate(restrict_frames(data, keep_cam2), plans, make_scorer, opts);
  result.both = evaluate(restrict_frames(data, keep_both), plans, make_scorer, opts);
  return result;
}

std::vector<NmaxPoint> nmax_sweep(const CohortData& data, std::span<const SplitPlan> plans,
                                  const ScorerFactory& make_scorer, const EvalOptions& opts,
                                  std::span<const int> nmax_values) {
  std::vector<NmaxPoint> curve;
  for (int nmax : nmax_values) {
    if (nmax < 0) throw ConfigError("nmax_sweep: nmax values must be positive (0 = unlimited)");
    EvalOptions point = opts;
    point.nmax = nmax;
    EvalReport r = evaluate(data, plans, make_scorer, point);
    curve.push_back({nmax, r.mean_accuracy, r.std_accuracy});
  }
  return curve;
}

std::string report_to_json(const EvalReport& report) {
  json j;
  j["settings"] = {{"exposure_us", report.settings.exposure_us},
                   {"aperture_f", report.settings.aperture_f}};
  j["rule"] = agg::rule_name(report.rule);
  j["n_reps"] = report.n_reps;
  j["labels"] = report.labels;
  j["per_rep_accuracy"] = report.per_rep_accuracy;
  j["mean_accuracy"] = report.mean_accuracy;
  j["std_accuracy"] = report.std_accuracy;
  const int k = static_cast<int>(report.labels.size());
  json rows = json::array();
  for (int r = 0; r < k; ++r) {
    json row = json::array();
    for (int c = 0; c < k; ++c) row.push_back(report.confusion[static_cast<std::size_t>(r) * k + c]);
    rows.push_back(std::move(row));
  }
  j["confusion"] = std::move(rows);
  return j.dump(2);
}

void write_confusion_csv(const EvalReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write confusion CSV: " + path.string());
  out.precision(17);
  // True species on rows, predicted on columns.
  out << "true_species";
  for (const auto& name : report.labels) out << ',' << name;
  out << '\n';
  const int k = static_cast<int>(report.labels.size());
  for (int r = 0; r < k; ++r) {
    out << report.labels[static_cast<std::size_t>(r)];
    for (int c = 0; c < k; ++c) out << ',' << report.confusion[static_cast<std::size_t>(r) * k + c];
    out << '\n';
  }
}

std::vector<std::vector<double>> read_confusion_csv(const std::filesystem::path& path,
                                                    std::vector<std::string>* labels) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open confusion CSV: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError("confusion CSV empty: " + path.string());

  std::vector<std::string> header;
  {
    std::istringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  if (labels) labels->assign(header.begin() + 1, header.end());

  std::vector<std::vector<double>> matrix;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');  // row label
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (row.size() != header.size() - 1)
      throw DataError("confusion CSV: ragged row in " + path.string());
    matrix.push_back(std::move(row));
  }
  return matrix;
}

void write_predictions_csv(std::span<const PredictionRow> rows,
                           std::span<const std::string> labels,
                           const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write predictions CSV: " + path.string());
  out << "specimen_id,rule,predicted,true,n_images\n";
  for (const auto& r : rows)
    out << r.specimen_id << ',' << agg::rule_name(r.rule) << ','
        << labels[static_cast<std::size_t>(r.predicted)] << ','
        << labels[static_cast<std::size_t>(r.true_label)] << ',' << r.n_images << '\n';
}

void write_nmax_csv(std::span<const NmaxPoint> curve, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write nmax CSV: " + path.string());
  out.precision(17);
  out << "n_max,mean,std\n";
  for (const auto& p : curve) {
    if (p.nmax == 0)
      out << "inf";
    else
      out << p.nmax;
    out << ',' << p.mean_accuracy << ',' << p.std_accuracy << '\n';
  }
}

void splits_to_csv(std::span<const SplitPlan> plans, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write splits CSV: " + path.string());
  out << "repetition,specimen_id,role\n";
  for (const auto& plan : plans) {
    std::vector<std::pair<std::string, SplitRole>> rows(plan.assignment.begin(),
                                                        plan.assignment.end());
    std::sort(rows.begin(), rows.end());
    for (const auto& [id, role] : rows)
      out << plan.repetition << ',' << id << ',' << role_name(role) << '\n';
  }
}

}  // namespace biodiscover::eval
