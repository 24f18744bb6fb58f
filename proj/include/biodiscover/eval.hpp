#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "biodiscover/aggregate.hpp"
#include "biodiscover/classify.hpp"
#include "biodiscover/types.hpp"

namespace biodiscover::eval {

enum class SplitRole { Train, Val, Test };

const char* role_name(SplitRole role);

struct SplitPlan {
  int repetition = 0;
  std::uint64_t seed = 0;
  std::unordered_map<std::string, SplitRole> assignment;  // specimen_id -> role
};

struct SplitFractions {
  double train = 0.7, val = 0.1, test = 0.2;
};

// Stratified per species with largest-remainder rounding (remainder ties go
// Train, Val, Test in that order). Depends only on the specimen-id set, so
// plans are reusable across datasets sharing ids.
std::vector<SplitPlan> make_splits(const Dataset& ds, int n_reps, std::uint64_t seed,
                                   const SplitFractions& fractions = {});

struct EvalReport {
  CameraSettings settings;
  agg::DecisionRule rule = agg::DecisionRule::MajorityVote;
  int n_reps = 0;
  std::vector<std::string> labels;
  std::vector<double> per_rep_accuracy;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;  // sample std, n-1
  // Row-normalized confusion (true species rows, predicted columns),
  // averaged elementwise over repetitions. Size K*K, row-major.
  std::vector<double> confusion;

  double confusion_at(int true_label, int predicted) const {
    return confusion[static_cast<std::size_t>(true_label) * labels.size() + predicted];
  }
};

// A dataset plus its per-image features: the unit evaluation operates on.
struct CohortData {
  Dataset dataset;
  classify::FeatureTable features;
};

// Produces per-image confidence vectors for one repetition. fit() sees the
// plan so trainable scorers can fit on Train and checkpoint on Val.
class ImageScorer {
 public:
  virtual ~ImageScorer() = default;
  virtual void fit(const CohortData& data, const SplitPlan& plan, std::uint64_t seed) = 0;
  virtual ConfidenceVector score(const std::string& image_id) const = 0;
};

// Built-in baseline: trains per repetition on the plan's Train images with
// the configured schedule, validation-checkpointed on Val specimens.
class BaselineScorer : public ImageScorer {
 public:
  explicit BaselineScorer(classify::TrainSchedule schedule) : schedule_(std::move(schedule)) {}
  void fit(const CohortData& data, const SplitPlan& plan, std::uint64_t seed) override;
  ConfidenceVector score(const std::string& image_id) const override;
  const classify::BaselineModel& model() const { return model_; }
  classify::TrainLog& last_log() { return log_; }

 private:
  classify::TrainSchedule schedule_;
  classify::BaselineModel model_;
  classify::TrainLog log_;
  const CohortData* data_ = nullptr;
};

// Fixed externally produced scores; fit() is a no-op.
class ExternalScorer : public ImageScorer {
 public:
  explicit ExternalScorer(std::unordered_map<std::string, ConfidenceVector> scores)
      : scores_(std::move(scores)) {}
  void fit(const CohortData&, const SplitPlan&, std::uint64_t) override {}
  ConfidenceVector score(const std::string& image_id) const override;

 private:
  std::unordered_map<std::string, ConfidenceVector> scores_;
};

using ScorerFactory = std::function<std::unique_ptr<ImageScorer>()>;

ScorerFactory baseline_scorer_factory(classify::TrainSchedule schedule);

struct EvalOptions {
  agg::DecisionRule rule = agg::DecisionRule::MajorityVote;
  std::uint64_t seed = 0;
  int nmax = 0;  // 0 = unlimited; otherwise cap on test images per specimen
  int jobs = 1;  // repetitions run as independent jobs; results are
                 // reduced in repetition order, so output is jobs-invariant
};

struct PredictionRow {
  std::string specimen_id;
  agg::DecisionRule rule;
  int predicted = -1;
  int true_label = -1;
  int n_images = 0;
  int repetition = 0;
};

EvalReport evaluate(const CohortData& data, std::span<const SplitPlan> plans,
                    const ScorerFactory& make_scorer, const EvalOptions& opts,
                    std::vector<PredictionRow>* predictions = nullptr);

struct GridCell {
  CameraSettings settings;
  EvalReport report;
};

struct GridResult {
  std::vector<int> exposures;     // column order
  std::vector<double> apertures;  // row order
  std::vector<GridCell> cells;    // row-major over apertures x exposures
  int best_cell = -1;             // index of max mean accuracy

  const EvalReport& report_at(int aperture_idx, int exposure_idx) const {
    return cells[static_cast<std::size_t>(aperture_idx) * exposures.size() + exposure_idx].report;
  }
};

// One report per settings cell; all datasets must share specimen ids and the
// plans are reused verbatim across cells.
GridResult settings_grid(const std::map<std::pair<int, double>, CohortData>& datasets,
                         std::span<const SplitPlan> plans, const ScorerFactory& make_scorer,
                         const EvalOptions& opts, int jobs = 1);

struct AblationResult {
  EvalReport camera1;
  EvalReport camera2;
  EvalReport both;
  int excluded_specimens = 0;  // specimens lacking images from one camera
};

// Equalized per-specimen counts: with (n1, n2) per camera and m = min(n1, n2),
// evaluates m camera-1 images, m camera-2 images, and m sampled from the union.
AblationResult camera_ablation(const CohortData& data, std::span<const SplitPlan> plans,
                               const ScorerFactory& make_scorer, const EvalOptions& opts,
                               std::uint64_t seed);

struct NmaxPoint {
  int nmax = 0;  // 0 = unlimited
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;
};

std::vector<NmaxPoint> nmax_sweep(const CohortData& data, std::span<const SplitPlan> plans,
                                  const ScorerFactory& make_scorer, const EvalOptions& opts,
                                  std::span<const int> nmax_values);

// Report serialization: JSON report, confusion CSV with species headers,
// prediction rows, accuracy curve CSV.
std::string report_to_json(const EvalReport& report);
void write_confusion_csv(const EvalReport& report, const std::filesystem::path& path);
std::vector<std::vector<double>> read_confusion_csv(const std::filesystem::path& path,
                                                    std::vector<std::string>* labels = nullptr);
void write_predictions_csv(std::span<const PredictionRow> rows,
                           std::span<const std::string> labels,
                           const std::filesystem::path& path);
void write_nmax_csv(std::span<const NmaxPoint> curve, const std::filesystem::path& path);

void splits_to_csv(std::span<const SplitPlan> plans, const std::filesystem::path& path);

}  // namespace biodiscover::eval
