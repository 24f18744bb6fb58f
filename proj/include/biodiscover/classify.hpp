#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "biodiscover/image.hpp"
#include "biodiscover/types.hpp"

namespace biodiscover::classify {

inline constexpr int kFeatureDim = 30;
inline constexpr int kHistogramBins = 8;

// 3 channel means + 3x8 channel histograms + area + bbox aspect + fill ratio.
struct FeatureVector {
  std::array<double, kFeatureDim> v{};
  bool degenerate = false;  // empty mask: geometric features forced to zero
};

FeatureVector extract_features(const FloatImage& img, const Mask& mask);

struct TrainSchedule {
  std::vector<double> learning_rates{1e-3, 1e-4, 1e-5, 1e-6};  // strictly decreasing
  int epochs_per_rate = 50;
  int batch_size = 128;
};

void validate_schedule(const TrainSchedule& s);

struct Standardizer {
  std::array<double, kFeatureDim> mean{};
  std::array<double, kFeatureDim> stddev{};  // zero-variance features pinned to 1

  std::array<double, kFeatureDim> apply(const FeatureVector& f) const;
};

struct BaselineModel {
  int num_classes = 0;
  std::vector<double> weights;  // num_classes * kFeatureDim, row-major
  std::vector<double> bias;     // num_classes
  Standardizer standardizer;
  TrainSchedule schedule;
  std::uint64_t seed = 0;
  int best_epoch = -1;          // global epoch index of the checkpoint, -1 = untrained
  double best_val_accuracy = 0.0;
  bool untrained = false;       // schedule had zero total epochs
};

struct TrainImage {
  std::string image_id;
  std::string specimen_id;
  int label = -1;
  FeatureVector features;
};

// Validation is specimen-level: the checkpoint criterion is majority-vote
// accuracy over these groups.
struct ValSpecimen {
  std::string specimen_id;
  int label = -1;
  std::vector<FeatureVector> images;
};

struct TrainLogEntry {
  int stage = 0;
  double learning_rate = 0.0;
  int epoch = 0;         // epoch index within the stage
  int global_epoch = 0;
  double train_loss = 0.0;
  double val_accuracy = 0.0;
  bool checkpoint = false;
};

using TrainLog = std::vector<TrainLogEntry>;

BaselineModel train_baseline(std::span<const TrainImage> train,
                             std::span<const ValSpecimen> val, int num_classes,
                             const TrainSchedule& schedule, std::uint64_t seed,
                             TrainLog* log = nullptr);

ConfidenceVector predict_image(const BaselineModel& model, const FeatureVector& features);

// Softmax probabilities from raw logits; shift-invariant and sums to one.
ConfidenceVector softmax(std::span<const double> logits);

// Mean cross-entropy over the batch plus analytic gradients. Exposed for the
// finite-difference check; train_baseline uses the same path.
double cross_entropy_loss_grad(std::span<const double> weights, std::span<const double> bias,
                               int num_classes,
                               std::span<const std::array<double, kFeatureDim>> inputs,
                               std::span<const int> labels, std::span<double> grad_weights,
                               std::span<double> grad_bias);

void save_model(const BaselineModel& model, const std::filesystem::path& path);
BaselineModel load_model(const std::filesystem::path& path);

struct ScoreRejection {
  int line = 0;  // 1-based line number in the score file
  std::string image_id;
  std::string reason;
};

struct ScoreLoadReport {
  std::vector<ScoreRejection> rejected;
  std::vector<std::string> missing_image_ids;  // dataset images with no row
};

// CSV adapter for externally produced per-image class probabilities.
// Header: image_id,p_0,...,p_{K-1}
std::unordered_map<std::string, ConfidenceVector> load_external_scores(
    const std::filesystem::path& path, const Dataset& ds, ScoreLoadReport* report = nullptr);

// Per-image features for a whole dataset, keyed by image id.
using FeatureTable = std::unordered_map<std::string, FeatureVector>;

void save_features_csv(const FeatureTable& table, const Dataset& ds,
                       const std::filesystem::path& path);
FeatureTable load_features_csv(const std::filesystem::path& path);

}  // namespace biodiscover::classify
