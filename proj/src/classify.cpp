#include "biodiscover/classify.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "biodiscover/aggregate.hpp"
#include "biodiscover/errors.hpp"
#include "biodiscover/rng.hpp"

namespace biodiscover::classify {

using nlohmann::json;

void validate_schedule(const TrainSchedule& s) {
  if (s.batch_size <= 0) throw ConfigError("schedule: batch_size must be positive");
  if (s.epochs_per_rate < 0) throw ConfigError("schedule: epochs_per_rate must be >= 0");
  for (std::size_t i = 0; i < s.learning_rates.size(); ++i) {
    if (s.learning_rates[i] <= 0.0) throw ConfigError("schedule: learning rates must be positive");
    if (i > 0 && s.learning_rates[i] >= s.learning_rates[i - 1])
      throw ConfigError("schedule: learning rates must be strictly decreasing");
  }
}

FeatureVector extract_features(const FloatImage& img, const Mask& mask) {
  FeatureVector f;
  const int w = img.width;
  const int h = img.height;
  const std::size_t n = static_cast<std::size_t>(w) * h;

  // 0..2: channel means over the full crop.
  for (std::size_t i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c) f.v[static_cast<std::size_t>(c)] += img.rgb[i * 3 + static_cast<std::size_t>(c)];
  for (int c = 0; c < 3; ++c) f.v[static_cast<std::size_t>(c)] /= static_cast<double>(n);

  // 3..26: per-channel 8-bin histograms over [0,1], mass-normalized.
  for (std::size_t i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c) {
      float v = img.rgb[i * 3 + static_cast<std::size_t>(c)];
      int bin = std::min(kHistogramBins - 1, static_cast<int>(v * kHistogramBins));
      f.v[static_cast<std::size_t>(3 + c * kHistogramBins + bin)] += 1.0;
    }
  for (int k = 0; k < 3 * kHistogramBins; ++k)
    f.v[static_cast<std::size_t>(3 + k)] /= static_cast<double>(n);

  // 27..29: silhouette area (fraction), bbox aspect, fill ratio.
  std::int64_t area = 0;
  int x0 = w, y0 = h, x1 = 0, y1 = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (!mask.empty() && mask.at(x, y)) {
        ++area;
        x0 = std::min(x0, x);
        y0 = std::min(y0, y);
        x1 = std::max(x1, x + 1);
        y1 = std::max(y1, y + 1);
      }
  if (area == 0) {
    f.degenerate = true;  // geometric features carry no information
  } else {
    f.v[27] = static_cast<double>(area) / static_cast<double>(n);
    f.v[28] = static_cast<double>(x1 - x0) / static_cast<double>(y1 - y0);
    f.v[29] = static_cast<double>(area) / (static_cast<double>(x1 - x0) * (y1 - y0));
  }
  return f;
}

std::array<double, kFeatureDim> Standardizer::apply(const FeatureVector& f) const {
  std::array<double, kFeatureDim> out;
  for (int i = 0; i < kFeatureDim; ++i)
    out[static_cast<std::size_t>(i)] =
        (f.v[static_cast<std::size_t>(i)] - mean[static_cast<std::size_t>(i)]) / stddev[static_cast<std::size_t>(i)];
  return out;
}

ConfidenceVector softmax(std::span<const double> logits) {
  ConfidenceVector cv;
  cv.probs.resize(logits.size());
  double max_logit = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    cv.probs[i] = std::exp(logits[i] - max_logit);
    sum += cv.probs[i];
  }
  for (auto& p : cv.probs) p /= sum;
  return cv;
}

double cross_entropy_loss_grad(std::span<const double> weights, std::span<const double> bias,
                               int num_classes,
                               std::span<const std::array<double, kFeatureDim>> inputs,
                               std::span<const int> labels, std::span<double> grad_weights,
                               std::span<double> grad_bias) {
  const std::size_t batch = inputs.size();
  std::fill(grad_weights.begin(), grad_weights.end(), 0.0);
  std::fill(grad_bias.begin(), grad_bias.end(), 0.0);

  double loss = 0.0;
  std::vector<double> logits(static_cast<std::size_t>(num_classes));
  for (std::size_t i = 0; i < batch; ++i) {
    const auto& x = inputs[i];
    for (int k = 0; k < num_classes; ++k) {
      double z = bias[static_cast<std::size_t>(k)];
      const double* wrow = weights.data() + static_cast<std::size_t>(k) * kFeatureDim;
      for (int d = 0; d < kFeatureDim; ++d) z += wrow[d] * x[static_cast<std::size_t>(d)];
      logits[static_cast<std::size_t>(k)] = z;
    }
    ConfidenceVector p = softmax(logits);
    loss += -std::log(std::max(1e-300, p.probs[static_cast<std::size_t>(labels[i])]));
    for (int k = 0; k < num_classes; ++k) {
      const double err = p.probs[static_cast<std::size_t>(k)] - (k == labels[i] ? 1.0 : 0.0);
      grad_bias[static_cast<std::size_t>(k)] += err;
      double* grow = grad_weights.data() + static_cast<std::size_t>(k) * kFeatureDim;
      for (int d = 0; d < kFeatureDim; ++d) grow[d] += err * x[static_cast<std::size_t>(d)];
    }
  }
  const double inv = 1.0 / static_cast<double>(batch);
  for (auto& g : grad_weights) g *= inv;
  for (auto& g : grad_bias) g *= inv;
  return loss * inv;
}

namespace {

Standardizer fit_standardizer(std::span<const TrainImage> train) {
  Standardizer st;
  const double n = static_cast<double>(train.size());
  for (const auto& t : train)
    for (int d = 0; d < kFeatureDim; ++d) st.mean[static_cast<std::size_t>(d)] += t.features.v[static_cast<std::size_t>(d)];
  for (int d = 0; d < kFeatureDim; ++d) st.mean[static_cast<std::size_t>(d)] /= n;
  for (const auto& t : train)
    for (int d = 0; d < kFeatureDim; ++d) {
      const double diff = t.features.v[static_cast<std::size_t>(d)] - st.mean[static_cast<std::size_t>(d)];
      st.stddev[static_cast<std::size_t>(d)] += diff * diff;
    }
  for (int d = 0; d < kFeatureDim; ++d) {
    st.stddev[static_cast<std::size_t>(d)] = std::sqrt(st.stddev[static_cast<std::size_t>(d)] / n);
    if (st.stddev[static_cast<std::size_t>(d)] < 1e-12) st.stddev[static_cast<std::size_t>(d)] = 1.0;
  }
  return st;
}

double val_majority_accuracy(const BaselineModel& model, std::span<const ValSpecimen> val) {
  if (val.empty()) return 0.0;
  int correct = 0;
  std::vector<ConfidenceVector> vectors;
  for (const auto& vs : val) {
    vectors.clear();
    vectors.reserve(vs.images.size());
    for (const auto& img : vs.images) vectors.push_back(predict_image(model, img));
    auto pred = agg::majority_vote(vs.specimen_id, vectors);
    if (pred.predicted == vs.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(val.size());
}

}  // namespace

BaselineModel train_baseline(std::span<const TrainImage> train, std::span<const ValSpecimen> val,
                             int num_classes, const TrainSchedule& schedule, std::uint64_t seed,
                             TrainLog* log) {
  validate_schedule(schedule);
  if (train.empty()) throw DataError("train_baseline: empty training set");
  if (num_classes < 2) throw DataError("train_baseline: need at least 2 classes");

  std::set<int> present;
  for (const auto& t : train) present.insert(t.label);
  for (int k = 0; k < num_classes; ++k)
    if (!present.count(k))
      throw DataError("train_baseline: class " + std::to_string(k) + " absent from training set");

  BaselineModel model;
  model.num_classes = num_classes;
  model.weights.assign(static_cast<std::size_t>(num_classes) * kFeatureDim, 0.0);
  model.bias.assign(static_cast<std::size_t>(num_classes), 0.0);
  model.standardizer = fit_standardizer(train);
  model.schedule = schedule;
  model.seed = seed;

  std::vector<std::array<double, kFeatureDim>> inputs(train.size());
  std::vector<int> labels(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    inputs[i] = model.standardizer.apply(train[i].features);
    labels[i] = train[i].label;
  }

  // Validation specimens standardized once (parameters frozen at train time).
  std::vector<ValSpecimen> val_std(val.begin(), val.end());

  const int total_epochs = static_cast<int>(schedule.learning_rates.size()) * schedule.epochs_per_rate;
  if (total_epochs == 0) {
    model.untrained = true;  // zero-epoch schedule: initial weights, flagged
    model.best_epoch = -1;
    model.best_val_accuracy = val_majority_accuracy(model, val_std);
    return model;
  }

  std::vector<double> weights = model.weights;
  std::vector<double> bias = model.bias;
  std::vector<double> gw(weights.size()), gb(bias.size());
  std::vector<int> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  BaselineModel best = model;
  double best_acc = -1.0;
  int best_epoch = -1;
  int global_epoch = 0;

  std::vector<std::array<double, kFeatureDim>> batch_x;
  std::vector<int> batch_y;

  for (std::size_t stage = 0; stage < schedule.learning_rates.size(); ++stage) {
    const double lr = schedule.learning_rates[stage];
    for (int epoch = 0; epoch < schedule.epochs_per_rate; ++epoch, ++global_epoch) {
      Rng shuffle_rng(derive_seed(seed, {0xe90c5u, stage, static_cast<std::uint64_t>(epoch)}));
      std::vector<int> idx = order;
      shuffle_rng.shuffle(idx);

      double epoch_loss = 0.0;
      std::size_t batches = 0;
      for (std::size_t start = 0; start < idx.size(); start += static_cast<std::size_t>(schedule.batch_size)) {
        const std::size_t end = std::min(idx.size(), start + static_cast<std::size_t>(schedule.batch_size));
        batch_x.clear();
        batch_y.clear();
        for (std::size_t i = start; i < end; ++i) {
          batch_x.push_back(inputs[static_cast<std::size_t>(idx[i])]);
          batch_y.push_back(labels[static_cast<std::size_t>(idx[i])]);
        }
        epoch_loss += cross_entropy_loss_grad(weights, bias, num_classes, batch_x, batch_y, gw, gb);
        ++batches;
        for (std::size_t i = 0; i < weights.size(); ++i) weights[i] -= lr * gw[i];
        for (std::size_t i = 0; i < bias.size(); ++i) bias[i] -= lr * gb[i];
      }
      epoch_loss /= static_cast<double>(std::max<std::size_t>(1, batches));

      model.weights = weights;
      model.bias = bias;
      const double acc = val_majority_accuracy(model, val_std);
      const bool is_best = acc > best_acc;  // ties keep the earliest checkpoint
      if (is_best) {
        best_acc = acc;
        best_epoch = global_epoch;
        best.weights = weights;
        best.bias = bias;
      }
      if (log)
        log->push_back({static_cast<int>(stage), lr, epoch, global_epoch, epoch_loss, acc, is_best});
    }
  }

  if (val.empty()) {
    // No validation specimens: final weights stand.
    best.weights = weights;
    best.bias = bias;
    best_epoch = global_epoch - 1;
    best_acc = 0.0;
  }
  best.best_epoch = best_epoch;
  best.best_val_accuracy = std::max(0.0, best_acc);
  return best;
}

ConfidenceVector predict_image(const BaselineModel& model, const FeatureVector& features) {
  auto x = model.standardizer.apply(features);
  std::vector<double> logits(static_cast<std::size_t>(model.num_classes));
  for (int k = 0; k < model.num_classes; ++k) {
    double z = model.bias[static_cast<std::size_t>(k)];
    const double* wrow = model.weights.data() + static_cast<std::size_t>(k) * kFeatureDim;
    for (int d = 0; d < kFeatureDim; ++d) z += wrow[d] * x[static_cast<std::size_t>(d)];
    logits[static_cast<std::size_t>(k)] = z;
  }
  return softmax(logits);
}

void save_model(const BaselineModel& model, const std::filesystem::path& path) {
  json j;
  j["num_classes"] = model.num_classes;
  j["weights"] = model.weights;
  j["bias"] = model.bias;
  j["standardizer"]["mean"] = model.standardizer.mean;
  j["standardizer"]["stddev"] = model.standardizer.stddev;
  j["schedule"]["learning_rates"] = model.schedule.learning_rates;
  j["schedule"]["epochs_per_rate"] = model.schedule.epochs_per_rate;
  j["schedule"]["batch_size"] = model.schedule.batch_size;
  j["seed"] = model.seed;
  j["best_epoch"] = model.best_epoch;
  j["best_val_accuracy"] = model.best_val_accuracy;
  j["untrained"] = model.untrained;
  std::ofstream out(path);
  if (!out) throw DataError("cannot write model file: " + path.string());
  out << j.dump(2) << '\n';
}

BaselineModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open model file: " + path.string());
  json j;
  try {
    in >> j;
    BaselineModel m;
    m.num_classes = j.at("num_classes").get<int>();
    m.weights = j.at("weights").get<std::vector<double>>();
    m.bias = j.at("bias").get<std::vector<double>>();
    auto mean = j.at("standardizer").at("mean").get<std::vector<double>>();
    auto stddev = j.at("standardizer").at("stddev").get<std::vector<double>>();
    if (mean.size() != kFeatureDim || stddev.size() != kFeatureDim ||
        m.weights.size() != static_cast<std::size_t>(m.num_classes) * kFeatureDim ||
        m.bias.size() != static_cast<std::size_t>(m.num_classes))
      throw DataError("model file: inconsistent dimensions");
    std::copy(mean.begin(), mean.end(), m.standardizer.mean.begin());
    std::copy(stddev.begin(), stddev.end(), m.standardizer.stddev.begin());
    m.schedule.learning_rates = j.at("schedule").at("learning_rates").get<std::vector<double>>();
    m.schedule.epochs_per_rate = j.at("schedule").at("epochs_per_rate").get<int>();
    m.schedule.batch_size = j.at("schedule").at("batch_size").get<int>();
    m.seed = j.value("seed", 0ULL);
    m.best_epoch = j.value("best_epoch", -1);
    m.best_val_accuracy = j.value("best_val_accuracy", 0.0);
    m.untrained = j.value("untrained", false);
    return m;
  } catch (const json::exception& e) {
    throw DataError("model file parse error: " + std::string(e.what()));
  }
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, ',')) out.push_back(cur);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

}  // namespace

std::unordered_map<std::string, ConfidenceVector> load_external_scores(
    const std::filesystem::path& path, const Dataset& ds, ScoreLoadReport* report) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open score file: " + path.string());

  std::set<std::string> known_ids;
  for (const auto& sp : ds.specimens)
    for (const auto& f : sp.frames) known_ids.insert(f.image_id);

  const int k = ds.registry.size();
  std::unordered_map<std::string, ConfidenceVector> scores;

  std::string line;
  int line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (!header_seen) {
      header_seen = true;
      if (!cells.empty() && cells[0] == "image_id") {
        if (static_cast<int>(cells.size()) != k + 1)
          throw DataError("score file header has " + std::to_string(cells.size() - 1) +
                          " probability columns, dataset has " + std::to_string(k) + " classes");
        continue;  // header row
      }
    }
    auto reject = [&](const std::string& reason) {
      if (report) report->rejected.push_back({line_no, cells.empty() ? "" : cells[0], reason});
    };
    if (static_cast<int>(cells.size()) != k + 1) {
      reject("expected " + std::to_string(k + 1) + " columns");
      continue;
    }
    if (!known_ids.count(cells[0])) {
      reject("unknown image_id");
      continue;
    }
    ConfidenceVector cv;
    cv.probs.resize(static_cast<std::size_t>(k));
    bool parse_ok = true;
    double sum = 0.0;
    for (int i = 0; i < k; ++i) {
      try {
        cv.probs[static_cast<std::size_t>(i)] = std::stod(cells[static_cast<std::size_t>(i + 1)]);
      } catch (...) {
        parse_ok = false;
        break;
      }
      sum += cv.probs[static_cast<std::size_t>(i)];
    }
    if (!parse_ok) {
      reject("unparseable probability");
      continue;
    }
    if (std::fabs(sum - 1.0) > 1e-6) {
      reject("row sums to " + std::to_string(sum) + ", not 1");
      continue;
    }
    bool in_range = true;
    for (double p : cv.probs)
      if (p < 0.0 || p > 1.0) in_range = false;
    if (!in_range) {
      reject("probability outside [0,1]");
      continue;
    }
    scores[cells[0]] = std::move(cv);
  }

  if (report)
    for (const auto& id : known_ids)
      if (!scores.count(id)) report->missing_image_ids.push_back(id);
  return scores;
}

void save_features_csv(const FeatureTable& table, const Dataset& ds,
                       const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write features file: " + path.string());
  out << "image_id,specimen_id,camera,label,degenerate";
  for (int d = 0; d < kFeatureDim; ++d) out << ",f" << d;
  out << '\n';
  out.precision(17);
  for (const auto& sp : ds.specimens)
    for (const auto& f : sp.frames) {
      auto it = table.find(f.image_id);
      if (it == table.end()) continue;
      out << f.image_id << ',' << sp.specimen_id << ',' << f.camera_id << ','
          << ds.registry.name_of(sp.label_id) << ',' << (it->second.degenerate ? 1 : 0);
      for (int d = 0; d < kFeatureDim; ++d) out << ',' << it->second.v[static_cast<std::size_t>(d)];
      out << '\n';
    }
}

FeatureTable load_features_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open features file: " + path.string());
  FeatureTable table;
  std::string line;
  bool header = true;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    auto cells = split_csv_line(line);
    if (cells.size() != static_cast<std::size_t>(5 + kFeatureDim))
      throw DataError("features file line " + std::to_string(line_no) + ": bad column count");
    FeatureVector f;
    f.degenerate = cells[4] == "1";
    for (int d = 0; d < kFeatureDim; ++d)
      f.v[static_cast<std::size_t>(d)] = std::stod(cells[static_cast<std::size_t>(5 + d)]);
    table[cells[0]] = f;
  }
  return table;
}

}  // namespace biodiscover::classify
