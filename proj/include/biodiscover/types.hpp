#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "biodiscover/image.hpp"

namespace biodiscover {

struct SpeciesLabel {
  int id = -1;          // dense 0..K-1
  std::string name;     // scientific binomial, unique
};

struct CameraSettings {
  int exposure_us = 1000;
  double aperture_f = 8.0;

  bool operator==(const CameraSettings&) const = default;
};

// One cropped frame. Pixel data is optional: pipelines strip it once the
// per-frame metadata (channel means, silhouette area) has been computed.
struct FrameImage {
  std::string image_id;
  int camera_id = 1;  // 1 or 2
  double capture_time_s = 0.0;
  int width_px = 0;
  int height_px = 0;
  std::shared_ptr<const Image> pixels;          // may be null (metadata only)
  std::array<double, 3> channel_means{};        // r, g, b in [0, 255]
  std::int64_t silhouette_area_px2 = 0;
  std::string file;  // PNG path relative to the manifest, when persisted
};

struct SpecimenRecord {
  std::string specimen_id;
  int label_id = -1;
  std::vector<FrameImage> frames;
  double mean_area_px2 = 0.0;  // arithmetic mean of frame silhouette areas
  std::optional<double> dry_weight_g;
};

class LabelRegistry {
 public:
  LabelRegistry() = default;
  explicit LabelRegistry(std::vector<std::string> names);

  int add(const std::string& name);          // returns existing id if present
  int id_of(const std::string& name) const;  // -1 if unknown
  const std::string& name_of(int id) const;
  int size() const { return static_cast<int>(labels_.size()); }
  const std::vector<SpeciesLabel>& labels() const { return labels_; }

 private:
  std::vector<SpeciesLabel> labels_;
};

struct Dataset {
  CameraSettings settings;
  LabelRegistry registry;
  std::vector<SpecimenRecord> specimens;
};

struct ConfidenceVector {
  std::vector<double> probs;

  int num_classes() const { return static_cast<int>(probs.size()); }
  // Entries in [0,1] and summing to one within tol.
  bool valid(double tol = 1e-9) const;
};

}  // namespace biodiscover
