#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "biodiscover/types.hpp"

namespace biodiscover {

// A violation is data, not a failure: validation never throws on bad records.
struct Violation {
  std::string code;     // machine-readable, e.g. "no_frames", "duplicate_specimen_id"
  std::string subject;  // specimen id / image id / label name
  std::string message;
};

std::vector<Violation> validate_dataset(const Dataset& ds);

struct SpeciesStats {
  int label_id = -1;
  std::string species;
  int specimen_count = 0;
  std::int64_t image_count = 0;
};

// One entry per registered species, id order. Registered species without
// specimens report (0, 0).
std::vector<SpeciesStats> dataset_statistics(const Dataset& ds);

struct ManifestLoadOptions {
  bool load_pixels = true;
  // Recompute channel means / areas from pixels even when the manifest
  // carries them. Requires load_pixels.
  bool recompute_frame_stats = false;
};

// Manifest layout: manifest.json next to an images/ tree of PNGs.
Dataset load_manifest(const std::filesystem::path& manifest_path,
                      const ManifestLoadOptions& opts = {});

struct ManifestSaveOptions {
  bool write_pixels = true;  // skip PNG writes when frames are metadata-only
};

void save_manifest(const Dataset& ds, const std::filesystem::path& dir,
                   const ManifestSaveOptions& opts = {});

// Recomputes each specimen's mean_area_px2 from its frames.
void refresh_mean_areas(Dataset& ds);

}  // namespace biodiscover
