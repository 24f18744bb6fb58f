#pragma once

#include <string>
#include <vector>

#include "biodiscover/types.hpp"

namespace testutil {

using namespace biodiscover;

// Metadata-only frame for dataset-level tests.
inline FrameImage make_frame(const std::string& image_id, int camera, double area = 1000,
                             std::array<double, 3> means = {100, 100, 100}) {
  FrameImage f;
  f.image_id = image_id;
  f.camera_id = camera;
  f.width_px = 496;
  f.height_px = 496;
  f.silhouette_area_px2 = static_cast<std::int64_t>(area);
  f.channel_means = means;
  return f;
}

inline SpecimenRecord make_specimen(const std::string& id, int label, int n_frames,
                                    std::array<double, 3> means = {100, 100, 100},
                                    double area = 1000) {
  SpecimenRecord sp;
  sp.specimen_id = id;
  sp.label_id = label;
  for (int i = 0; i < n_frames; ++i)
    sp.frames.push_back(
        make_frame(id + "_c" + std::to_string(1 + i % 2) + "_f" + std::to_string(i), 1 + i % 2,
                   area, means));
  sp.mean_area_px2 = area;
  return sp;
}

inline Dataset make_dataset(const std::vector<std::string>& species,
                            const std::vector<std::vector<int>>& frames_per_specimen) {
  Dataset ds;
  for (const auto& name : species) ds.registry.add(name);
  int counter = 0;
  for (std::size_t s = 0; s < frames_per_specimen.size(); ++s)
    for (int n : frames_per_specimen[s]) {
      std::string id = "sp" + std::string(counter < 10 ? "000" : counter < 100 ? "00" : "0") +
                       std::to_string(counter);
      ds.specimens.push_back(make_specimen(id, static_cast<int>(s), n));
      ++counter;
    }
  return ds;
}

}  // namespace testutil
