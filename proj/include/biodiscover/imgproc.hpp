#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "biodiscover/image.hpp"
#include "biodiscover/types.hpp"

namespace biodiscover::imgproc {

struct CalibrationParams {
  double tol_scale = 4.0;   // tolerance = tol_scale * per-pixel std
  double tol_floor = 8.0;   // minimum tolerance, gray levels
  int theta_trigger = 50;   // minimum deviating-pixel count to report a detection
};

// Per-pixel per-channel reference and tolerance, same shape as the sensor.
struct BackgroundModel {
  int width = 0;
  int height = 0;
  std::vector<float> mean;  // w*h*3
  std::vector<float> tol;   // w*h*3
  int theta_trigger = 50;
};

BackgroundModel calibrate(std::span<const Image> background_frames,
                          const CalibrationParams& params = {});

// Compact binary persistence (magic + dims + float planes).
void save_background(const BackgroundModel& bg, const std::filesystem::path& path);
BackgroundModel load_background(const std::filesystem::path& path);

struct Detection {
  Mask mask;   // largest 8-connected component of deviating pixels
  Bbox bbox;   // extent of that component
  int deviating_pixels = 0;  // pre-cleaning count (trigger statistic)
};

// Empty optional when fewer than theta_trigger pixels deviate.
std::optional<Detection> detect(const Image& frame, const BackgroundModel& bg);

struct CropParams {
  int cuvette_left = -1;  // leftmost crop column; -1 centers the 496-px window
  int crop_width = 496;
  int min_height = 496;
};

struct CropGeometry {
  int raw_width = 0, raw_height = 0;
  int col0 = 0, col1 = 0;  // half-open crop columns
  int row0 = 0, row1 = 0;  // half-open crop rows
  Bbox specimen_bbox;
  double centroid_row = 0.0, centroid_col = 0.0;
  bool clamped = false;  // vertical window hit a sensor edge
};

struct CropResult {
  FrameImage frame;   // pixels, channel means, silhouette area filled in
  CropGeometry geometry;
  Mask cropped_mask;  // detection mask restricted to the crop window
};

CropResult crop(const Image& raw, const Mask& mask, const Bbox& bbox,
                const CropParams& params = {});

// Bilinear resample of the crop to the classifier resolution, values in [0,1].
FloatImage rescale_for_classifier(const Image& img, int out_size = 128);

// Nearest-neighbour mask resample matching rescale_for_classifier geometry.
Mask rescale_mask(const Mask& mask, int out_size = 128);

std::int64_t silhouette_area(const Mask& mask);

struct OutlierFlag {
  std::string specimen_id;
  std::vector<int> channels;  // offending channels, 0=R 1=G 2=B
};

struct OutlierReport {
  std::vector<OutlierFlag> flagged;     // review list, never auto-deletion
  std::vector<std::string> warnings;    // species skipped for n < 2 etc.
};

// Flags specimens whose per-specimen mean channel value lies strictly beyond
// three sample standard deviations from the species average, per channel.
OutlierReport outlier_screen(const Dataset& ds);

}  // namespace biodiscover::imgproc
