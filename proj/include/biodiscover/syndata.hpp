#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "biodiscover/devicesim.hpp"
#include "biodiscover/eval.hpp"
#include "biodiscover/types.hpp"

namespace biodiscover::syndata {

struct SpotModel {
  int count = 0;
  double radius_px = 4.0;
  double contrast = 60.0;   // applied as +/- contrast alternately, zero net
  int camera = 0;           // 0 = both views, 1 or 2 = that view only
};

struct WeightLaw {
  double coeff = 0.002;     // grams at area 1
  double exponent = 1.5;
  double noise_sigma = 0.0; // lognormal noise on top of the power law
};

struct SpeciesModel {
  std::string name;
  std::array<double, 3> color_mean{90.0, 90.0, 90.0};  // body RGB at unit light
  std::array<double, 3> color_jitter{3.0, 3.0, 3.0};   // per-specimen std
  double pixel_noise = 4.0;                            // per-pixel body noise std
  std::array<double, 3> axes_mean{34.0, 26.0, 22.0};   // semi-axes x, y, z (px)
  double axes_sigma = 0.1;                             // lognormal sigma on each axis
  double size_sigma = 0.15;                            // lognormal overall scale
  int limb_count = 4;
  double angle_jitter = 0.15;  // per-frame tumbling, radians
  SpotModel spots;
  std::optional<WeightLaw> weight_law;
};

struct RenderSettings {
  int sensor_width = 560;
  int sensor_height = 760;
  double background_level = 55.0;   // gray at unit light
  double background_noise = 1.5;
  double flicker_sigma = 0.0;       // per-frame global light jitter (fraction)
  double lateral_jitter_px = 2.0;   // per-frame horizontal drift in the cuvette
  double extra_blur_px = 0.0;       // degradation knob on top of the aperture blur
};

// Light scale: linear in exposure, monotone in aperture opening.
double light_scale(const CameraSettings& settings);
// Box-blur radius from the f-number (wider aperture, more blur) plus extra.
int blur_radius(const CameraSettings& settings, double extra_blur_px);

struct TruthFrame {
  std::string image_id;
  int camera_id = 1;
  std::int64_t true_area_px2 = 0;
  double mean_brightness_preclip = 0.0;
};

struct TruthSpecimen {
  std::string specimen_id;
  std::string species;
  double true_mean_area_px2 = 0.0;
  std::optional<double> dry_weight_g;
  double velocity_px_s = 0.0;
  std::vector<TruthFrame> frames;
};

struct GroundTruth {
  std::vector<TruthSpecimen> specimens;
};

struct GenerateOptions {
  CameraSettings settings;
  RenderSettings render;
  sim::SinkParams sink;
  imgproc::CalibrationParams calibration;
  imgproc::CropParams crop;
  int calibration_frames = 5;
  bool keep_pixels = false;        // retain pixel data on the returned frames
  bool extract_features = true;    // fill the feature table as frames stream by
};

// Per-frame sink invoked with the full-resolution artifacts before pixels are
// dropped; used by the PNG writer and debug outputs.
using FrameSink = std::function<void(const SpecimenRecord&, const FrameImage&,
                                     const Mask& cropped_mask, const imgproc::CropGeometry&)>;

// Raw-capture sink, fired before detection/cropping (keep-raw mode).
using RawSink = std::function<void(const std::string& specimen_id, const sim::RawCapture&,
                                   int capture_index)>;

struct GeneratedCohort {
  eval::CohortData data;   // dataset + per-image features
  GroundTruth truth;
  imgproc::BackgroundModel background;
  std::vector<Image> calibration_frames;
};

// Renders every specimen through simulate_pass, runs the real detection and
// crop path on each capture, and assembles a validated dataset. Deterministic
// per (models, counts, options, seed).
GeneratedCohort generate_cohort(std::span<const SpeciesModel> models,
                                std::span<const int> counts, const GenerateOptions& options,
                                std::uint64_t seed, const FrameSink& sink = nullptr,
                                const RawSink& raw_sink = nullptr);

std::string truth_to_json(const GroundTruth& truth);
GroundTruth truth_from_json(const std::string& json_text);

// Preset cohorts used across tests and the CLI example config.
std::vector<SpeciesModel> separable_pair();       // red-ish vs blue-ish
std::vector<SpeciesModel> congener_pair();        // near-identical colors
std::vector<SpeciesModel> texture_pair();         // equal color, spots vs plain
std::vector<SpeciesModel> camera_blind_pair();    // dorsal marking in camera 1 only
std::vector<SpeciesModel> noisy_pair();           // overlapping colors, noisy frames
std::vector<SpeciesModel> twelve_species();

}  // namespace biodiscover::syndata
