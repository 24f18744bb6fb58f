#include "biodiscover/syndata.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "biodiscover/dataset.hpp"
#include "biodiscover/errors.hpp"

namespace biodiscover::syndata {

using nlohmann::json;

double light_scale(const CameraSettings& settings) {
  // Brightness linear in exposure; a wider aperture (smaller f-number)
  // admits more light.
  return (static_cast<double>(settings.exposure_us) / 1000.0) *
         std::sqrt(8.0 / settings.aperture_f);
}

int blur_radius(const CameraSettings& settings, double extra_blur_px) {
  // Smaller f-number, shallower depth of field, blurrier frames.
  const double r = 8.0 / settings.aperture_f - 0.5 + extra_blur_px;
  return std::max(0, static_cast<int>(std::lround(r)));
}

namespace {

struct RealizedSpot {
  double u = 0.0, v = 0.0;  // body coordinates, unit disk
  double radius = 3.0;
  double delta = 0.0;       // signed contrast at unit light
  int camera = 0;
};

struct RealizedLimb {
  double angle = 0.0;
  double length = 12.0;
  double half_width = 1.0;
};

struct RealizedSpecimen {
  std::array<double, 3> color{60, 60, 60};
  double ax = 30, ay = 24, az = 20;
  double base_angle = 0.0;
  double angle_jitter = 0.15;
  double pixel_noise = 4.0;
  std::vector<RealizedSpot> spots;
  std::vector<RealizedLimb> limbs;
};

RealizedSpecimen realize(const SpeciesModel& model, Rng& rng) {
  RealizedSpecimen s;
  const double scale = rng.lognormal(0.0, model.size_sigma);
  s.ax = model.axes_mean[0] * scale * rng.lognormal(0.0, model.axes_sigma);
  s.ay = model.axes_mean[1] * scale * rng.lognormal(0.0, model.axes_sigma);
  s.az = model.axes_mean[2] * scale * rng.lognormal(0.0, model.axes_sigma);
  if (s.ax < 2 || s.ay < 2 || s.az < 2)
    throw ConfigError("syndata: species " + model.name + " produced a degenerate body");
  for (int c = 0; c < 3; ++c)
    s.color[static_cast<std::size_t>(c)] = std::max(
        1.0, model.color_mean[static_cast<std::size_t>(c)] +
                 rng.normal(0.0, model.color_jitter[static_cast<std::size_t>(c)]));
  s.base_angle = rng.uniform(-0.5, 0.5);
  s.angle_jitter = model.angle_jitter;
  s.pixel_noise = model.pixel_noise;

  for (int i = 0; i < model.spots.count; ++i) {
    RealizedSpot spot;
    const double r = 0.85 * std::sqrt(rng.uniform());
    const double phi = rng.uniform(0.0, 6.283185307179586);
    spot.u = r * std::cos(phi);
    spot.v = r * std::sin(phi);
    spot.radius = model.spots.radius_px;
    spot.delta = (i % 2 == 0 ? 1.0 : -1.0) * model.spots.contrast;  // zero net
    spot.camera = model.spots.camera;
    s.spots.push_back(spot);
  }
  for (int i = 0; i < model.limb_count; ++i) {
    RealizedLimb limb;
    limb.angle = (i + rng.uniform(0.2, 0.8)) * 6.283185307179586 / std::max(1, model.limb_count);
    limb.length = rng.uniform(8.0, 16.0);
    limb.half_width = 1.0;
    s.limbs.push_back(limb);
  }
  return s;
}

void box_blur(std::vector<float>& buf, int w, int h, int radius) {
  if (radius <= 0) return;
  std::vector<float> tmp(buf.size());
  // Horizontal pass.
  for (int y = 0; y < h; ++y) {
    for (int c = 0; c < 3; ++c) {
      double sum = 0.0;
      int lo = 0, hi = -1;
      auto pix = [&](int x) -> float& {
        return buf[(static_cast<std::size_t>(y) * w + x) * 3 + static_cast<std::size_t>(c)];
      };
      auto out = [&](int x) -> float& {
        return tmp[(static_cast<std::size_t>(y) * w + x) * 3 + static_cast<std::size_t>(c)];
      };
      for (int x = 0; x < w; ++x) {
        const int nlo = std::max(0, x - radius);
        const int nhi = std::min(w - 1, x + radius);
        while (hi < nhi) sum += pix(++hi);
        while (lo < nlo) sum -= pix(lo++);
        out(x) = static_cast<float>(sum / (nhi - nlo + 1));
      }
    }
  }
  // Vertical pass.
  for (int x = 0; x < w; ++x) {
    for (int c = 0; c < 3; ++c) {
      double sum = 0.0;
      int lo = 0, hi = -1;
      auto pix = [&](int y) -> float& {
        return tmp[(static_cast<std::size_t>(y) * w + x) * 3 + static_cast<std::size_t>(c)];
      };
      auto out = [&](int y) -> float& {
        return buf[(static_cast<std::size_t>(y) * w + x) * 3 + static_cast<std::size_t>(c)];
      };
      for (int y = 0; y < h; ++y) {
        const int nlo = std::max(0, y - radius);
        const int nhi = std::min(h - 1, y + radius);
        while (hi < nhi) sum += pix(++hi);
        while (lo < nlo) sum -= pix(lo++);
        out(y) = static_cast<float>(sum / (nhi - nlo + 1));
      }
    }
  }
}

// Renders one realized specimen for the device simulation.
class InstanceRenderer final : public sim::SpecimenRenderer {
 public:
  InstanceRenderer(const RealizedSpecimen& specimen, const RenderSettings& render,
                   const CameraSettings& settings)
      : specimen_(specimen),
        render_(render),
        light_(light_scale(settings)),
        blur_(blur_radius(settings, render.extra_blur_px)) {}

  int sensor_width() const override { return render_.sensor_width; }
  int sensor_height() const override { return render_.sensor_height; }

  void render_background(int, Rng& rng, Image& frame) const override {
    const int w = render_.sensor_width;
    const int h = render_.sensor_height;
    frame = Image(w, h);
    const double level = render_.background_level * light_;
    const double noise = render_.background_noise * light_;
    for (std::size_t i = 0; i < frame.rgb.size(); ++i) {
      const double v = level + (noise > 0 ? rng.normal(0.0, noise) : 0.0);
      frame.rgb[i] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    }
  }

  void render(int camera_id, double centroid_row, Rng& rng, Image& frame,
              Mask& true_mask) const override {
    double preclip = 0.0;
    render_impl(camera_id, centroid_row, rng, frame, true_mask, preclip);
    last_preclip_mean_ = preclip;
  }

  double last_preclip_mean() const { return last_preclip_mean_; }

 private:
  void render_impl(int camera_id, double centroid_row, Rng& rng, Image& frame,
                   Mask& true_mask, double& preclip_mean) const {
    const int w = render_.sensor_width;
    const int h = render_.sensor_height;
    const double a = camera_id == 1 ? specimen_.ax : specimen_.ay;  // projected half-width
    const double b = specimen_.az;                                  // projected half-height

    const double angle = specimen_.base_angle +
                         (specimen_.angle_jitter > 0 ? rng.normal(0.0, specimen_.angle_jitter) : 0.0);
    const double flicker =
        render_.flicker_sigma > 0 ? 1.0 + rng.normal(0.0, render_.flicker_sigma) : 1.0;
    const double ccol = w / 2.0 + (render_.lateral_jitter_px > 0
                                       ? rng.normal(0.0, render_.lateral_jitter_px)
                                       : 0.0);
    const double crow = centroid_row;
    const double light = light_ * flicker;

    std::vector<float> optical(static_cast<std::size_t>(w) * h * 3);
    const float bg = static_cast<float>(render_.background_level * light);
    std::fill(optical.begin(), optical.end(), bg);
    true_mask = Mask(w, h);

    const double ca = std::cos(angle), sa = std::sin(angle);
    // Specimen bounding box in sensor coordinates, limbs included.
    const double reach = std::max(a, b) + 18.0;
    const int x_lo = std::max(0, static_cast<int>(std::floor(ccol - reach)));
    const int x_hi = std::min(w - 1, static_cast<int>(std::ceil(ccol + reach)));
    const int y_lo = std::max(0, static_cast<int>(std::floor(crow - reach)));
    const int y_hi = std::min(h - 1, static_cast<int>(std::ceil(crow + reach)));

    // Precompute spot centers in sensor coordinates.
    struct SpotPx {
      double x, y, r2, delta;
    };
    std::vector<SpotPx> spots;
    for (const auto& spot : specimen_.spots) {
      if (spot.camera != 0 && spot.camera != camera_id) continue;
      const double bx = spot.u * a, by = spot.v * b;
      spots.push_back({ccol + ca * bx - sa * by, crow + sa * bx + ca * by,
                       spot.radius * spot.radius, spot.delta});
    }
    struct LimbPx {
      double x0, y0, x1, y1, hw;
    };
    std::vector<LimbPx> limbs;
    for (const auto& limb : specimen_.limbs) {
      const double lc = std::cos(limb.angle), ls = std::sin(limb.angle);
      const double bx0 = a * lc * 0.95, by0 = b * ls * 0.95;
      const double bx1 = (a + limb.length) * lc, by1 = (b + limb.length) * ls;
      limbs.push_back({ccol + ca * bx0 - sa * by0, crow + sa * bx0 + ca * by0,
                       ccol + ca * bx1 - sa * by1, crow + sa * bx1 + ca * by1,
                       limb.half_width});
    }

    for (int y = y_lo; y <= y_hi; ++y) {
      for (int x = x_lo; x <= x_hi; ++x) {
        const double dx = x - ccol, dy = y - crow;
        const double bx = ca * dx + sa * dy;   // body frame
        const double by = -sa * dx + ca * dy;
        const double q = (bx / a) * (bx / a) + (by / b) * (by / b);

        bool body = q <= 1.0;
        bool limb_hit = false;
        if (!body) {
          for (const auto& l : limbs) {
            const double vx = l.x1 - l.x0, vy = l.y1 - l.y0;
            const double len2 = vx * vx + vy * vy;
            double t = len2 > 0 ? ((x - l.x0) * vx + (y - l.y0) * vy) / len2 : 0.0;
            t = std::clamp(t, 0.0, 1.0);
            const double px = l.x0 + t * vx - x, py = l.y0 + t * vy - y;
            if (px * px + py * py <= l.hw * l.hw) {
              limb_hit = true;
              break;
            }
          }
        }
        if (!body && !limb_hit) continue;

        true_mask.at(x, y) = 1;
        std::array<double, 3> col = specimen_.color;
        if (limb_hit)
          for (auto& c : col) c *= 0.7;
        if (body) {
          for (const auto& s : spots) {
            const double sx = x - s.x, sy = y - s.y;
            if (sx * sx + sy * sy <= s.r2)
              for (auto& c : col) c += s.delta;
          }
        }
        const double noise =
            specimen_.pixel_noise > 0 ? rng.normal(0.0, specimen_.pixel_noise) : 0.0;
        for (int c = 0; c < 3; ++c)
          optical[(static_cast<std::size_t>(y) * w + x) * 3 + static_cast<std::size_t>(c)] =
              static_cast<float>((col[static_cast<std::size_t>(c)] + noise) * light);
      }
    }

    box_blur(optical, w, h, blur_);

    // Sensor noise rides on top of the blurred optical image.
    frame = Image(w, h);
    const double sensor_noise = render_.background_noise * light;
    double sum = 0.0;
    for (std::size_t i = 0; i < optical.size(); ++i) {
      double v = optical[i] + (sensor_noise > 0 ? rng.normal(0.0, sensor_noise) : 0.0);
      sum += v;
      frame.rgb[i] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    }
    preclip_mean = sum / static_cast<double>(optical.size());
  }

  const RealizedSpecimen& specimen_;
  const RenderSettings& render_;
  double light_;
  int blur_;
  mutable double last_preclip_mean_ = 0.0;
};

}  // namespace

GeneratedCohort generate_cohort(std::span<const SpeciesModel> models, std::span<const int> counts,
                                const GenerateOptions& options, std::uint64_t seed,
                                const FrameSink& sink, const RawSink& raw_sink) {
  if (models.empty()) throw ConfigError("syndata: no species models");
  if (counts.size() != models.size())
    throw ConfigError("syndata: counts and models differ in length");
  for (int c : counts)
    if (c < 1) throw ConfigError("syndata: specimen counts must be >= 1");

  GeneratedCohort cohort;
  cohort.data.dataset.settings = options.settings;
  for (const auto& m : models) cohort.data.dataset.registry.add(m.name);

  // Calibration frames come from the same sensor model, specimen-free.
  {
    Rng bg_rng(derive_seed(seed, {0xba5eu}));
    RealizedSpecimen none;  // renderer only needs render settings for background
    InstanceRenderer renderer(none, options.render, options.settings);
    for (int i = 0; i < std::max(1, options.calibration_frames); ++i) {
      Image frame;
      renderer.render_background(1, bg_rng, frame);
      cohort.calibration_frames.push_back(std::move(frame));
    }
  }
  cohort.background = imgproc::calibrate(cohort.calibration_frames, options.calibration);

  int specimen_counter = 0;
  for (std::size_t s = 0; s < models.size(); ++s) {
    const auto& model = models[s];
    for (int i = 0; i < counts[s]; ++i, ++specimen_counter) {
      std::ostringstream id;
      id << "sp" << std::setw(4) << std::setfill('0') << specimen_counter;

      Rng spec_rng(derive_seed(seed, {1u, static_cast<std::uint64_t>(s),
                                      static_cast<std::uint64_t>(i)}));
      RealizedSpecimen realized = realize(model, spec_rng);
      InstanceRenderer renderer(realized, options.render, options.settings);

      SpecimenRecord record;
      record.specimen_id = id.str();
      record.label_id = static_cast<int>(s);

      TruthSpecimen truth;
      truth.specimen_id = record.specimen_id;
      truth.species = model.name;

      const std::uint64_t pass_seed =
          derive_seed(seed, {2u, static_cast<std::uint64_t>(s), static_cast<std::uint64_t>(i)});
      sim::PassResult pass = sim::simulate_pass(renderer, options.settings, options.sink, pass_seed);
      truth.velocity_px_s = pass.trajectory.velocity_px_s;

      int capture_index = -1;
      double last_t = -1.0;
      for (auto& cap : pass.captures) {
        if (cap.t != last_t) {
          ++capture_index;
          last_t = cap.t;
        }
        if (raw_sink) raw_sink(record.specimen_id, cap, capture_index);
        auto det = imgproc::detect(cap.frame, cohort.background);
        if (!det) continue;  // specimen out of view or below the trigger

        auto cropped = imgproc::crop(cap.frame, det->mask, det->bbox, options.crop);
        FrameImage frame = std::move(cropped.frame);
        std::ostringstream img_id;
        img_id << record.specimen_id << "_c" << cap.camera_id << "_f" << std::setw(3)
               << std::setfill('0') << capture_index;
        frame.image_id = img_id.str();
        frame.camera_id = cap.camera_id;
        frame.capture_time_s = cap.t;
        frame.file = "images/" + frame.image_id + ".png";

        if (options.extract_features) {
          FloatImage scaled = imgproc::rescale_for_classifier(*frame.pixels);
          Mask scaled_mask = imgproc::rescale_mask(cropped.cropped_mask);
          cohort.data.features[frame.image_id] = classify::extract_features(scaled, scaled_mask);
        }
        if (sink) sink(record, frame, cropped.cropped_mask, cropped.geometry);

        TruthFrame tf;
        tf.image_id = frame.image_id;
        tf.camera_id = cap.camera_id;
        tf.true_area_px2 = imgproc::silhouette_area(cap.true_mask);
        tf.mean_brightness_preclip = renderer.last_preclip_mean();
        truth.frames.push_back(std::move(tf));

        if (!options.keep_pixels) frame.pixels.reset();
        record.frames.push_back(std::move(frame));
      }

      double true_mean = 0.0;
      for (const auto& tf : truth.frames) true_mean += static_cast<double>(tf.true_area_px2);
      if (!truth.frames.empty()) true_mean /= static_cast<double>(truth.frames.size());
      truth.true_mean_area_px2 = true_mean;

      if (model.weight_law && true_mean > 0.0) {
        const auto& law = *model.weight_law;
        double noise = law.noise_sigma > 0 ? std::exp(spec_rng.normal(0.0, law.noise_sigma)) : 1.0;
        truth.dry_weight_g = law.coeff * std::pow(true_mean, law.exponent) * noise;
        record.dry_weight_g = truth.dry_weight_g;
      }

      cohort.data.dataset.specimens.push_back(std::move(record));
      cohort.truth.specimens.push_back(std::move(truth));
    }
  }

  refresh_mean_areas(cohort.data.dataset);
  return cohort;
}

std::string truth_to_json(const GroundTruth& truth) {
  json j;
  j["specimens"] = json::array();
  for (const auto& sp : truth.specimens) {
    json jsp;
    jsp["specimen_id"] = sp.specimen_id;
    jsp["species"] = sp.species;
    jsp["true_mean_area_px2"] = sp.true_mean_area_px2;
    jsp["velocity_px_s"] = sp.velocity_px_s;
    if (sp.dry_weight_g) jsp["dry_weight_g"] = *sp.dry_weight_g;
    jsp["frames"] = json::array();
    for (const auto& f : sp.frames)
      jsp["frames"].push_back({{"image_id", f.image_id},
                               {"camera", f.camera_id},
                               {"true_area_px2", f.true_area_px2},
                               {"mean_brightness_preclip", f.mean_brightness_preclip}});
    j["specimens"].push_back(std::move(jsp));
  }
  return j.dump(2);
}

GroundTruth truth_from_json(const std::string& json_text) {
  GroundTruth truth;
  json j = json::parse(json_text);
  for (const auto& jsp : j.at("specimens")) {
    TruthSpecimen sp;
    sp.specimen_id = jsp.at("specimen_id").get<std::string>();
    sp.species = jsp.at("species").get<std::string>();
    sp.true_mean_area_px2 = jsp.at("true_mean_area_px2").get<double>();
    sp.velocity_px_s = jsp.value("velocity_px_s", 0.0);
    if (jsp.contains("dry_weight_g")) sp.dry_weight_g = jsp.at("dry_weight_g").get<double>();
    for (const auto& jf : jsp.at("frames")) {
      TruthFrame f;
      f.image_id = jf.at("image_id").get<std::string>();
      f.camera_id = jf.at("camera").get<int>();
      f.true_area_px2 = jf.at("true_area_px2").get<std::int64_t>();
      f.mean_brightness_preclip = jf.value("mean_brightness_preclip", 0.0);
      sp.frames.push_back(std::move(f));
    }
    truth.specimens.push_back(std::move(sp));
  }
  return truth;
}

namespace {

SpeciesModel base_species(const std::string& name) {
  SpeciesModel m;
  m.name = name;
  return m;
}

}  // namespace

std::vector<SpeciesModel> separable_pair() {
  auto a = base_species("Rubribius separabilis");
  a.color_mean = {70.0, 34.0, 34.0};
  auto b = base_species("Caerulius separabilis");
  b.color_mean = {34.0, 34.0, 70.0};
  return {a, b};
}

std::vector<SpeciesModel> congener_pair() {
  auto a = base_species("Similis similis");
  a.color_mean = {58.0, 52.0, 46.0};
  a.color_jitter = {6.0, 6.0, 6.0};
  auto b = base_species("Similis proximus");
  b.color_mean = {54.0, 54.0, 46.0};
  b.color_jitter = {6.0, 6.0, 6.0};
  return {a, b};
}

std::vector<SpeciesModel> texture_pair() {
  auto a = base_species("Maculatus texturatus");
  a.color_mean = {56.0, 56.0, 56.0};
  a.spots = SpotModel{12, 4.0, 26.0, 0};
  auto b = base_species("Planus texturatus");
  b.color_mean = {56.0, 56.0, 56.0};
  return {a, b};
}

std::vector<SpeciesModel> camera_blind_pair() {
  auto pair = texture_pair();
  pair[0].name = "Dorsalis signatus";
  pair[0].spots.camera = 1;  // marking visible to camera 1 only
  pair[1].name = "Dorsalis planus";
  return pair;
}

std::vector<SpeciesModel> noisy_pair() {
  auto a = base_species("Varius ruber");
  a.color_mean = {62.0, 46.0, 46.0};
  a.color_jitter = {8.0, 8.0, 8.0};
  a.pixel_noise = 8.0;
  auto b = base_species("Varius caeruleus");
  b.color_mean = {46.0, 46.0, 62.0};
  b.color_jitter = {8.0, 8.0, 8.0};
  b.pixel_noise = 8.0;
  return {a, b};
}

std::vector<SpeciesModel> twelve_species() {
  std::vector<SpeciesModel> out;
  const char* names[12] = {
      "Alpha imaginarius",  "Beta imaginarius",  "Gamma imaginarius", "Delta imaginarius",
      "Epsilon imaginarius", "Zeta imaginarius", "Eta imaginarius",   "Theta imaginarius",
      "Iota imaginarius",   "Kappa imaginarius", "Lambda imaginarius", "Mu imaginarius"};
  for (int i = 0; i < 12; ++i) {
    auto m = base_species(names[i]);
    const double hue = i / 12.0;
    m.color_mean = {40.0 + 30.0 * std::fabs(std::sin(6.283 * hue)),
                    40.0 + 30.0 * std::fabs(std::sin(6.283 * hue + 2.1)),
                    40.0 + 30.0 * std::fabs(std::sin(6.283 * hue + 4.2))};
    m.axes_mean = {30.0 + 2.0 * (i % 4), 24.0 + 1.5 * (i % 3), 20.0 + 1.2 * (i % 5)};
    if (i % 3 == 0) m.spots = SpotModel{6 + i, 3.5, 20.0, 0};
    if (i >= 9) m.weight_law = WeightLaw{0.002, 1.5, 0.1};  // weighed subset
    out.push_back(std::move(m));
  }
  return out;
}

}  // namespace biodiscover::syndata
