#include <doctest.h>

#include <cmath>

#include "biodiscover/errors.hpp"
#include "biodiscover/imgproc.hpp"
#include "biodiscover/rng.hpp"
#include "test_helpers.hpp"

using namespace biodiscover;
using namespace biodiscover::imgproc;

namespace {

Image flat(int w, int h, std::uint8_t v) {
  Image img(w, h, v);
  return img;
}

// Rasterization oracle: pixel centers inside the ellipse.
Mask ellipse_mask(int w, int h, double cx, double cy, double a, double b) {
  Mask m(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double dx = (x - cx) / a, dy = (y - cy) / b;
      if (dx * dx + dy * dy <= 1.0) m.at(x, y) = 1;
    }
  return m;
}

void paint(Image& img, const Mask& m, std::uint8_t v) {
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      if (m.at(x, y)) img.at(x, y, 0) = img.at(x, y, 1) = img.at(x, y, 2) = v;
}

}  // namespace

TEST_CASE("calibrate: identical frames floor the tolerance everywhere") {
  std::vector<Image> frames(3, flat(40, 30, 120));
  auto bg = calibrate(frames);
  for (float t : bg.tol) CHECK(t == doctest::Approx(8.0));
  for (float m : bg.mean) CHECK(m == doctest::Approx(120.0));
}

TEST_CASE("calibrate: mismatched frame dimensions error") {
  std::vector<Image> frames{flat(40, 30, 120), flat(41, 30, 120)};
  CHECK_THROWS_AS(calibrate(frames), DataError);
}

TEST_CASE("calibrate: noisy frames match the direct std oracle") {
  // Per-pixel Gaussian sigma=2: tolerance ~ max(8, 4*2) = 8.
  Rng rng(5);
  const int w = 32, h = 24, n = 10;
  std::vector<Image> frames;
  std::vector<std::vector<double>> values(static_cast<std::size_t>(w) * h * 3);
  for (int i = 0; i < n; ++i) {
    Image img(w, h);
    for (std::size_t j = 0; j < img.rgb.size(); ++j) {
      double v = std::clamp(128.0 + rng.normal(0.0, 2.0), 0.0, 255.0);
      img.rgb[j] = static_cast<std::uint8_t>(std::lround(v));
      values[j].push_back(static_cast<double>(img.rgb[j]));
    }
    frames.push_back(std::move(img));
  }
  auto bg = calibrate(frames);

  // Direct mean/std computation on the same samples.
  for (std::size_t j = 0; j < values.size(); ++j) {
    double mean = 0;
    for (double v : values[j]) mean += v;
    mean /= n;
    double var = 0;
    for (double v : values[j]) var += (v - mean) * (v - mean);
    var /= n;
    CHECK(bg.mean[j] == doctest::Approx(mean).epsilon(1e-6));
    CHECK(bg.tol[j] == doctest::Approx(std::max(8.0, 4.0 * std::sqrt(var))).epsilon(1e-5));
  }
}

TEST_CASE("detect: frame identical to reference is absent") {
  std::vector<Image> frames(3, flat(60, 60, 100));
  auto bg = calibrate(frames);
  CHECK_FALSE(detect(flat(60, 60, 100), bg).has_value());
}

TEST_CASE("detect: dimension mismatch errors") {
  std::vector<Image> frames(2, flat(60, 60, 100));
  auto bg = calibrate(frames);
  CHECK_THROWS_AS(detect(flat(61, 60, 100), bg), DataError);
}

TEST_CASE("detect: synthetic ellipse recovered within 5% area") {
  const int w = 300, h = 300;
  std::vector<Image> frames(3, flat(w, h, 160));
  auto bg = calibrate(frames);

  // Area 2000: a*b*pi = 2000 -> a=28.2, b=22.6.
  Mask truth = ellipse_mask(w, h, 150, 140, 28.2, 22.57);
  Image frame = flat(w, h, 160);
  paint(frame, truth, 90);

  auto det = detect(frame, bg);
  REQUIRE(det.has_value());
  const auto true_area = silhouette_area(truth);
  const auto got = silhouette_area(det->mask);
  CHECK(std::fabs(static_cast<double>(got - true_area)) / static_cast<double>(true_area) <= 0.05);
  // Bounding box contains the ellipse.
  CHECK(det->bbox.x0 <= 150 - 28);
  CHECK(det->bbox.x1 >= 150 + 28);
  CHECK(det->bbox.y0 <= 140 - 22);
  CHECK(det->bbox.y1 >= 140 + 22);
}

TEST_CASE("detect: largest connected component wins") {
  const int w = 300, h = 200;
  std::vector<Image> frames(3, flat(w, h, 160));
  auto bg = calibrate(frames);

  Image frame = flat(w, h, 160);
  // 3000-px blob: 60x50 rectangle. 100-px blob: 10x10 far away.
  for (int y = 40; y < 90; ++y)
    for (int x = 30; x < 90; ++x) frame.at(x, y, 0) = frame.at(x, y, 1) = frame.at(x, y, 2) = 90;
  for (int y = 150; y < 160; ++y)
    for (int x = 250; x < 260; ++x)
      frame.at(x, y, 0) = frame.at(x, y, 1) = frame.at(x, y, 2) = 90;

  auto det = detect(frame, bg);
  REQUIRE(det.has_value());
  CHECK(silhouette_area(det->mask) == 3000);
  CHECK(det->bbox.x0 == 30);
  CHECK(det->bbox.x1 == 90);
  CHECK(det->bbox.y0 == 40);
  CHECK(det->bbox.y1 == 90);
}

TEST_CASE("detect: below-trigger deviation is absent") {
  std::vector<Image> frames(3, flat(100, 100, 160));
  auto bg = calibrate(frames);
  Image frame = flat(100, 100, 160);
  // 49 deviating pixels < default theta 50.
  for (int i = 0; i < 49; ++i) frame.at(i % 10, i / 10, 1) = 20;
  CHECK_FALSE(detect(frame, bg).has_value());
  frame.at(5, 8, 1) = 20;  // 50th pixel crosses the trigger
  CHECK(detect(frame, bg).has_value());
}

TEST_CASE("crop: centered window matches the arithmetic oracle") {
  // bbox height 100, centroid row 600 on a 1200-row frame -> rows 352..847.
  const int w = 600, h = 1200;
  Image raw = flat(w, h, 150);
  Mask mask(w, h);
  for (int y = 550; y < 650; ++y)
    for (int x = 280; x < 320; ++x) mask.at(x, y) = 1;
  Bbox bbox{280, 550, 320, 650};

  auto res = crop(raw, mask, bbox);
  CHECK(res.frame.width_px == 496);
  CHECK(res.frame.height_px == 496);
  CHECK(res.geometry.row0 == 352);
  CHECK(res.geometry.row1 - 1 == 847);
  CHECK_FALSE(res.geometry.clamped);
  CHECK(res.geometry.centroid_row == doctest::Approx(599.5));
}

TEST_CASE("crop: tall specimens keep their bbox height") {
  const int w = 600, h = 1200;
  Image raw = flat(w, h, 150);
  Mask mask(w, h);
  for (int y = 200; y < 800; ++y)
    for (int x = 280; x < 330; ++x) mask.at(x, y) = 1;
  Bbox bbox{280, 200, 330, 800};

  auto res = crop(raw, mask, bbox);
  CHECK(res.frame.width_px == 496);
  CHECK(res.frame.height_px == 600);
  CHECK(res.geometry.row0 == 200);
  CHECK(res.geometry.row1 == 800);
}

TEST_CASE("crop: clamps at the sensor edge") {
  const int w = 600, h = 1200;
  Image raw = flat(w, h, 150);
  Mask mask(w, h);
  for (int y = 0; y < 21; ++y)
    for (int x = 280; x < 320; ++x) mask.at(x, y) = 1;
  Bbox bbox{280, 0, 320, 21};

  auto res = crop(raw, mask, bbox);  // centroid row 10
  CHECK(res.geometry.row0 == 0);
  CHECK(res.geometry.row1 == 496);
  CHECK(res.geometry.clamped);
}

TEST_CASE("crop: frame narrower than the window is a configuration error") {
  Image raw = flat(400, 600, 150);
  Mask mask(400, 600);
  mask.at(200, 300) = 1;
  CHECK_THROWS_AS(crop(raw, mask, Bbox{200, 300, 201, 301}), ConfigError);
}

TEST_CASE("crop geometry invariants over random specimens") {
  Rng rng(17);
  const int w = 560, h = 900;
  for (int trial = 0; trial < 200; ++trial) {
    const double a = rng.uniform(8.0, 60.0);
    const double b = rng.uniform(8.0, 140.0);
    const double cx = rng.uniform(100.0, w - 100.0);
    const double cy = rng.uniform(0.0, static_cast<double>(h));
    Mask mask = ellipse_mask(w, h, cx, cy, a, b);
    if (silhouette_area(mask) == 0) continue;
    Bbox bbox{w, h, 0, 0};
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        if (mask.at(x, y)) {
          bbox.x0 = std::min(bbox.x0, x);
          bbox.y0 = std::min(bbox.y0, y);
          bbox.x1 = std::max(bbox.x1, x + 1);
          bbox.y1 = std::max(bbox.y1, y + 1);
        }
    Image raw = flat(w, h, 150);
    auto res = crop(raw, mask, bbox);
    CHECK(res.frame.width_px == 496);
    CHECK(res.frame.height_px == std::max(496, bbox.height()));
    if (res.frame.height_px == 496 && !res.geometry.clamped) {
      const double center = res.geometry.row0 + (496 - 1) / 2.0;
      CHECK(std::fabs(res.geometry.centroid_row - center) <= 1.0);
    }
  }
}

TEST_CASE("rescale: constant image stays constant") {
  Image img = flat(496, 496, 128);
  auto out = rescale_for_classifier(img);
  CHECK(out.width == 128);
  CHECK(out.height == 128);
  for (float v : out.rgb) CHECK(v == doctest::Approx(128.0 / 255.0));
}

TEST_CASE("rescale: 2:1 squeeze produces a 128x128 output") {
  Image img = flat(496, 992, 90);
  auto out = rescale_for_classifier(img);
  CHECK(out.width == 128);
  CHECK(out.height == 128);
  for (float v : out.rgb) CHECK(v == doctest::Approx(90.0 / 255.0));
}

TEST_CASE("rescale: checkerboard mean preserved within 1/255") {
  // 4-px checkerboard; mean-preservation oracle of bilinear resampling.
  Image img(496, 496);
  double mean_in = 0.0;
  for (int y = 0; y < 496; ++y)
    for (int x = 0; x < 496; ++x) {
      const std::uint8_t v = (((x / 4) + (y / 4)) % 2) ? 255 : 0;
      img.at(x, y, 0) = img.at(x, y, 1) = img.at(x, y, 2) = v;
      mean_in += v;
    }
  mean_in /= 496.0 * 496.0 * 255.0;

  auto out = rescale_for_classifier(img);
  double mean_out = 0.0;
  for (float v : out.rgb) mean_out += v;
  mean_out /= static_cast<double>(out.rgb.size());
  CHECK(std::fabs(mean_out - mean_in) <= 1.0 / 255.0);
}

TEST_CASE("silhouette_area equals brute-force counting") {
  CHECK(silhouette_area(Mask(10, 10)) == 0);

  Mask rect(60, 50);
  for (int y = 5; y < 45; ++y)
    for (int x = 5; x < 55; ++x) rect.at(x, y) = 1;
  CHECK(silhouette_area(rect) == 2000);

  // Ellipse semi-axes (30, 20): area within 2% of pi*30*20.
  Mask ell = ellipse_mask(100, 100, 50, 50, 30, 20);
  const double expect = 3.14159265358979 * 30 * 20;
  CHECK(std::fabs(static_cast<double>(silhouette_area(ell)) - expect) / expect <= 0.02);

  Rng rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    Mask m(37, 29);
    std::int64_t count = 0;
    for (auto& b : m.bits) {
      b = rng.uniform() < 0.3 ? 1 : 0;
      count += b;
    }
    CHECK(silhouette_area(m) == count);
  }
}

namespace {

Dataset screen_dataset(const std::vector<std::vector<std::array<double, 3>>>& specimen_means) {
  Dataset ds;
  ds.registry.add("Genus alpha");
  ds.registry.add("Genus beta");
  int counter = 0;
  for (std::size_t s = 0; s < specimen_means.size(); ++s)
    for (const auto& means : specimen_means[s]) {
      auto sp = testutil::make_specimen("sp" + std::to_string(100 + counter++),
                                        static_cast<int>(s), 3, means);
      ds.specimens.push_back(sp);
    }
  return ds;
}

}  // namespace

TEST_CASE("outlier_screen: identical specimens produce no flags") {
  std::vector<std::vector<std::array<double, 3>>> means{
      {{100, 100, 100}, {100, 100, 100}, {100, 100, 100}}, {{90, 90, 90}, {90, 90, 90}}};
  auto report = outlier_screen(screen_dataset(means));
  CHECK(report.flagged.empty());
}

TEST_CASE("outlier_screen: gross red-channel outlier flagged on R only") {
  // 20 specimens near r=100, one at r=200; direct mean/std oracle.
  std::vector<std::array<double, 3>> group;
  Rng rng(31);
  for (int i = 0; i < 20; ++i)
    group.push_back({100.0 + rng.normal(0.0, 1.0), 100.0, 100.0});
  group.push_back({200.0, 100.0, 100.0});
  auto ds = screen_dataset({group, {{90, 90, 90}, {90, 90, 90}}});

  auto report = outlier_screen(ds);
  REQUIRE(report.flagged.size() == 1);
  CHECK(report.flagged[0].channels == std::vector<int>{0});

  // Oracle: the flagged specimen is the one whose R deviates beyond 3 sigma.
  double mean = 0;
  for (const auto& m : group) mean += m[0];
  mean /= static_cast<double>(group.size());
  double ss = 0;
  for (const auto& m : group) ss += (m[0] - mean) * (m[0] - mean);
  const double sd = std::sqrt(ss / static_cast<double>(group.size() - 1));
  CHECK(std::fabs(200.0 - mean) > 3 * sd);
}

TEST_CASE("outlier_screen: exactly 3 sigma is not flagged (strict inequality)") {
  // 19 specimens at R = {103, 97, 100 x17}: the mean is exactly 100 and the
  // sample variance is (9 + 9) / 18 = 1, so both extremes sit at exactly
  // 3 sigma and the strict rule must leave them unflagged.
  std::vector<std::array<double, 3>> group;
  group.push_back({103, 100, 100});
  group.push_back({97, 100, 100});
  for (int i = 0; i < 17; ++i) group.push_back({100, 100, 100});
  auto ds = screen_dataset({group, {{90, 90, 90}, {90, 90, 90}}});
  auto report = outlier_screen(ds);
  CHECK(report.flagged.empty());
}

TEST_CASE("outlier_screen: species with one specimen is skipped with a warning") {
  std::vector<std::vector<std::array<double, 3>>> means{
      {{100, 100, 100}}, {{90, 90, 90}, {91, 91, 91}}};
  auto report = outlier_screen(screen_dataset(means));
  CHECK(report.flagged.empty());
  REQUIRE(report.warnings.size() == 1);
  CHECK(report.warnings[0].find("Genus alpha") != std::string::npos);
}

TEST_CASE("outlier_screen invariance under reorder and constant channel shift") {
  Rng rng(41);
  std::vector<std::array<double, 3>> group;
  for (int i = 0; i < 15; ++i)
    group.push_back({100 + rng.normal(0, 2), 110 + rng.normal(0, 2), 120 + rng.normal(0, 2)});
  group.push_back({130.0, 110.0, 120.0});  // clear R outlier
  auto ds = screen_dataset({group, {{90, 90, 90}, {90, 90, 90}}});
  auto base = outlier_screen(ds);

  auto reordered = ds;
  std::reverse(reordered.specimens.begin(), reordered.specimens.end());
  auto rep2 = outlier_screen(reordered);
  REQUIRE(base.flagged.size() == rep2.flagged.size());
  CHECK(base.flagged[0].specimen_id == rep2.flagged[0].specimen_id);

  // Adding a constant to every frame of one species shifts mean and sigma
  // together; the flag set is unchanged.
  auto shifted = ds;
  for (auto& sp : shifted.specimens)
    if (sp.label_id == 0)
      for (auto& f : sp.frames)
        for (auto& c : f.channel_means) c += 17.0;
  auto rep3 = outlier_screen(shifted);
  REQUIRE(base.flagged.size() == rep3.flagged.size());
  CHECK(base.flagged[0].specimen_id == rep3.flagged[0].specimen_id);
}

TEST_CASE("background model round-trips through disk") {
  namespace fs = std::filesystem;
  std::vector<Image> frames(4, flat(24, 18, 140));
  frames[1].at(3, 3, 1) = 170;
  auto bg = calibrate(frames);
  const fs::path path = fs::temp_directory_path() / "bd_bg_test.bgm";
  save_background(bg, path);
  auto back = load_background(path);
  CHECK(back.width == bg.width);
  CHECK(back.height == bg.height);
  CHECK(back.theta_trigger == bg.theta_trigger);
  CHECK(back.mean == bg.mean);
  CHECK(back.tol == bg.tol);
  fs::remove(path);
}
