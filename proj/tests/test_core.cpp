#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <random>

#include "biodiscover/dataset.hpp"
#include "biodiscover/png_io.hpp"
#include "biodiscover/rng.hpp"
#include "test_helpers.hpp"

using namespace biodiscover;
using testutil::make_dataset;
using testutil::make_specimen;

TEST_CASE("validate_dataset accepts a well-formed dataset") {
  auto ds = make_dataset({"Genus alpha", "Genus beta"}, {{3, 2}, {4}});
  CHECK(validate_dataset(ds).empty());
}

TEST_CASE("validate_dataset flags a specimen with zero frames") {
  auto ds = make_dataset({"Genus alpha", "Genus beta"}, {{3}, {4}});
  SpecimenRecord empty;
  empty.specimen_id = "sp_empty";
  empty.label_id = 0;
  ds.specimens.push_back(empty);
  auto violations = validate_dataset(ds);
  REQUIRE_FALSE(violations.empty());
  bool found = false;
  for (const auto& v : violations)
    if (v.code == "no_frames" && v.subject == "sp_empty") found = true;
  CHECK(found);
}

TEST_CASE("validate_dataset flags duplicate specimen ids with both indices") {
  auto ds = make_dataset({"Genus alpha", "Genus beta"}, {{3}, {4}});
  auto dup = make_specimen("sp0000", 1, 2);
  for (auto& f : dup.frames) f.image_id += "_dup";
  ds.specimens.push_back(dup);
  auto violations = validate_dataset(ds);
  bool found = false;
  for (const auto& v : violations)
    if (v.code == "duplicate_specimen_id" && v.subject == "sp0000" &&
        v.message.find("0") != std::string::npos && v.message.find("2") != std::string::npos)
      found = true;
  CHECK(found);
}

TEST_CASE("validate_dataset is idempotent and order-insensitive") {
  auto ds = make_dataset({"Genus alpha", "Genus beta"}, {{3, 2, 5}, {4, 1}});
  auto first = validate_dataset(ds);
  auto second = validate_dataset(ds);
  CHECK(first.size() == second.size());

  auto shuffled = ds;
  std::reverse(shuffled.specimens.begin(), shuffled.specimens.end());
  CHECK(validate_dataset(shuffled).size() == first.size());
}

TEST_CASE("dataset_statistics counts by direct enumeration") {
  // 3-specimen species with 5+7+1 frames -> (3, 13).
  auto ds = make_dataset({"Genus alpha", "Genus beta"}, {{5, 7, 1}, {2}});
  auto stats = dataset_statistics(ds);
  REQUIRE(stats.size() == 2);
  CHECK(stats[0].specimen_count == 3);
  CHECK(stats[0].image_count == 13);
  CHECK(stats[1].specimen_count == 1);
  CHECK(stats[1].image_count == 2);

  // Exhaustive-count oracle: totals equal reachable FrameImage objects.
  std::int64_t reachable = 0;
  for (const auto& sp : ds.specimens) reachable += static_cast<std::int64_t>(sp.frames.size());
  std::int64_t total = 0;
  for (const auto& s : stats) total += s.image_count;
  CHECK(total == reachable);
}

TEST_CASE("dataset_statistics reports (0,0) for a registered species with no specimens") {
  auto ds = make_dataset({"Genus alpha", "Genus beta"}, {{3}, {4}});
  ds.registry.add("Genus vacuus");
  auto stats = dataset_statistics(ds);
  REQUIRE(stats.size() == 3);
  CHECK(stats[2].specimen_count == 0);
  CHECK(stats[2].image_count == 0);
}

TEST_CASE("confidence vector validity") {
  ConfidenceVector ok{{0.25, 0.25, 0.5}};
  CHECK(ok.valid());
  ConfidenceVector bad_sum{{0.3, 0.3}};
  CHECK_FALSE(bad_sum.valid());
  ConfidenceVector negative{{1.2, -0.2}};
  CHECK_FALSE(negative.valid());
  ConfidenceVector nearly{{0.5, 0.5 + 5e-10}};
  CHECK(nearly.valid());
}

TEST_CASE("manifest round-trips through disk with pixels") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "bd_manifest_test";
  fs::remove_all(dir);

  Dataset ds;
  ds.settings = {1500, 8.0};
  ds.registry.add("Genus alpha");
  ds.registry.add("Genus beta");
  Rng rng(7);
  for (int s = 0; s < 2; ++s) {
    SpecimenRecord sp;
    sp.specimen_id = "sp000" + std::to_string(s);
    sp.label_id = s;
    sp.dry_weight_g = 0.01 * (s + 1);
    for (int i = 0; i < 2; ++i) {
      FrameImage f;
      f.image_id = sp.specimen_id + "_c1_f" + std::to_string(i);
      f.camera_id = 1;
      f.capture_time_s = 0.1 * i;
      auto img = std::make_shared<Image>(496, 500);
      for (auto& b : img->rgb) b = static_cast<std::uint8_t>(rng.uniform_int(256));
      f.width_px = img->width;
      f.height_px = img->height;
      f.channel_means = img->channel_means();
      f.silhouette_area_px2 = 1234 + i;
      f.pixels = img;
      sp.frames.push_back(std::move(f));
    }
    ds.specimens.push_back(std::move(sp));
  }
  refresh_mean_areas(ds);

  save_manifest(ds, dir);
  Dataset loaded = load_manifest(dir / "manifest.json");

  CHECK(loaded.settings.exposure_us == 1500);
  CHECK(loaded.registry.size() == 2);
  REQUIRE(loaded.specimens.size() == 2);
  CHECK(loaded.specimens[0].frames.size() == 2);
  CHECK(*loaded.specimens[0].dry_weight_g == doctest::Approx(0.01));
  // Pixels survive the PNG round trip bit-exactly.
  CHECK(loaded.specimens[1].frames[0].pixels->rgb == ds.specimens[1].frames[0].pixels->rgb);
  CHECK(loaded.specimens[1].frames[0].silhouette_area_px2 == 1234);
  CHECK(validate_dataset(loaded).empty());

  fs::remove_all(dir);
}

TEST_CASE("png round trip preserves masks") {
  namespace fs = std::filesystem;
  const fs::path path = fs::temp_directory_path() / "bd_mask_test.png";
  Mask m(33, 21);
  Rng rng(3);
  for (auto& b : m.bits) b = rng.uniform() < 0.4 ? 1 : 0;
  write_mask_png(path, m);
  Mask back = read_mask_png(path);
  CHECK(back.bits == m.bits);
  fs::remove(path);
}

TEST_CASE("derived seeds differ across paths and repeat deterministically") {
  auto a = derive_seed(42, {1, 2, 3});
  auto b = derive_seed(42, {1, 2, 4});
  auto c = derive_seed(42, {1, 2, 3});
  CHECK(a != b);
  CHECK(a == c);
}

TEST_CASE("rng sample_indices returns identity when k >= n") {
  Rng rng(9);
  auto all = rng.sample_indices(5, 5);
  CHECK(all == std::vector<int>{0, 1, 2, 3, 4});
  Rng rng2(9);
  auto more = rng2.sample_indices(5, 12);
  CHECK(more == std::vector<int>{0, 1, 2, 3, 4});
}

TEST_CASE("rng sample_indices draws k distinct ascending indices") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    auto idx = rng.sample_indices(20, 7);
    REQUIRE(idx.size() == 7);
    CHECK(std::is_sorted(idx.begin(), idx.end()));
    CHECK(std::adjacent_find(idx.begin(), idx.end()) == idx.end());
    for (int i : idx) CHECK((i >= 0 && i < 20));
  }
}
