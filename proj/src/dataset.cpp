#include "biodiscover/dataset.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "biodiscover/errors.hpp"
#include "biodiscover/png_io.hpp"

namespace biodiscover {

using nlohmann::json;

std::vector<Violation> validate_dataset(const Dataset& ds) {
  std::vector<Violation> out;

  if (ds.registry.size() < 2)
    out.push_back({"registry_too_small", "",
                   "label registry has " + std::to_string(ds.registry.size()) +
                       " species, need at least 2"});
  {
    std::set<std::string> names;
    for (const auto& l : ds.registry.labels()) {
      if (!names.insert(l.name).second)
        out.push_back({"duplicate_species_name", l.name, "species name registered twice"});
    }
  }
  if (ds.settings.exposure_us <= 0)
    out.push_back({"bad_exposure", "", "exposure_us must be positive"});
  if (ds.settings.aperture_f <= 0)
    out.push_back({"bad_aperture", "", "aperture_f must be positive"});

  std::map<std::string, std::vector<std::size_t>> id_positions;
  for (std::size_t i = 0; i < ds.specimens.size(); ++i)
    id_positions[ds.specimens[i].specimen_id].push_back(i);
  for (const auto& [id, positions] : id_positions) {
    if (positions.size() > 1) {
      std::ostringstream msg;
      msg << "specimen id appears at indices";
      for (auto p : positions) msg << ' ' << p;
      out.push_back({"duplicate_specimen_id", id, msg.str()});
    }
  }

  std::set<std::string> image_ids;
  for (const auto& sp : ds.specimens) {
    if (sp.label_id < 0 || sp.label_id >= ds.registry.size())
      out.push_back({"unknown_label", sp.specimen_id,
                     "label id " + std::to_string(sp.label_id) + " not in registry"});
    if (sp.frames.empty())
      out.push_back({"no_frames", sp.specimen_id, "specimen has zero frames"});
    if (sp.dry_weight_g && *sp.dry_weight_g <= 0.0)
      out.push_back({"bad_dry_weight", sp.specimen_id, "dry_weight_g must be positive"});

    double area_sum = 0.0;
    for (const auto& f : sp.frames) {
      if (!image_ids.insert(f.image_id).second)
        out.push_back({"duplicate_image_id", f.image_id, "image id appears twice"});
      if (f.camera_id != 1 && f.camera_id != 2)
        out.push_back({"bad_camera_id", f.image_id,
                       "camera_id " + std::to_string(f.camera_id) + " not in {1,2}"});
      if (f.height_px < f.width_px && f.width_px > 0)
        out.push_back({"bad_crop_height", f.image_id, "height_px below crop width"});
      for (double m : f.channel_means)
        if (m < 0.0 || m > 255.0) {
          out.push_back({"bad_channel_mean", f.image_id, "channel mean outside [0,255]"});
          break;
        }
      if (f.silhouette_area_px2 < 0 ||
          (f.width_px > 0 &&
           f.silhouette_area_px2 > static_cast<std::int64_t>(f.width_px) * f.height_px))
        out.push_back({"bad_silhouette_area", f.image_id,
                       "silhouette area exceeds crop pixel count"});
      area_sum += static_cast<double>(f.silhouette_area_px2);
    }
    if (!sp.frames.empty()) {
      double expect = area_sum / static_cast<double>(sp.frames.size());
      if (std::fabs(expect - sp.mean_area_px2) > 1e-6 * std::max(1.0, std::fabs(expect)))
        out.push_back({"mean_area_mismatch", sp.specimen_id,
                       "mean_area_px2 is not the mean of frame areas"});
    }
  }
  return out;
}

std::vector<SpeciesStats> dataset_statistics(const Dataset& ds) {
  std::vector<SpeciesStats> stats(static_cast<std::size_t>(ds.registry.size()));
  for (const auto& l : ds.registry.labels()) {
    stats[static_cast<std::size_t>(l.id)].label_id = l.id;
    stats[static_cast<std::size_t>(l.id)].species = l.name;
  }
  for (const auto& sp : ds.specimens) {
    if (sp.label_id < 0 || sp.label_id >= ds.registry.size()) continue;
    auto& s = stats[static_cast<std::size_t>(sp.label_id)];
    s.specimen_count += 1;
    s.image_count += static_cast<std::int64_t>(sp.frames.size());
  }
  return stats;
}

void refresh_mean_areas(Dataset& ds) {
  for (auto& sp : ds.specimens) {
    if (sp.frames.empty()) {
      sp.mean_area_px2 = 0.0;
      continue;
    }
    double sum = 0.0;
    for (const auto& f : sp.frames) sum += static_cast<double>(f.silhouette_area_px2);
    sp.mean_area_px2 = sum / static_cast<double>(sp.frames.size());
  }
}

Dataset load_manifest(const std::filesystem::path& manifest_path,
                      const ManifestLoadOptions& opts) {
  std::ifstream in(manifest_path);
  if (!in) throw DataError("cannot open manifest: " + manifest_path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw DataError("manifest parse error: " + std::string(e.what()));
  }

  Dataset ds;
  const auto base = manifest_path.parent_path();
  try {
    ds.settings.exposure_us = doc.at("settings").at("exposure_us").get<int>();
    ds.settings.aperture_f = doc.at("settings").at("aperture_f").get<double>();
    for (const auto& name : doc.at("species")) ds.registry.add(name.get<std::string>());

    for (const auto& jsp : doc.at("specimens")) {
      SpecimenRecord sp;
      sp.specimen_id = jsp.at("id").get<std::string>();
      sp.label_id = ds.registry.id_of(jsp.at("species").get<std::string>());
      if (sp.label_id < 0)
        throw DataError("specimen " + sp.specimen_id + " references unregistered species " +
                        jsp.at("species").get<std::string>());
      if (jsp.contains("dry_weight_g") && !jsp.at("dry_weight_g").is_null())
        sp.dry_weight_g = jsp.at("dry_weight_g").get<double>();

      for (const auto& jf : jsp.at("frames")) {
        FrameImage f;
        f.image_id = jf.at("image_id").get<std::string>();
        f.file = jf.at("file").get<std::string>();
        f.camera_id = jf.at("camera").get<int>();
        f.capture_time_s = jf.value("time_s", 0.0);
        f.silhouette_area_px2 = jf.value("area_px2", static_cast<std::int64_t>(0));
        if (jf.contains("channel_means")) {
          auto cm = jf.at("channel_means");
          for (int c = 0; c < 3; ++c) f.channel_means[static_cast<std::size_t>(c)] = cm.at(c);
        }
        f.width_px = jf.value("width_px", 0);
        f.height_px = jf.value("height_px", 0);

        if (opts.load_pixels) {
          auto img = std::make_shared<Image>(read_png(base / f.file));
          f.width_px = img->width;
          f.height_px = img->height;
          if (opts.recompute_frame_stats || !jf.contains("channel_means"))
            f.channel_means = img->channel_means();
          f.pixels = std::move(img);
        }
        sp.frames.push_back(std::move(f));
      }
      ds.specimens.push_back(std::move(sp));
    }
  } catch (const json::exception& e) {
    throw DataError("manifest field error: " + std::string(e.what()));
  }
  refresh_mean_areas(ds);
  return ds;
}

void save_manifest(const Dataset& ds, const std::filesystem::path& dir,
                   const ManifestSaveOptions& opts) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "images");

  json doc;
  doc["settings"] = {{"exposure_us", ds.settings.exposure_us},
                     {"aperture_f", ds.settings.aperture_f}};
  doc["species"] = json::array();
  for (const auto& l : ds.registry.labels()) doc["species"].push_back(l.name);

  doc["specimens"] = json::array();
  for (const auto& sp : ds.specimens) {
    json jsp;
    jsp["id"] = sp.specimen_id;
    jsp["species"] = ds.registry.name_of(sp.label_id);
    if (sp.dry_weight_g) jsp["dry_weight_g"] = *sp.dry_weight_g;
    jsp["frames"] = json::array();
    for (const auto& f : sp.frames) {
      std::string file = f.file.empty() ? ("images/" + f.image_id + ".png") : f.file;
      if (opts.write_pixels && f.pixels) write_png(dir / file, *f.pixels);
      json jf;
      jf["image_id"] = f.image_id;
      jf["file"] = file;
      jf["camera"] = f.camera_id;
      jf["time_s"] = f.capture_time_s;
      jf["width_px"] = f.width_px;
      jf["height_px"] = f.height_px;
      jf["area_px2"] = f.silhouette_area_px2;
      jf["channel_means"] = {f.channel_means[0], f.channel_means[1], f.channel_means[2]};
      jsp["frames"].push_back(std::move(jf));
    }
    doc["specimens"].push_back(std::move(jsp));
  }

  std::ofstream out(dir / "manifest.json");
  if (!out) throw DataError("cannot write manifest under " + dir.string());
  out << doc.dump(2) << '\n';
}

}  // namespace biodiscover
