#include "biodiscover/imgproc.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>

#include "biodiscover/errors.hpp"

namespace biodiscover::imgproc {

BackgroundModel calibrate(std::span<const Image> background_frames,
                          const CalibrationParams& params) {
  if (background_frames.empty()) throw DataError("calibrate: no background frames");
  const int w = background_frames[0].width;
  const int h = background_frames[0].height;
  for (const auto& f : background_frames)
    if (f.width != w || f.height != h)
      throw DataError("calibrate: background frames have mismatched dimensions");

  const std::size_t n = static_cast<std::size_t>(w) * h * 3;
  std::vector<double> sum(n, 0.0), sumsq(n, 0.0);
  for (const auto& f : background_frames)
    for (std::size_t i = 0; i < n; ++i) {
      double v = f.rgb[i];
      sum[i] += v;
      sumsq[i] += v * v;
    }

  BackgroundModel bg;
  bg.width = w;
  bg.height = h;
  bg.theta_trigger = params.theta_trigger;
  bg.mean.resize(n);
  bg.tol.resize(n);
  const double count = static_cast<double>(background_frames.size());
  for (std::size_t i = 0; i < n; ++i) {
    double mean = sum[i] / count;
    double var = std::max(0.0, sumsq[i] / count - mean * mean);
    bg.mean[i] = static_cast<float>(mean);
    bg.tol[i] = static_cast<float>(std::max(params.tol_floor, params.tol_scale * std::sqrt(var)));
  }
  return bg;
}

void save_background(const BackgroundModel& bg, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write background model: " + path.string());
  const char magic[4] = {'B', 'D', 'B', 'G'};
  out.write(magic, 4);
  const std::int32_t dims[3] = {bg.width, bg.height, bg.theta_trigger};
  out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  out.write(reinterpret_cast<const char*>(bg.mean.data()),
            static_cast<std::streamsize>(bg.mean.size() * sizeof(float)));
  out.write(reinterpret_cast<const char*>(bg.tol.data()),
            static_cast<std::streamsize>(bg.tol.size() * sizeof(float)));
}

BackgroundModel load_background(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open background model: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || magic[0] != 'B' || magic[1] != 'D' || magic[2] != 'B' || magic[3] != 'G')
    throw DataError("not a background model file: " + path.string());
  std::int32_t dims[3];
  in.read(reinterpret_cast<char*>(dims), sizeof(dims));
  BackgroundModel bg;
  bg.width = dims[0];
  bg.height = dims[1];
  bg.theta_trigger = dims[2];
  if (bg.width <= 0 || bg.height <= 0)
    throw DataError("background model has invalid dimensions: " + path.string());
  const std::size_t n = static_cast<std::size_t>(bg.width) * bg.height * 3;
  bg.mean.resize(n);
  bg.tol.resize(n);
  in.read(reinterpret_cast<char*>(bg.mean.data()), static_cast<std::streamsize>(n * sizeof(float)));
  in.read(reinterpret_cast<char*>(bg.tol.data()), static_cast<std::streamsize>(n * sizeof(float)));
  if (!in) throw DataError("background model truncated: " + path.string());
  return bg;
}

namespace {

// Largest 8-connected component of set pixels; iterative flood fill.
void largest_component(const Mask& deviating, Mask& out, Bbox& bbox) {
  const int w = deviating.width;
  const int h = deviating.height;
  std::vector<std::int32_t> label(static_cast<std::size_t>(w) * h, -1);
  std::vector<std::int64_t> sizes;
  std::vector<std::int32_t> stack;

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t idx = static_cast<std::size_t>(y) * w + x;
      if (!deviating.bits[idx] || label[idx] >= 0) continue;
      const std::int32_t id = static_cast<std::int32_t>(sizes.size());
      sizes.push_back(0);
      label[idx] = id;
      stack.push_back(static_cast<std::int32_t>(idx));
      while (!stack.empty()) {
        const std::int32_t cur = stack.back();
        stack.pop_back();
        ++sizes[static_cast<std::size_t>(id)];
        const int cy = cur / w;
        const int cx = cur % w;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            if (dx == 0 && dy == 0) continue;
            const int nx = cx + dx;
            const int ny = cy + dy;
            if (nx < 0 || nx >= w || ny < 0 || ny >= h) continue;
            const std::size_t nidx = static_cast<std::size_t>(ny) * w + nx;
            if (deviating.bits[nidx] && label[nidx] < 0) {
              label[nidx] = id;
              stack.push_back(static_cast<std::int32_t>(nidx));
            }
          }
        }
      }
    }
  }

  std::int32_t best = -1;
  std::int64_t best_size = 0;
  for (std::size_t i = 0; i < sizes.size(); ++i)
    if (sizes[i] > best_size) {
      best_size = sizes[i];
      best = static_cast<std::int32_t>(i);
    }

  out = Mask(w, h);
  bbox = Bbox{w, h, 0, 0};
  if (best < 0) {
    bbox = Bbox{};
    return;
  }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t idx = static_cast<std::size_t>(y) * w + x;
      if (label[idx] == best) {
        out.bits[idx] = 1;
        bbox.x0 = std::min(bbox.x0, x);
        bbox.y0 = std::min(bbox.y0, y);
        bbox.x1 = std::max(bbox.x1, x + 1);
        bbox.y1 = std::max(bbox.y1, y + 1);
      }
    }
}

}  // namespace

std::optional<Detection> detect(const Image& frame, const BackgroundModel& bg) {
  if (frame.width != bg.width || frame.height != bg.height)
    throw DataError("detect: frame dimensions do not match background model");

  Mask deviating(frame.width, frame.height);
  int count = 0;
  const std::size_t pixels = static_cast<std::size_t>(frame.width) * frame.height;
  for (std::size_t i = 0; i < pixels; ++i) {
    for (int c = 0; c < 3; ++c) {
      const std::size_t j = i * 3 + static_cast<std::size_t>(c);
      if (std::fabs(static_cast<double>(frame.rgb[j]) - bg.mean[j]) > bg.tol[j]) {
        deviating.bits[i] = 1;
        ++count;
        break;
      }
    }
  }
  if (count < bg.theta_trigger) return std::nullopt;

  Detection det;
  det.deviating_pixels = count;
  largest_component(deviating, det.mask, det.bbox);
  if (det.bbox.empty()) return std::nullopt;
  return det;
}

CropResult crop(const Image& raw, const Mask& mask, const Bbox& bbox, const CropParams& params) {
  if (bbox.empty() || bbox.x0 < 0 || bbox.y0 < 0 || bbox.x1 > raw.width || bbox.y1 > raw.height)
    throw DataError("crop: bounding box empty or outside the frame");
  if (raw.width < params.crop_width)
    throw ConfigError("crop: frame narrower than the " + std::to_string(params.crop_width) +
                      "-px cuvette window");
  if (mask.width != raw.width || mask.height != raw.height)
    throw DataError("crop: mask dimensions do not match the frame");

  CropGeometry geom;
  geom.raw_width = raw.width;
  geom.raw_height = raw.height;
  geom.specimen_bbox = bbox;

  // Horizontal placement is the fixed cuvette window.
  int left = params.cuvette_left >= 0 ? params.cuvette_left : (raw.width - params.crop_width) / 2;
  if (left + params.crop_width > raw.width)
    throw ConfigError("crop: cuvette window extends past the sensor");
  geom.col0 = left;
  geom.col1 = left + params.crop_width;

  // Mask centroid drives vertical centering.
  double crow = 0.0, ccol = 0.0;
  std::int64_t npix = 0;
  for (int y = bbox.y0; y < bbox.y1; ++y)
    for (int x = bbox.x0; x < bbox.x1; ++x)
      if (mask.at(x, y)) {
        crow += y;
        ccol += x;
        ++npix;
      }
  if (npix == 0) throw DataError("crop: mask empty inside the bounding box");
  crow /= static_cast<double>(npix);
  ccol /= static_cast<double>(npix);
  geom.centroid_row = crow;
  geom.centroid_col = ccol;

  const int bbox_h = bbox.height();
  int row0, row1;
  if (bbox_h > params.min_height) {
    row0 = bbox.y0;
    row1 = bbox.y1;
  } else {
    if (raw.height < params.min_height)
      throw ConfigError("crop: frame shorter than the minimum crop height");
    const int c = static_cast<int>(std::lround(crow));
    row0 = c - params.min_height / 2;
    if (row0 < 0) {
      row0 = 0;
      geom.clamped = true;
    }
    if (row0 + params.min_height > raw.height) {
      row0 = raw.height - params.min_height;
      geom.clamped = true;
    }
    row1 = row0 + params.min_height;
  }
  geom.row0 = row0;
  geom.row1 = row1;

  const int cw = params.crop_width;
  const int ch = row1 - row0;
  auto img = std::make_shared<Image>(cw, ch);
  CropResult res;
  res.cropped_mask = Mask(cw, ch);
  std::int64_t area = 0;
  for (int y = 0; y < ch; ++y)
    for (int x = 0; x < cw; ++x) {
      const int sx = geom.col0 + x;
      const int sy = row0 + y;
      for (int c = 0; c < 3; ++c) img->at(x, y, c) = raw.at(sx, sy, c);
      if (mask.at(sx, sy)) {
        res.cropped_mask.at(x, y) = 1;
        ++area;
      }
    }

  res.frame.width_px = cw;
  res.frame.height_px = ch;
  res.frame.channel_means = img->channel_means();
  res.frame.silhouette_area_px2 = area;
  res.frame.pixels = std::move(img);
  res.geometry = geom;
  return res;
}

FloatImage rescale_for_classifier(const Image& img, int out_size) {
  if (img.empty()) throw DataError("rescale: empty image");
  FloatImage out(out_size, out_size);
  const double sx = static_cast<double>(img.width) / out_size;
  const double sy = static_cast<double>(img.height) / out_size;
  for (int y = 0; y < out_size; ++y) {
    const double fy = (y + 0.5) * sy - 0.5;
    const int y0 = static_cast<int>(std::floor(fy));
    const double wy = fy - y0;
    const int ya = std::clamp(y0, 0, img.height - 1);
    const int yb = std::clamp(y0 + 1, 0, img.height - 1);
    for (int x = 0; x < out_size; ++x) {
      const double fx = (x + 0.5) * sx - 0.5;
      const int x0 = static_cast<int>(std::floor(fx));
      const double wx = fx - x0;
      const int xa = std::clamp(x0, 0, img.width - 1);
      const int xb = std::clamp(x0 + 1, 0, img.width - 1);
      for (int c = 0; c < 3; ++c) {
        const double v00 = img.at(xa, ya, c);
        const double v10 = img.at(xb, ya, c);
        const double v01 = img.at(xa, yb, c);
        const double v11 = img.at(xb, yb, c);
        const double v = (1 - wy) * ((1 - wx) * v00 + wx * v10) +
                         wy * ((1 - wx) * v01 + wx * v11);
        out.at(x, y, c) = static_cast<float>(v / 255.0);
      }
    }
  }
  return out;
}

Mask rescale_mask(const Mask& mask, int out_size) {
  Mask out(out_size, out_size);
  if (mask.empty()) return out;
  const double sx = static_cast<double>(mask.width) / out_size;
  const double sy = static_cast<double>(mask.height) / out_size;
  for (int y = 0; y < out_size; ++y) {
    const int syi = std::clamp(static_cast<int>((y + 0.5) * sy), 0, mask.height - 1);
    for (int x = 0; x < out_size; ++x) {
      const int sxi = std::clamp(static_cast<int>((x + 0.5) * sx), 0, mask.width - 1);
      out.at(x, y) = mask.at(sxi, syi);
    }
  }
  return out;
}

std::int64_t silhouette_area(const Mask& mask) {
  std::int64_t n = 0;
  for (auto b : mask.bits) n += b ? 1 : 0;
  return n;
}

OutlierReport outlier_screen(const Dataset& ds) {
  OutlierReport report;

  std::map<int, std::vector<const SpecimenRecord*>> by_species;
  for (const auto& sp : ds.specimens) by_species[sp.label_id].push_back(&sp);

  for (const auto& [label, specimens] : by_species) {
    if (specimens.size() < 2) {
      report.warnings.push_back("species " + ds.registry.name_of(label) + " skipped: " +
                                std::to_string(specimens.size()) + " specimen(s), need 2");
      continue;
    }

    // Per-specimen statistic: unweighted mean over frames of the frame means.
    const std::size_t n = specimens.size();
    std::vector<std::array<double, 3>> values(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::array<double, 3> acc{0, 0, 0};
      const auto& frames = specimens[i]->frames;
      for (const auto& f : frames)
        for (int c = 0; c < 3; ++c) acc[static_cast<std::size_t>(c)] += f.channel_means[static_cast<std::size_t>(c)];
      for (int c = 0; c < 3; ++c)
        values[i][static_cast<std::size_t>(c)] =
            frames.empty() ? 0.0 : acc[static_cast<std::size_t>(c)] / static_cast<double>(frames.size());
    }

    for (int c = 0; c < 3; ++c) {
      double mean = 0.0;
      for (const auto& v : values) mean += v[static_cast<std::size_t>(c)];
      mean /= static_cast<double>(n);
      double ss = 0.0;
      for (const auto& v : values) {
        const double d = v[static_cast<std::size_t>(c)] - mean;
        ss += d * d;
      }
      const double sd = std::sqrt(ss / static_cast<double>(n - 1));

      for (std::size_t i = 0; i < n; ++i) {
        // Strict inequality: a specimen exactly at 3 sigma stays unflagged.
        if (std::fabs(values[i][static_cast<std::size_t>(c)] - mean) > 3.0 * sd) {
          const auto& id = specimens[i]->specimen_id;
          auto it = std::find_if(report.flagged.begin(), report.flagged.end(),
                                 [&](const OutlierFlag& f) { return f.specimen_id == id; });
          if (it == report.flagged.end()) {
            report.flagged.push_back({id, {c}});
          } else if (std::find(it->channels.begin(), it->channels.end(), c) == it->channels.end()) {
            it->channels.push_back(c);
          }
        }
      }
    }
  }
  return report;
}

}  // namespace biodiscover::imgproc
