#pragma once

#include <cmath>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "moundline/error.hpp"
#include "moundline/geo.hpp"
#include "moundline/io/geojson.hpp"
#include "moundline/io/raster_io.hpp"

namespace moundline::io {

struct ImageryEntry {
  std::filesystem::path file;
  std::string id;
  BBox extent;
};

/// Ingestion manifest: {"images": [{"file", "id", "extent": [minx,miny,maxx,maxy]}]}.
/// Relative paths resolve against the manifest's directory.
inline std::vector<ImageryEntry> read_manifest(const std::filesystem::path& path) {
  const json j = read_json(path);
  std::vector<ImageryEntry> out;
  for (const auto& e : j.at("images")) {
    ImageryEntry ie;
    ie.file = e.at("file").get<std::string>();
    if (ie.file.is_relative()) ie.file = path.parent_path() / ie.file;
    ie.id = e.value("id", ie.file.stem().string());
    const auto& x = e.at("extent");
    ie.extent = {x.at(0).get<double>(), x.at(1).get<double>(), x.at(2).get<double>(), x.at(3).get<double>()};
    out.push_back(std::move(ie));
  }
  return out;
}

/// Georeferenced imagery spread over many files, sampled on demand.
class ImageryStore {
 public:
  explicit ImageryStore(std::vector<ImageryEntry> entries) : entries_(std::move(entries)) {}

  /// A single image with its world file acts as a one-entry manifest.
  static ImageryStore open(const std::filesystem::path& path) {
    if (path.extension() == ".json") return ImageryStore(read_manifest(path));
    RgbImage img = read_rgb_png(path);
    ImageryStore s({{path, path.stem().string(), img.extent()}});
    s.cache_.emplace(0, std::move(img));
    return s;
  }

  const std::vector<ImageryEntry>& entries() const { return entries_; }

  /// Nearest-neighbour rendering of the grid (t, w, h). Pixels no image covers
  /// are 0, or raise OutOfBounds when `strict`.
  RgbImage render(const GeoTransform& t, int w, int h, bool strict) {
    RgbImage out(w, h, t);
    const BBox want = out.extent();
    std::vector<std::size_t> hits;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (entries_[i].extent.overlaps(want)) hits.push_back(i);
    }
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        const Point p = pixel_to_world(t, c + 0.5, r + 0.5);
        bool found = false;
        for (std::size_t i : hits) {
          const RgbImage& img = load(i);
          const PixelCoord q = world_to_pixel(img.transform, p.x, p.y);
          const int sc = static_cast<int>(std::floor(q.col)), sr = static_cast<int>(std::floor(q.row));
          if (img.contains(sc, sr)) {
            out.at(c, r) = img.at(sc, sr);
            found = true;
            break;
          }
        }
        if (!found && strict) throw Error(ErrorCode::OutOfBounds, "window leaves the available imagery");
      }
    }
    return out;
  }

  /// Same geometry as tiles::extract_window.
  RgbImage window(Point center, double side_m, double ppm, bool strict) {
    if (!(side_m > 0) || !(ppm > 0)) throw Error(ErrorCode::InvalidArgument, "window side and ppm must be > 0");
    const int side = static_cast<int>(std::lround(side_m * ppm));
    const double px = 1.0 / ppm;
    const double half = side * px / 2.0;
    return render({center.x - half, center.y + half, px, px}, side, side, strict);
  }

 private:
  const RgbImage& load(std::size_t i) {
    auto it = cache_.find(i);
    if (it == cache_.end()) it = cache_.emplace(i, read_rgb_png(entries_[i].file)).first;
    return it->second;
  }

  std::vector<ImageryEntry> entries_;
  std::map<std::size_t, RgbImage> cache_;
};

}  // namespace moundline::io
