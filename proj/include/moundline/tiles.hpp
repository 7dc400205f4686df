#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "moundline/catalog.hpp"
#include "moundline/error.hpp"
#include "moundline/geo.hpp"
#include "moundline/io/geojson.hpp"
#include "moundline/io/raster_io.hpp"
#include "moundline/rng.hpp"

namespace moundline::tiles {

/// Quarter-turn rotation (clockwise), then optional horizontal mirror, then
/// contrast about 127.5 and brightness shift on the image only.
struct AugSpec {
  int rot_quarter = 0;
  bool mirror = false;
  double brightness_shift = 0.0;
  double contrast_scale = 1.0;
  std::uint64_t seed = 0;
  /// Extension: extra arbitrary rotation in degrees (bilinear image, nearest
  /// mask). Zero keeps augmentation resampling-free.
  double angle_deg = 0.0;

  bool is_identity() const {
    return rot_quarter % 4 == 0 && !mirror && brightness_shift == 0.0 && contrast_scale == 1.0 && angle_deg == 0.0;
  }
};

struct AugBounds {
  double brightness = 16.0;
  double contrast = 0.1;
  bool arbitrary_angle = false;
};

inline AugSpec random_aug_spec(std::uint64_t seed, const AugBounds& bounds = {}) {
  Rng rng(seed);
  AugSpec s;
  s.seed = seed;
  s.rot_quarter = static_cast<int>(rng.below(4));
  s.mirror = rng.coin();
  s.brightness_shift = rng.uniform(-bounds.brightness, bounds.brightness);
  s.contrast_scale = rng.uniform(1.0 - bounds.contrast, 1.0 + bounds.contrast);
  if (bounds.arbitrary_angle) s.angle_deg = rng.uniform(-45.0, 45.0);
  return s;
}

/// Geometric part of `first` followed by `second`, as a single spec.
inline AugSpec compose_geometry(const AugSpec& first, const AugSpec& second) {
  AugSpec c;
  const int r1 = ((first.rot_quarter % 4) + 4) % 4;
  const int r2 = ((second.rot_quarter % 4) + 4) % 4;
  // mirror * rot(r) == rot(-r) * mirror
  c.rot_quarter = first.mirror ? ((r1 - r2) % 4 + 4) % 4 : (r1 + r2) % 4;
  c.mirror = first.mirror != second.mirror;
  return c;
}

struct Tile {
  RgbImage image;
  Mask mask;
  std::string source_id;
  int crop_col = 0;
  int crop_row = 0;
  AugSpec aug;
};

enum class BoundsPolicy { strict, zero_pad };

/// Square window of round(side_m * ppm) pixels centered on `center`.
/// Nearest-neighbour sampling; a copy when source pixel size is 1/ppm.
inline RgbImage extract_window(const RgbImage& source, Point center, double side_m, double ppm,
                               BoundsPolicy policy = BoundsPolicy::strict) {
  if (!(side_m > 0) || !(ppm > 0)) throw Error(ErrorCode::InvalidArgument, "window side and ppm must be > 0");
  const int side = static_cast<int>(std::lround(side_m * ppm));
  if (side < 1) throw Error(ErrorCode::InvalidArgument, "window smaller than one pixel");
  const double px = 1.0 / ppm;
  const double half = side * px / 2.0;
  const GeoTransform t{center.x - half, center.y + half, px, px};

  if (policy == BoundsPolicy::strict) {
    const BBox src = source.extent();
    const double tol = 1e-6 * std::max(source.transform.pixel_w, px);
    if (t.origin_x < src.min_x - tol || t.origin_x + side * px > src.max_x + tol || t.origin_y > src.max_y + tol ||
        t.origin_y - side * px < src.min_y - tol) {
      throw Error(ErrorCode::OutOfBounds, "window leaves the source raster");
    }
  }

  RgbImage out(side, side, t);
  for (int r = 0; r < side; ++r) {
    for (int c = 0; c < side; ++c) {
      const Point w = pixel_to_world(t, c + 0.5, r + 0.5);
      const PixelCoord p = world_to_pixel(source.transform, w.x, w.y);
      const int sc = static_cast<int>(std::floor(p.col));
      const int sr = static_cast<int>(std::floor(p.row));
      if (source.contains(sc, sr)) {
        out.at(c, r) = source.at(sc, sr);
      } else if (policy == BoundsPolicy::strict) {
        // only reachable through rounding at the very edge
        out.at(c, r) = source.at(std::clamp(sc, 0, source.width - 1), std::clamp(sr, 0, source.height - 1));
      }
    }
  }
  return out;
}

/// 1 where the pixel center lies inside any polygon.
inline Mask rasterize_mask(const std::vector<Polygon>& shapes, const GeoTransform& transform, int w, int h) {
  Mask m(w, h, transform, 0);
  for (const auto& poly : shapes) {
    const BBox b = bbox(poly);
    const PixelCoord tl = world_to_pixel(transform, b.min_x, b.max_y);
    const PixelCoord br = world_to_pixel(transform, b.max_x, b.min_y);
    const int c0 = std::max(0, static_cast<int>(std::floor(tl.col)) - 1);
    const int r0 = std::max(0, static_cast<int>(std::floor(tl.row)) - 1);
    const int c1 = std::min(w - 1, static_cast<int>(std::ceil(br.col)) + 1);
    const int r1 = std::min(h - 1, static_cast<int>(std::ceil(br.row)) + 1);
    for (int r = r0; r <= r1; ++r) {
      for (int c = c0; c <= c1; ++c) {
        if (m.at(c, r)) continue;
        const Point p = pixel_to_world(transform, c + 0.5, r + 0.5);
        if (point_in_polygon(poly, p.x, p.y)) m.at(c, r) = 1;
      }
    }
  }
  return m;
}

template <class V>
Raster<V> crop_raster(const Raster<V>& src, int col, int row, int w, int h) {
  Raster<V> out(w, h, src.transform.shifted(col, row));
  out.nodata = src.nodata;
  for (int r = 0; r < h; ++r) {
    std::copy_n(src.values.begin() + static_cast<std::ptrdiff_t>(src.index(col, row + r)), w,
                out.values.begin() + static_cast<std::ptrdiff_t>(out.index(0, r)));
  }
  return out;
}

inline Tile crop_tile(const Tile& t, int col, int row, int out_side) {
  Tile out = t;
  out.image = crop_raster(t.image, col, row, out_side, out_side);
  out.mask = crop_raster(t.mask, col, row, out_side, out_side);
  out.crop_col = t.crop_col + col;
  out.crop_row = t.crop_row + row;
  return out;
}

inline Tile random_crop(const Tile& t, int out_side, std::uint64_t seed) {
  if (out_side < 1 || out_side > std::min(t.image.width, t.image.height)) {
    throw Error(ErrorCode::CropTooLarge, "crop side exceeds tile");
  }
  Rng rng(seed);
  const int col = static_cast<int>(rng.range(0, t.image.width - out_side));
  const int row = static_cast<int>(rng.range(0, t.image.height - out_side));
  return crop_tile(t, col, row, out_side);
}

template <class V>
Raster<V> rotate_quarter_cw(const Raster<V>& in) {
  Raster<V> out(in.height, in.width, in.transform);
  out.nodata = in.nodata;
  for (int r = 0; r < out.height; ++r) {
    for (int c = 0; c < out.width; ++c) out.at(c, r) = in.at(r, in.height - 1 - c);
  }
  return out;
}

template <class V>
Raster<V> mirror_horizontal(const Raster<V>& in) {
  Raster<V> out = in;
  for (int r = 0; r < in.height; ++r) {
    for (int c = 0; c < in.width; ++c) out.at(c, r) = in.at(in.width - 1 - c, r);
  }
  return out;
}

template <class V>
Raster<V> apply_geometry(Raster<V> r, int rot_quarter, bool mirror) {
  const int q = ((rot_quarter % 4) + 4) % 4;
  for (int i = 0; i < q; ++i) r = rotate_quarter_cw(r);
  if (mirror) r = mirror_horizontal(r);
  return r;
}

namespace detail {

inline std::uint8_t photometric(std::uint8_t v, double shift, double scale) {
  const double out = (v - 127.5) * scale + 127.5 + shift;
  return static_cast<std::uint8_t>(std::clamp(std::lround(out), 0L, 255L));
}

// Rotation about the raster center; image bilinear, mask nearest.
inline void rotate_arbitrary(Tile& t, double angle_deg) {
  const double a = angle_deg * 3.141592653589793 / 180.0;
  const double ca = std::cos(a), sa = std::sin(a);
  const double cx = t.image.width / 2.0, cy = t.image.height / 2.0;
  RgbImage img(t.image.width, t.image.height, t.image.transform);
  Mask mask(t.mask.width, t.mask.height, t.mask.transform, 0);
  for (int r = 0; r < img.height; ++r) {
    for (int c = 0; c < img.width; ++c) {
      const double dx = c + 0.5 - cx, dy = r + 0.5 - cy;
      const double sx = ca * dx + sa * dy + cx - 0.5;
      const double sy = -sa * dx + ca * dy + cy - 0.5;
      const int mc = static_cast<int>(std::lround(sx)), mr = static_cast<int>(std::lround(sy));
      if (t.mask.contains(mc, mr)) mask.at(c, r) = t.mask.at(mc, mr);
      const int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
      const double fx = sx - x0, fy = sy - y0;
      double acc[3] = {0, 0, 0};
      for (int k = 0; k < 4; ++k) {
        const int xx = x0 + (k & 1), yy = y0 + (k >> 1);
        const double wgt = ((k & 1) ? fx : 1 - fx) * ((k >> 1) ? fy : 1 - fy);
        if (!t.image.contains(xx, yy)) continue;
        const Rgb& p = t.image.at(xx, yy);
        acc[0] += wgt * p.r;
        acc[1] += wgt * p.g;
        acc[2] += wgt * p.b;
      }
      img.at(c, r) = {static_cast<std::uint8_t>(std::lround(acc[0])), static_cast<std::uint8_t>(std::lround(acc[1])),
                      static_cast<std::uint8_t>(std::lround(acc[2]))};
    }
  }
  t.image = std::move(img);
  t.mask = std::move(mask);
}

}  // namespace detail

inline Tile augment(const Tile& t, const AugSpec& spec) {
  Tile out = t;
  out.image = apply_geometry(t.image, spec.rot_quarter, spec.mirror);
  out.mask = apply_geometry(t.mask, spec.rot_quarter, spec.mirror);
  if (spec.angle_deg != 0.0) detail::rotate_arbitrary(out, spec.angle_deg);
  if (spec.brightness_shift != 0.0 || spec.contrast_scale != 1.0) {
    for (auto& p : out.image.values) {
      p.r = detail::photometric(p.r, spec.brightness_shift, spec.contrast_scale);
      p.g = detail::photometric(p.g, spec.brightness_shift, spec.contrast_scale);
      p.b = detail::photometric(p.b, spec.brightness_shift, spec.contrast_scale);
    }
  }
  out.aug = spec;
  return out;
}

inline Tile downscale_half(const Tile& t) {
  if (t.image.width % 2 || t.image.height % 2) throw Error(ErrorCode::OddDimensions, "tile sides must be even");
  const int w = t.image.width / 2, h = t.image.height / 2;
  Tile out = t;
  out.image = RgbImage(w, h, t.image.transform.scaled(2));
  out.mask = Mask(w, h, t.mask.transform.scaled(2));
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const Rgb& a = t.image.at(2 * c, 2 * r);
      const Rgb& b = t.image.at(2 * c + 1, 2 * r);
      const Rgb& d = t.image.at(2 * c, 2 * r + 1);
      const Rgb& e = t.image.at(2 * c + 1, 2 * r + 1);
      // +2 rounds half up
      out.image.at(c, r) = {static_cast<std::uint8_t>((a.r + b.r + d.r + e.r + 2) / 4),
                            static_cast<std::uint8_t>((a.g + b.g + d.g + e.g + 2) / 4),
                            static_cast<std::uint8_t>((a.b + b.b + d.b + e.b + 2) / 4)};
      const int votes = t.mask.at(2 * c, 2 * r) + t.mask.at(2 * c + 1, 2 * r) + t.mask.at(2 * c, 2 * r + 1) +
                        t.mask.at(2 * c + 1, 2 * r + 1);
      out.mask.at(c, r) = votes >= 2 ? 1 : 0;
    }
  }
  return out;
}

/// Window around a site's centroid with every catalogued shape burned into
/// the mask.
inline Tile site_tile(const RgbImage& source, const catalog::SiteRecord& site,
                      const std::vector<catalog::SiteRecord>& all_sites, double side_m, double ppm,
                      BoundsPolicy policy = BoundsPolicy::strict) {
  Tile t;
  t.image = extract_window(source, centroid(site.shape), side_m, ppm, policy);
  const BBox win = t.image.extent();
  std::vector<Polygon> shapes;
  for (const auto& s : all_sites) {
    if (bbox(s.shape).overlaps(win)) shapes.push_back(s.shape);
  }
  t.mask = rasterize_mask(shapes, t.image.transform, t.image.width, t.image.height);
  t.source_id = site.id;
  return t;
}

// ---------------------------------------------------------------------------
// On-disk tiles: <name>.png, <name>.mask.png, world files, <name>.json sidecar.

inline io::json aug_to_json(const AugSpec& a) {
  return {{"rot_quarter", a.rot_quarter},       {"mirror", a.mirror}, {"brightness_shift", a.brightness_shift},
          {"contrast_scale", a.contrast_scale}, {"seed", a.seed},     {"angle_deg", a.angle_deg}};
}

inline AugSpec aug_from_json(const io::json& j) {
  AugSpec a;
  a.rot_quarter = j.value("rot_quarter", 0);
  a.mirror = j.value("mirror", false);
  a.brightness_shift = j.value("brightness_shift", 0.0);
  a.contrast_scale = j.value("contrast_scale", 1.0);
  a.seed = j.value("seed", std::uint64_t{0});
  a.angle_deg = j.value("angle_deg", 0.0);
  return a;
}

struct StoredTile {
  Tile tile;
  catalog::Split split = catalog::Split::train;
  std::string name;
};

inline void write_tile(const std::filesystem::path& dir, const std::string& name, const Tile& t,
                       catalog::Split split) {
  io::write_rgb_png(dir / (name + ".png"), t.image);
  io::write_world_file(dir / (name + ".png"), t.image.transform);
  io::write_mask_png(dir / (name + ".mask.png"), t.mask);
  io::write_json(dir / (name + ".json"), {{"source_id", t.source_id},
                                           {"crop_offset", {t.crop_col, t.crop_row}},
                                           {"aug", aug_to_json(t.aug)},
                                           {"split", catalog::to_string(split)}});
}

inline StoredTile read_tile(const std::filesystem::path& dir, const std::string& name) {
  StoredTile s;
  s.name = name;
  const io::json meta = io::read_json(dir / (name + ".json"));
  s.tile.image = io::read_rgb_png(dir / (name + ".png"));
  s.tile.mask = io::read_mask_png(dir / (name + ".mask.png"));
  if (!same_shape(s.tile.image, s.tile.mask)) throw Error(ErrorCode::DimensionMismatch, name + ": image/mask size");
  s.tile.source_id = meta.value("source_id", name);
  if (meta.contains("crop_offset")) {
    s.tile.crop_col = meta["crop_offset"][0].get<int>();
    s.tile.crop_row = meta["crop_offset"][1].get<int>();
  }
  if (meta.contains("aug")) s.tile.aug = aug_from_json(meta["aug"]);
  s.split = catalog::split_from_string(meta.value("split", std::string{"train"}));
  return s;
}

/// Every tile in a directory, sorted by name.
inline std::vector<StoredTile> read_tile_dir(const std::filesystem::path& dir) {
  std::vector<std::string> names;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    const auto fn = e.path().filename().string();
    if (fn.size() > 4 && fn.ends_with(".png") && !fn.ends_with(".mask.png")) {
      names.push_back(fn.substr(0, fn.size() - 4));
    }
  }
  std::sort(names.begin(), names.end());
  std::vector<StoredTile> out;
  for (const auto& n : names) {
    if (std::filesystem::exists(dir / (n + ".json"))) out.push_back(read_tile(dir, n));
  }
  return out;
}

}  // namespace moundline::tiles
