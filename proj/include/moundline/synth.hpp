#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "moundline/catalog.hpp"
#include "moundline/error.hpp"
#include "moundline/geo.hpp"
#include "moundline/io/geojson.hpp"
#include "moundline/io/raster_io.hpp"
#include "moundline/rng.hpp"
#include "moundline/tiles.hpp"

namespace moundline::synth {

struct Range {
  double lo = 0;
  double hi = 0;
};

/// A desk-scale floodplain scene: smooth soil background, bright elliptical
/// mounds, dark mound-like pits and straight field edges as distractors.
struct SceneSpec {
  double width_m = 256;
  double height_m = 256;
  double ppm = 1.0;
  Point origin{0, 0};  // world coords of the top-left corner
  int n_mounds = 2;
  Range mound_radius_m{12, 28};
  Range eccentricity{0.0, 0.6};
  /// Mean gray-level lift over the mound ellipse (the crest reaches 1.5x).
  Range mound_contrast{28, 45};
  double background_noise = 6.0;
  int clutter = 2;
  int field_edges = 2;
  std::uint64_t seed = 0;
  std::string id_prefix = "scene";

  void validate() const {
    if (!(ppm > 0)) throw Error(ErrorCode::InvalidArgument, "ppm must be > 0");
    if (!(width_m > 0 && height_m > 0)) throw Error(ErrorCode::InvalidArgument, "extent must be positive");
    if (mound_radius_m.lo > mound_radius_m.hi || eccentricity.lo > eccentricity.hi ||
        mound_contrast.lo > mound_contrast.hi) {
      throw Error(ErrorCode::InvalidArgument, "empty range");
    }
    if (eccentricity.lo < 0 || eccentricity.hi >= 1) throw Error(ErrorCode::InvalidArgument, "eccentricity in [0,1)");
    if (n_mounds < 0 || clutter < 0 || field_edges < 0) throw Error(ErrorCode::InvalidArgument, "negative count");
  }
};

struct Ellipse {
  Point center;
  double a = 0;  // semi-major, meters
  double b = 0;  // semi-minor, meters
  double angle = 0;
  double contrast = 0;

  /// Normalized elliptical radius; < 1 inside.
  double radius_at(double x, double y) const {
    const double dx = x - center.x, dy = y - center.y;
    const double u = (dx * std::cos(angle) + dy * std::sin(angle)) / a;
    const double v = (-dx * std::sin(angle) + dy * std::cos(angle)) / b;
    return std::sqrt(u * u + v * v);
  }

  Polygon polygon(int vertices = 32) const {
    Polygon p;
    for (int i = 0; i < vertices; ++i) {
      const double t = 2.0 * 3.141592653589793 * i / vertices;
      const double u = a * std::cos(t), v = b * std::sin(t);
      p.exterior.push_back(
          {center.x + u * std::cos(angle) - v * std::sin(angle), center.y + u * std::sin(angle) + v * std::cos(angle)});
    }
    p.exterior.push_back(p.exterior.front());
    return p;
  }

  double analytic_area() const { return 3.141592653589793 * a * b; }
};

struct Scene {
  RgbImage image;
  std::vector<catalog::SiteRecord> gt;
  std::vector<Ellipse> mounds;
  std::vector<Ellipse> clutter;
};

namespace detail {

inline Ellipse draw_ellipse(Rng& rng, const SceneSpec& s) {
  Ellipse e;
  e.a = rng.uniform(s.mound_radius_m.lo, s.mound_radius_m.hi);
  const double ecc = rng.uniform(s.eccentricity.lo, s.eccentricity.hi);
  e.b = e.a * std::sqrt(1.0 - ecc * ecc);
  e.angle = rng.uniform(0.0, 3.141592653589793);
  e.contrast = rng.uniform(s.mound_contrast.lo, s.mound_contrast.hi);
  return e;
}

// Rejection sampling inside the extent with a clear margin between objects.
inline void place(Rng& rng, const SceneSpec& s, Ellipse& e, const std::vector<Ellipse>& taken) {
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const double margin = e.a + 2.0;
    if (s.width_m <= 2 * margin || s.height_m <= 2 * margin) break;
    e.center = {s.origin.x + rng.uniform(margin, s.width_m - margin), s.origin.y - rng.uniform(margin, s.height_m - margin)};
    bool clear = true;
    for (const auto& o : taken) {
      if (std::hypot(o.center.x - e.center.x, o.center.y - e.center.y) < o.a + e.a + 4.0) {
        clear = false;
        break;
      }
    }
    if (clear) return;
  }
  throw Error(ErrorCode::PlacementFailed, "could not place object after 1000 attempts");
}

}  // namespace detail

inline Scene generate_scene(const SceneSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const int w = static_cast<int>(std::lround(spec.width_m * spec.ppm));
  const int h = static_cast<int>(std::lround(spec.height_m * spec.ppm));
  const GeoTransform t{spec.origin.x, spec.origin.y, 1.0 / spec.ppm, 1.0 / spec.ppm};

  Scene scene;
  std::vector<Ellipse> taken;
  for (int i = 0; i < spec.n_mounds; ++i) {
    Ellipse e = detail::draw_ellipse(rng, spec);
    detail::place(rng, spec, e, taken);
    taken.push_back(e);
    scene.mounds.push_back(e);
  }
  for (int i = 0; i < spec.clutter; ++i) {
    Ellipse e = detail::draw_ellipse(rng, spec);
    e.contrast = -e.contrast;
    detail::place(rng, spec, e, taken);
    taken.push_back(e);
    scene.clutter.push_back(e);
  }

  // low-frequency background: a few random plane waves
  struct Wave {
    double kx, ky, phase, amp;
  };
  std::vector<Wave> waves;
  for (int i = 0; i < 4; ++i) {
    const double wavelength = rng.uniform(150.0, 600.0);
    const double dir = rng.uniform(0.0, 2 * 3.141592653589793);
    waves.push_back({2 * 3.141592653589793 / wavelength * std::cos(dir), 2 * 3.141592653589793 / wavelength * std::sin(dir),
                     rng.uniform(0.0, 2 * 3.141592653589793), rng.uniform(2.0, 5.0)});
  }
  struct Edge {
    double nx, ny, offset, amp, softness;
  };
  std::vector<Edge> edges;
  for (int i = 0; i < spec.field_edges; ++i) {
    const double dir = rng.uniform(0.0, 2 * 3.141592653589793);
    const Point through{spec.origin.x + rng.uniform(0.0, spec.width_m), spec.origin.y - rng.uniform(0.0, spec.height_m)};
    const double nx = std::cos(dir), ny = std::sin(dir);
    edges.push_back({nx, ny, nx * through.x + ny * through.y, rng.uniform(-18.0, 18.0), rng.uniform(3.0, 12.0)});
  }
  const double base = rng.uniform(105.0, 135.0);
  const double tint_r = rng.uniform(8.0, 16.0), tint_b = -rng.uniform(8.0, 16.0);

  scene.image = RgbImage(w, h, t);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const Point p = pixel_to_world(t, c + 0.5, r + 0.5);
      const double lx = p.x - spec.origin.x, ly = spec.origin.y - p.y;
      double v = base;
      for (const auto& wv : waves) v += wv.amp * std::sin(wv.kx * lx + wv.ky * ly + wv.phase);
      for (const auto& e : edges) v += e.amp * std::tanh((e.nx * p.x + e.ny * p.y - e.offset) / e.softness);
      for (const auto& e : taken) {
        const double d = e.radius_at(p.x, p.y);
        if (d < 1.0) v += 1.5 * e.contrast * (1.0 - d * d * d * d);
      }
      const double noise = spec.background_noise * rng.normal();
      auto chan = [&](double tint) {
        return static_cast<std::uint8_t>(std::clamp(std::lround(v + tint + noise), 0L, 255L));
      };
      scene.image.at(c, r) = {chan(tint_r), chan(0.0), chan(tint_b)};
    }
  }

  for (std::size_t i = 0; i < scene.mounds.size(); ++i) {
    scene.gt.push_back(
        catalog::make_site(spec.id_prefix + "_m" + std::to_string(i), scene.mounds[i].polygon(), false,
                           catalog::Visibility::visible));
  }
  return scene;
}

// ---------------------------------------------------------------------------
// Datasets in the tile/catalog ingestion formats

struct DatasetSpec {
  int scenes = 10;
  int test = 2;
  int val = 0;
  std::uint64_t seed = 0;
  SceneSpec scene;  // per-scene seed, origin, mound count and id are overridden
  /// Scene k receives k % (max_mounds + 1) mounds, so some scenes are empty.
  int max_mounds = 3;
  double spacing_m = 1000.0;
};

struct DatasetEntry {
  std::string id;
  Scene scene;
  catalog::Split split = catalog::Split::train;
};

inline std::vector<DatasetEntry> generate_dataset(const DatasetSpec& ds) {
  if (ds.scenes < 0 || ds.test < 0 || ds.val < 0 || ds.test + ds.val > ds.scenes) {
    throw Error(ErrorCode::InvalidArgument, "test + val must not exceed scenes");
  }
  std::vector<std::size_t> order(static_cast<std::size_t>(ds.scenes));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(mix_seed(ds.seed, 101));
  rng.shuffle(order.begin(), order.end());
  std::vector<catalog::Split> split(order.size(), catalog::Split::train);
  for (int i = 0; i < ds.test; ++i) split[order[static_cast<std::size_t>(i)]] = catalog::Split::test;
  for (int i = ds.test; i < ds.test + ds.val; ++i) split[order[static_cast<std::size_t>(i)]] = catalog::Split::val;

  std::vector<DatasetEntry> out;
  for (int k = 0; k < ds.scenes; ++k) {
    SceneSpec s = ds.scene;
    s.seed = mix_seed(ds.seed, static_cast<std::uint64_t>(k));
    s.origin = {ds.scene.origin.x + k * ds.spacing_m, ds.scene.origin.y};
    s.n_mounds = k % (ds.max_mounds + 1);
    char buf[32];
    std::snprintf(buf, sizeof buf, "scene%04d", k);
    s.id_prefix = buf;
    out.push_back({buf, generate_scene(s), split[static_cast<std::size_t>(k)]});
  }
  return out;
}

inline tiles::Tile scene_tile(const DatasetEntry& e) {
  tiles::Tile t;
  t.image = e.scene.image;
  std::vector<Polygon> shapes;
  for (const auto& s : e.scene.gt) shapes.push_back(s.shape);
  t.mask = tiles::rasterize_mask(shapes, t.image.transform, t.image.width, t.image.height);
  t.source_id = e.id;
  return t;
}

/// Writes tiles/ (PNG + world file + mask + sidecar), catalog.geojson with
/// every gt site, and an imagery manifest listing file -> extent.
inline void write_dataset(const std::filesystem::path& dir, const std::vector<DatasetEntry>& entries,
                          std::optional<int> crs_epsg = std::nullopt) {
  io::FeatureCollection catalog_fc;
  catalog_fc.crs_epsg = crs_epsg;
  io::json manifest = {{"v", 1}, {"images", io::json::array()}};
  for (const auto& e : entries) {
    tiles::write_tile(dir / "tiles", e.id, scene_tile(e), e.split);
    for (const auto& s : e.scene.gt) {
      io::Feature f = catalog::site_to_feature(s);
      f.properties["image_id"] = e.id;
      catalog_fc.features.push_back(std::move(f));
    }
    const BBox b = e.scene.image.extent();
    manifest["images"].push_back({{"file", "tiles/" + e.id + ".png"},
                                  {"id", e.id},
                                  {"split", catalog::to_string(e.split)},
                                  {"extent", {b.min_x, b.min_y, b.max_x, b.max_y}}});
  }
  io::write_geojson(dir / "catalog.geojson", catalog_fc);
  io::write_json(dir / "manifest.json", manifest);
}

}  // namespace moundline::synth
