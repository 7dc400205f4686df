#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "moundline/catalog.hpp"
#include "moundline/geo.hpp"
#include "moundline/io/geojson.hpp"
#include "moundline/io/imagery.hpp"
#include "moundline/io/raster_io.hpp"
#include "moundline/rng.hpp"
#include "moundline/tiles.hpp"

namespace fs = std::filesystem;
using namespace moundline;

namespace {

Polygon square(double x0, double y0, double side) { return rectangle(x0, y0, x0 + side, y0 + side); }

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("moundline_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Convex polygon clipped against an axis-aligned box, one half-plane at a time.
std::vector<Point> clip_convex(std::vector<Point> pts, double x0, double y0, double x1, double y1) {
  auto clip = [&](auto inside, auto cross) {
    std::vector<Point> out;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const Point a = pts[i], b = pts[(i + 1) % pts.size()];
      if (inside(a)) out.push_back(a);
      if (inside(a) != inside(b)) out.push_back(cross(a, b));
    }
    pts = out;
  };
  auto xcut = [](double x) {
    return [x](Point a, Point b) { return Point{x, a.y + (b.y - a.y) * (x - a.x) / (b.x - a.x)}; };
  };
  auto ycut = [](double y) {
    return [y](Point a, Point b) { return Point{a.x + (b.x - a.x) * (y - a.y) / (b.y - a.y), y}; };
  };
  clip([&](Point p) { return p.x >= x0; }, xcut(x0));
  clip([&](Point p) { return p.x <= x1; }, xcut(x1));
  clip([&](Point p) { return p.y >= y0; }, ycut(y0));
  clip([&](Point p) { return p.y <= y1; }, ycut(y1));
  return pts;
}

double fan_area(const std::vector<Point>& pts) {
  double a = 0;
  for (std::size_t i = 1; i + 1 < pts.size(); ++i) {
    const Point &p = pts[0], &q = pts[i], &r = pts[i + 1];
    a += 0.5 * std::abs((q.x - p.x) * (r.y - p.y) - (r.x - p.x) * (q.y - p.y));
  }
  return a;
}

std::vector<Point> random_convex(Rng& rng, int n, double cx, double cy, double radius) {
  std::vector<double> ang;
  for (int i = 0; i < n; ++i) ang.push_back(rng.uniform(0.0, 2 * M_PI));
  std::sort(ang.begin(), ang.end());
  std::vector<Point> pts;
  for (double a : ang) pts.push_back({cx + radius * std::cos(a), cy + radius * std::sin(a)});
  return pts;
}

Polygon closed(std::vector<Point> pts) {
  Polygon p;
  p.exterior = pts;
  p.exterior.push_back(pts.front());
  return p;
}

}  // namespace

// ---------------------------------------------------------------------------
// geo

TEST(Geo, UnitSquareArea) { EXPECT_DOUBLE_EQ(polygon_area(square(0, 0, 1)), 1.0); }

TEST(Geo, SquareWithHoleArea) {
  Polygon p = square(0, 0, 1);
  p.holes.push_back(square(0.25, 0.25, 0.5).exterior);
  EXPECT_DOUBLE_EQ(polygon_area(p), 0.75);
}

TEST(Geo, AreaRejectsOpenOrShortRings) {
  Polygon open;
  open.exterior = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  EXPECT_THROW(polygon_area(open), Error);
  Polygon tiny;
  tiny.exterior = {{0, 0}, {1, 0}, {0, 0}};
  try {
    polygon_area(tiny);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidRing);
  }
}

TEST(Geo, ConvexAreaMatchesFanTriangulation) {
  Rng rng(11);
  for (int k = 0; k < 50; ++k) {
    const auto pts = random_convex(rng, 8, rng.uniform(-1e5, 1e5), rng.uniform(3e6, 4e6), rng.uniform(1, 500));
    const double fan = fan_area(pts);
    EXPECT_NEAR(polygon_area(closed(pts)), fan, 1e-9 * fan);
    EXPECT_NEAR(polygon_area(closed({pts.rbegin(), pts.rend()})), fan, 1e-9 * fan);
  }
}

TEST(Geo, AreaInvariantUnderRigidMotion) {
  Rng rng(5);
  for (int k = 0; k < 20; ++k) {
    const auto pts = random_convex(rng, 7, 0, 0, 30);
    const double a0 = polygon_area(closed(pts));
    const double th = rng.uniform(0, 2 * M_PI), dx = rng.uniform(-1e6, 1e6), dy = rng.uniform(-1e6, 1e6);
    std::vector<Point> moved;
    for (auto p : pts) moved.push_back({p.x * std::cos(th) - p.y * std::sin(th) + dx, p.x * std::sin(th) + p.y * std::cos(th) + dy});
    EXPECT_NEAR(polygon_area(closed(moved)), a0, 1e-9 * a0);
  }
}

TEST(Geo, IntersectsDisjointIdenticalAndThreshold) {
  EXPECT_FALSE(polygon_intersects(square(0, 0, 1), square(3, 3, 1)));
  EXPECT_TRUE(polygon_intersects(square(0, 0, 1), square(0, 0, 1)));
  const Polygon a = square(0, 0, 1), b = square(0.5, 0.5, 1);
  EXPECT_NEAR(intersection_area(a, b), 0.25, 1e-12);
  EXPECT_FALSE(polygon_intersects(a, b, 0.3));
  EXPECT_TRUE(polygon_intersects(a, b, 0.2));
}

TEST(Geo, BoundaryTouchIsNotIntersection) {
  EXPECT_FALSE(polygon_intersects(square(0, 0, 1), square(1, 0, 1)));
  EXPECT_FALSE(polygon_intersects(square(0, 0, 1), square(1, 1, 1)));
}

TEST(Geo, ClippingMatchesSutherlandHodgmanOracle) {
  Rng rng(3);
  for (int k = 0; k < 100; ++k) {
    const auto pts = random_convex(rng, 3 + static_cast<int>(rng.below(8)), rng.uniform(-2, 2), rng.uniform(-2, 2),
                                   rng.uniform(0.5, 3));
    const double x0 = rng.uniform(-2, 0), y0 = rng.uniform(-2, 0);
    const double x1 = x0 + rng.uniform(0.5, 3), y1 = y0 + rng.uniform(0.5, 3);
    const auto clipped = clip_convex(pts, x0, y0, x1, y1);
    const double oracle = clipped.size() >= 3 ? fan_area(clipped) : 0.0;
    const Polygon p = closed(pts), box = rectangle(x0, y0, x1, y1);
    EXPECT_NEAR(intersection_area(p, box), oracle, 1e-7);
    EXPECT_NEAR(intersection_area(box, p), oracle, 1e-7);
  }
}

TEST(Geo, RectilinearClippingMatchesPixelCount) {
  // Unions of unit cells: intersection area = count of shared cells.
  Rng rng(17);
  for (int k = 0; k < 30; ++k) {
    const int ax = static_cast<int>(rng.below(10)), ay = static_cast<int>(rng.below(10));
    const int aw = 1 + static_cast<int>(rng.below(8)), ah = 1 + static_cast<int>(rng.below(8));
    const int bx = static_cast<int>(rng.below(10)), by = static_cast<int>(rng.below(10));
    const int bw = 1 + static_cast<int>(rng.below(8)), bh = 1 + static_cast<int>(rng.below(8));
    int shared = 0;
    for (int y = 0; y < 20; ++y) {
      for (int x = 0; x < 20; ++x) {
        const bool in_a = x >= ax && x < ax + aw && y >= ay && y < ay + ah;
        const bool in_b = x >= bx && x < bx + bw && y >= by && y < by + bh;
        shared += in_a && in_b;
      }
    }
    EXPECT_DOUBLE_EQ(intersection_area(rectangle(ax, ay, ax + aw, ay + ah), rectangle(bx, by, bx + bw, by + bh)), shared);
  }
}

TEST(Geo, IntersectsIsSymmetric) {
  Rng rng(23);
  for (int k = 0; k < 40; ++k) {
    const Polygon a = closed(random_convex(rng, 6, rng.uniform(0, 4), rng.uniform(0, 4), 1.5));
    const Polygon b = closed(random_convex(rng, 5, rng.uniform(0, 4), rng.uniform(0, 4), 1.5));
    EXPECT_EQ(polygon_intersects(a, b), polygon_intersects(b, a));
  }
}

TEST(Geo, WorldToPixelExamples) {
  const GeoTransform t{0, 100, 1, 1};
  auto p = world_to_pixel(t, 0, 100);
  EXPECT_EQ(p.col, 0);
  EXPECT_EQ(p.row, 0);
  p = world_to_pixel(t, 10, 90);
  EXPECT_EQ(p.col, 10);
  EXPECT_EQ(p.row, 10);
  p = world_to_pixel({500000, 3500000, 2, 2}, 500100, 3499900);
  EXPECT_EQ(p.col, 50);
  EXPECT_EQ(p.row, 50);
}

TEST(Geo, PixelWorldRoundTrip) {
  const GeoTransform t{500000, 3500000, 0.9765625, 0.9765625};
  for (int c = 0; c < 1024; c += 37) {
    for (int r = 0; r < 1024; r += 41) {
      const Point w = pixel_to_world(t, c, r);
      const PixelCoord p = world_to_pixel(t, w.x, w.y);
      EXPECT_EQ(p.col, c);
      EXPECT_EQ(p.row, r);
    }
  }
  Rng rng(1);
  const GeoTransform u{123.5, -77.25, 0.3, 0.7};
  for (int k = 0; k < 100; ++k) {
    const double c = rng.uniform(-50, 50), r = rng.uniform(-50, 50);
    const Point w = pixel_to_world(u, c, r);
    const PixelCoord p = world_to_pixel(u, w.x, w.y);
    EXPECT_NEAR(p.col, c, 1e-9);
    EXPECT_NEAR(p.row, r, 1e-9);
  }
}

TEST(Geo, TransformValidation) {
  EXPECT_THROW((GeoTransform{0, 0, 0, 1}.validate()), Error);
  EXPECT_THROW((GeoTransform{0, 0, 1, -1}.validate()), Error);
  EXPECT_NO_THROW((GeoTransform{0, 0, 1, 1}.validate()));
}

// ---------------------------------------------------------------------------
// io

TEST(Io, GeoJsonRoundTripKeepsHolesAndOrientation) {
  Polygon p = square(0, 0, 10);
  p.holes.push_back(reversed(square(2, 2, 3).exterior));
  io::FeatureCollection fc;
  fc.crs_epsg = 32638;
  fc.features.push_back({p, {{"id", "a"}}});
  const auto j = io::to_json(fc);
  // RFC 7946: exterior counter-clockwise, holes clockwise.
  const Polygon back = io::polygon_from_geometry(j["features"][0]["geometry"]);
  EXPECT_GT(ring_signed_area(back.exterior), 0);
  EXPECT_LT(ring_signed_area(back.holes[0]), 0);
  EXPECT_DOUBLE_EQ(polygon_area(back), 91.0);
  const auto fc2 = io::feature_collection_from_json(j);
  EXPECT_EQ(*fc2.crs_epsg, 32638);
  EXPECT_EQ(fc2.features[0].properties["id"], "a");
}

TEST(Io, WorldFileUsesPixelCenters) {
  const GeoTransform t{500000, 3500000, 2, 2};
  const GeoTransform back = io::parse_world_file(io::world_file_text(t));
  EXPECT_DOUBLE_EQ(back.origin_x, t.origin_x);
  EXPECT_DOUBLE_EQ(back.origin_y, t.origin_y);
  EXPECT_DOUBLE_EQ(back.pixel_w, 2);
  EXPECT_DOUBLE_EQ(back.pixel_h, 2);
  std::istringstream lines(io::world_file_text(t));
  std::vector<double> v;
  double x;
  while (lines >> x) v.push_back(x);
  ASSERT_EQ(v.size(), 6u);
  EXPECT_DOUBLE_EQ(v[3], -2);
  EXPECT_DOUBLE_EQ(v[4], 500001);
  EXPECT_DOUBLE_EQ(v[5], 3499999);
}

TEST(Io, PngAndProbRasterRoundTrip) {
  const fs::path dir = scratch("io");
  RgbImage img(5, 3, {10, 20, 1, 1});
  for (int i = 0; i < 15; ++i) img.values[static_cast<std::size_t>(i)] = {static_cast<std::uint8_t>(i), 7, static_cast<std::uint8_t>(255 - i)};
  io::write_rgb_png(dir / "a.png", img);
  io::write_world_file(dir / "a.png", img.transform);
  const RgbImage back = io::read_rgb_png(dir / "a.png");
  EXPECT_EQ(back.values, img.values);
  EXPECT_EQ(back.transform, img.transform);

  ProbRaster p(4, 2, {0, 8, 0.5, 0.5}, 0.25f);
  p.values[3] = -1.0f;
  p.nodata = -1.0f;
  io::write_prob_raster(dir / "p", p);
  const ProbRaster q = io::read_prob_raster(dir / "p");
  EXPECT_EQ(q.values, p.values);
  EXPECT_EQ(q.transform, p.transform);
  ASSERT_TRUE(q.nodata);
  EXPECT_EQ(*q.nodata, -1.0f);
  try {
    io::read_prob_raster(dir / "missing");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingExternalRaster);
  }
}

TEST(Io, ImageryStoreStitchesManifestTiles) {
  const fs::path dir = scratch("imagery");
  RgbImage left(4, 4, {0, 4, 1, 1}, Rgb{10, 10, 10});
  RgbImage right(4, 4, {4, 4, 1, 1}, Rgb{200, 200, 200});
  io::write_rgb_png(dir / "l.png", left);
  io::write_world_file(dir / "l.png", left.transform);
  io::write_rgb_png(dir / "r.png", right);
  io::write_world_file(dir / "r.png", right.transform);
  io::write_json(dir / "manifest.json", {{"images",
                                          {{{"file", "l.png"}, {"extent", {0, 0, 4, 4}}},
                                           {{"file", "r.png"}, {"extent", {4, 0, 8, 4}}}}}});
  auto store = io::ImageryStore::open(dir / "manifest.json");
  const RgbImage w = store.window({4, 2}, 4, 1, true);
  EXPECT_EQ(w.at(0, 0).r, 10);
  EXPECT_EQ(w.at(1, 3).r, 10);
  EXPECT_EQ(w.at(2, 0).r, 200);
  EXPECT_EQ(w.at(3, 3).r, 200);
  EXPECT_THROW(store.window({7, 2}, 4, 1, true), Error);
  const RgbImage z = store.window({7, 2}, 4, 1, false);
  EXPECT_EQ(z.at(3, 0).r, 0);
}

// ---------------------------------------------------------------------------
// catalog

TEST(Catalog, TopKRemovesLargestWithReason) {
  std::vector<catalog::SiteRecord> sites;
  for (int i = 0; i < 10; ++i) sites.push_back(catalog::make_site("s" + std::to_string(i), square(i * 100, 0, 35 + i)));
  catalog::CurationParams p;
  p.top_k = 2;
  p.window_side = 0;
  const auto r = catalog::curate(sites, p);
  ASSERT_EQ(r.removed.size(), 2u);
  std::set<std::string> ids;
  for (const auto& rm : r.removed) {
    EXPECT_EQ(rm.reason, catalog::RemovalReason::TopK);
    ids.insert(rm.site.id);
  }
  EXPECT_EQ(ids, (std::set<std::string>{"s8", "s9"}));
  EXPECT_EQ(r.kept.size(), 8u);
}

TEST(Catalog, SmallAndDestroyedReasons) {
  catalog::CurationParams p;
  p.top_k = 0;
  std::vector<catalog::SiteRecord> sites{catalog::make_site("small", square(0, 0, 30)),  // 900 m2
                                         catalog::make_site("ok", square(0, 0, 40)),
                                         catalog::make_site("gone", square(0, 0, 50), true),
                                         catalog::make_site("wide", rectangle(0, 0, 1200, 10))};
  const auto r = catalog::curate(sites, p);
  std::map<std::string, catalog::RemovalReason> reasons;
  for (const auto& rm : r.removed) reasons[rm.site.id] = rm.reason;
  EXPECT_EQ(reasons.at("small"), catalog::RemovalReason::TooSmall);
  EXPECT_EQ(reasons.at("gone"), catalog::RemovalReason::Destroyed);
  EXPECT_EQ(reasons.at("wide"), catalog::RemovalReason::WindowOverflow);
  ASSERT_EQ(r.kept.size(), 1u);
  EXPECT_EQ(r.kept[0].id, "ok");
}

TEST(Catalog, FirstReasonFollowsPrecedence) {
  catalog::CurationParams p;
  p.top_k = 0;
  const auto r = catalog::curate({catalog::make_site("x", square(0, 0, 20), true)}, p);
  ASSERT_EQ(r.removed.size(), 1u);
  EXPECT_EQ(r.removed[0].reason, catalog::RemovalReason::TooSmall);
  EXPECT_EQ(r.removed[0].all_reasons.size(), 2u);
}

TEST(Catalog, PartitionAndIdempotence) {
  Rng rng(9);
  std::vector<catalog::SiteRecord> sites;
  for (int i = 0; i < 300; ++i) {
    sites.push_back(catalog::make_site("s" + std::to_string(i), square(0, 0, rng.uniform(10, 1500)), rng.coin(0.1)));
  }
  catalog::CurationParams p;
  p.top_k = 0;
  const auto r = catalog::curate(sites, p);
  EXPECT_EQ(r.kept.size() + r.removed.size(), sites.size());
  std::set<std::string> kept;
  for (const auto& s : r.kept) kept.insert(s.id);
  for (const auto& rm : r.removed) EXPECT_FALSE(kept.count(rm.site.id));
  const auto again = catalog::curate(r.kept, p);
  EXPECT_TRUE(again.removed.empty());
  EXPECT_EQ(again.kept.size(), r.kept.size());
}

TEST(Catalog, SelectByLabelsTepaAndLowMound) {
  std::vector<catalog::SiteRecord> sites;
  auto add = [&](int n, const char* cat, const char* pres) {
    for (int i = 0; i < n; ++i) {
      auto s = catalog::make_site("u" + std::to_string(sites.size()), square(0, 0, 40));
      s.category = cat;
      s.preservation = pres;
      sites.push_back(s);
    }
  };
  add(148, "Tepa", "Well-preserved");
  add(67, "Low Mound", "Well-preserved");
  add(500, "Tepa", "Damaged");
  add(300, "Low Mound", "Destroyed");
  add(1303, "Kurgan", "Well-preserved");
  ASSERT_EQ(sites.size(), 2318u);
  const auto sel = catalog::select_by_labels(sites, {"Tepa", "Low Mound"}, {"Well-preserved"});
  EXPECT_EQ(sel.size(), 215u);
  EXPECT_TRUE(catalog::select_by_labels(sites, {}, {"Well-preserved"}).empty());
}

TEST(Catalog, SplitSizesFollowFloorArithmetic) {
  auto ids = [](const char* prefix, int n) {
    std::vector<std::string> v;
    for (int i = 0; i < n; ++i) v.push_back(prefix + std::to_string(i));
    return v;
  };
  auto count = [](const std::vector<catalog::SplitAssignment>& a, const std::string& prefix, catalog::Split s) {
    return std::count_if(a.begin(), a.end(), [&](const auto& x) { return x.split == s && x.id.rfind(prefix, 0) == 0; });
  };
  const auto a = catalog::make_splits(ids("s", 100), ids("n", 20), 0.1, 0.1, 42);
  EXPECT_EQ(count(a, "s", catalog::Split::test), 10);
  EXPECT_EQ(count(a, "n", catalog::Split::test), 2);
  EXPECT_EQ(count(a, "s", catalog::Split::val), 9);
  EXPECT_EQ(a, catalog::make_splits(ids("s", 100), ids("n", 20), 0.1, 0.1, 42));
  EXPECT_NE(a, catalog::make_splits(ids("s", 100), ids("n", 20), 0.1, 0.1, 43));

  const auto big = catalog::make_splits(ids("s", 4050), ids("n", 1155), 0.1, 0.1, 1);
  EXPECT_EQ(count(big, "s", catalog::Split::test), 405);
  EXPECT_EQ(count(big, "n", catalog::Split::test), 115);
  EXPECT_EQ(big.size(), 5205u);

  try {
    catalog::make_splits(ids("s", 2), {}, 0.1, 0.1, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::StratumTooSmall);
  }
}

TEST(Catalog, ReportFlagsImageTotalDiscrepancy) {
  std::vector<catalog::SiteRecord> sites;
  for (int i = 0; i < 20; ++i) sites.push_back(catalog::make_site("s" + std::to_string(i), square(0, 0, 40 + i)));
  catalog::CurationParams p;
  p.top_k = 2;
  const auto r = catalog::curate(sites, p);
  const auto rep = catalog::curation_report(r, {5, 20});
  EXPECT_EQ(rep["totals"]["kept_sites"], 18);
  EXPECT_EQ(rep["totals"]["total_images"], 23);
  EXPECT_EQ(rep["discrepancy"]["difference"], 3);
  EXPECT_TRUE(rep["discrepancy"]["flagged"].get<bool>());
  EXPECT_FALSE(catalog::curation_report(r, {5, 23})["discrepancy"]["flagged"].get<bool>());
}

// ---------------------------------------------------------------------------
// tiles

TEST(Tiles, WindowSizes) {
  RgbImage src(3000, 3000, {0, 3000, 1.0 / 1.024, 1.0 / 1.024});
  const Point c = centroid(rectangle(0, 3000 - 3000 / 1.024, 3000 / 1.024, 3000));
  EXPECT_EQ(tiles::extract_window(src, c, 1000, 1.024).width, 1024);
  EXPECT_EQ(tiles::extract_window(src, c, 2000, 1.024).width, 2048);
}

TEST(Tiles, FullExtentWindowIsIdentityCopy) {
  Rng rng(2);
  RgbImage src(64, 64, {100, 200, 1, 1});
  for (auto& v : src.values) v = {static_cast<std::uint8_t>(rng.below(256)), static_cast<std::uint8_t>(rng.below(256)), 0};
  const RgbImage w = tiles::extract_window(src, {132, 168}, 64, 1);
  EXPECT_EQ(w.values, src.values);
  EXPECT_EQ(w.transform, src.transform);
}

TEST(Tiles, WindowCenterAndStrictBounds) {
  RgbImage src(100, 100, {0, 100, 1, 1});
  const RgbImage w = tiles::extract_window(src, {40, 60}, 20, 1);
  EXPECT_DOUBLE_EQ(w.transform.origin_x, 30);
  EXPECT_DOUBLE_EQ(w.transform.origin_y, 70);
  try {
    tiles::extract_window(src, {5, 50}, 20, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::OutOfBounds);
  }
  EXPECT_NO_THROW(tiles::extract_window(src, {5, 50}, 20, 1, tiles::BoundsPolicy::zero_pad));
}

TEST(Tiles, RasterizeMatchesPointInPolygonOracle) {
  const GeoTransform t{0, 10, 1, 1};
  // cols 2..5, rows 3..7 inclusive at unit pixels
  const Mask m = tiles::rasterize_mask({rectangle(2, 10 - 8, 6, 10 - 3)}, t, 10, 10);
  for (int r = 0; r < 10; ++r) {
    for (int c = 0; c < 10; ++c) EXPECT_EQ(m.at(c, r), (c >= 2 && c <= 5 && r >= 3 && r <= 7) ? 1 : 0);
  }
  const Mask none = tiles::rasterize_mask({}, t, 10, 10);
  EXPECT_EQ(std::count(none.values.begin(), none.values.end(), 1), 0);
  const Mask all = tiles::rasterize_mask({rectangle(-1, -1, 11, 11)}, t, 10, 10);
  EXPECT_EQ(std::count(all.values.begin(), all.values.end(), 1), 100);

  Rng rng(4);
  const Polygon blob = closed(random_convex(rng, 9, 5, 5, 4));
  const Mask b = tiles::rasterize_mask({blob}, t, 10, 10);
  for (int r = 0; r < 10; ++r) {
    for (int c = 0; c < 10; ++c) {
      const Point p = pixel_to_world(t, c + 0.5, r + 0.5);
      EXPECT_EQ(b.at(c, r), point_in_polygon(blob, p.x, p.y) ? 1 : 0);
    }
  }
}

TEST(Tiles, RandomCropIsDeterministicAndGeoConsistent) {
  tiles::Tile t;
  t.image = RgbImage(64, 64, {1000, 2000, 0.5, 0.5});
  t.mask = Mask(64, 64, t.image.transform);
  for (int i = 0; i < 64 * 64; ++i) t.image.values[static_cast<std::size_t>(i)] = {static_cast<std::uint8_t>(i % 251), 0, 0};
  const auto a = tiles::random_crop(t, 32, 99), b = tiles::random_crop(t, 32, 99);
  EXPECT_EQ(a.crop_col, b.crop_col);
  EXPECT_EQ(a.crop_row, b.crop_row);
  EXPECT_LE(a.crop_col, 32);
  EXPECT_LE(a.crop_row, 32);
  // the same world point reads the same pixel before and after
  const Point w = pixel_to_world(a.image.transform, 3.5, 7.5);
  const auto p = world_to_pixel(t.image.transform, w.x, w.y);
  EXPECT_EQ(a.image.at(3, 7), t.image.at(static_cast<int>(p.col), static_cast<int>(p.row)));
  const auto id = tiles::random_crop(t, 64, 5);
  EXPECT_EQ(id.crop_col, 0);
  EXPECT_EQ(id.image.values, t.image.values);
  try {
    tiles::random_crop(t, 65, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::CropTooLarge);
  }
}

TEST(Tiles, CropOffsetsCoverRange) {
  tiles::Tile t;
  t.image = RgbImage(1024, 1024, {});
  t.mask = Mask(1024, 1024, {});
  int lo = 1 << 30, hi = -1;
  for (std::uint64_t s = 0; s < 400; ++s) {
    const auto c = tiles::random_crop(t, 512, s);
    EXPECT_EQ(c.image.width, 512);
    lo = std::min(lo, c.crop_col);
    hi = std::max(hi, c.crop_col);
  }
  EXPECT_GE(lo, 0);
  EXPECT_LE(hi, 512);
  EXPECT_LT(lo, 20);
  EXPECT_GT(hi, 490);
}

TEST(Tiles, AugmentIdentityInvolutionAndMaskCount) {
  Rng rng(8);
  tiles::Tile t;
  t.image = RgbImage(12, 7, {});
  t.mask = Mask(12, 7, {});
  for (auto& v : t.image.values) v = {static_cast<std::uint8_t>(rng.below(256)), static_cast<std::uint8_t>(rng.below(256)), 3};
  for (auto& v : t.mask.values) v = static_cast<std::uint8_t>(rng.coin(0.3));
  const auto fg = std::count(t.mask.values.begin(), t.mask.values.end(), 1);

  EXPECT_EQ(tiles::augment(t, {}).image.values, t.image.values);
  tiles::AugSpec r2;
  r2.rot_quarter = 2;
  const auto twice = tiles::augment(tiles::augment(t, r2), r2);
  EXPECT_EQ(twice.image.values, t.image.values);
  EXPECT_EQ(twice.mask.values, t.mask.values);

  for (std::uint64_t s = 0; s < 30; ++s) {
    const auto a = tiles::augment(t, tiles::random_aug_spec(s));
    EXPECT_EQ(std::count(a.mask.values.begin(), a.mask.values.end(), 1), fg);
  }
}

TEST(Tiles, PhotometricChangesImageOnly) {
  tiles::Tile t;
  t.image = RgbImage(2, 1, {}, Rgb{100, 250, 0});
  t.mask = Mask(2, 1, {}, 1);
  tiles::AugSpec s;
  s.brightness_shift = 10;
  s.contrast_scale = 1.1;
  const auto a = tiles::augment(t, s);
  EXPECT_EQ(a.image.at(0, 0).r, static_cast<std::uint8_t>(std::lround((100 - 127.5) * 1.1 + 137.5)));
  EXPECT_EQ(a.image.at(0, 0).g, 255);
  EXPECT_EQ(a.image.at(0, 0).b, 0);
  EXPECT_EQ(a.mask.values, t.mask.values);
}

TEST(Tiles, DihedralGroupClosure) {
  Rng rng(12);
  Mask grid(5, 5, {});
  for (std::size_t i = 0; i < grid.values.size(); ++i) grid.values[i] = static_cast<std::uint8_t>(i);
  std::set<std::vector<std::uint8_t>> distinct;
  for (int r1 = 0; r1 < 4; ++r1) {
    for (int m1 = 0; m1 < 2; ++m1) {
      distinct.insert(tiles::apply_geometry(grid, r1, m1).values);
      for (int r2 = 0; r2 < 4; ++r2) {
        for (int m2 = 0; m2 < 2; ++m2) {
          tiles::AugSpec a, b;
          a.rot_quarter = r1;
          a.mirror = m1;
          b.rot_quarter = r2;
          b.mirror = m2;
          const auto c = tiles::compose_geometry(a, b);
          const auto seq = tiles::apply_geometry(tiles::apply_geometry(grid, r1, m1), r2, m2);
          EXPECT_EQ(seq.values, tiles::apply_geometry(grid, c.rot_quarter, c.mirror).values);
        }
      }
    }
  }
  EXPECT_EQ(distinct.size(), 8u);
}

TEST(Tiles, DownscaleHalf) {
  tiles::Tile t;
  t.image = RgbImage(4, 2, {0, 0, 1, 1}, Rgb{77, 77, 77});
  t.mask = Mask(4, 2, {0, 0, 1, 1});
  t.mask.values = {1, 1, 1, 0, 1, 0, 0, 0};
  const auto d = tiles::downscale_half(t);
  EXPECT_EQ(d.image.width, 2);
  EXPECT_EQ(d.image.at(0, 0).r, 77);
  EXPECT_EQ(d.mask.at(0, 0), 1);  // {1,1,1,0}
  EXPECT_EQ(d.mask.at(1, 0), 0);  // {1,0,0,0}
  EXPECT_DOUBLE_EQ(d.image.transform.pixel_w, 2);
  tiles::Tile tie = t;
  tie.mask.values = {1, 0, 0, 0, 1, 0, 0, 0};
  EXPECT_EQ(tiles::downscale_half(tie).mask.at(0, 0), 1);  // 2 of 4
  tiles::Tile odd;
  odd.image = RgbImage(3, 2, {});
  odd.mask = Mask(3, 2, {});
  try {
    tiles::downscale_half(odd);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::OddDimensions);
  }
  tiles::Tile big;
  big.image = RgbImage(1024, 1024, {});
  big.mask = Mask(1024, 1024, {});
  EXPECT_EQ(tiles::downscale_half(big).image.width, 512);
}

TEST(Tiles, OnDiskRoundTrip) {
  const fs::path dir = scratch("tiles");
  tiles::Tile t;
  t.image = RgbImage(8, 8, {500, 900, 2, 2}, Rgb{1, 2, 3});
  t.mask = Mask(8, 8, t.image.transform);
  t.mask.at(3, 4) = 1;
  t.source_id = "site-7";
  t.crop_col = 5;
  t.crop_row = 6;
  t.aug = tiles::random_aug_spec(3);
  tiles::write_tile(dir, "site-7", t, catalog::Split::test);
  const auto all = tiles::read_tile_dir(dir);
  ASSERT_EQ(all.size(), 1u);
  EXPECT_EQ(all[0].split, catalog::Split::test);
  EXPECT_EQ(all[0].tile.mask.values, t.mask.values);
  EXPECT_EQ(all[0].tile.image.values, t.image.values);
  EXPECT_EQ(all[0].tile.image.transform, t.image.transform);
  EXPECT_EQ(all[0].tile.crop_col, 5);
  EXPECT_EQ(all[0].tile.aug.rot_quarter, t.aug.rot_quarter);
}
