#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#ifndef BOOST_GEOMETRY_NO_ROBUSTNESS
#define BOOST_GEOMETRY_NO_ROBUSTNESS
#endif
#include <boost/geometry.hpp>
#include <boost/geometry/geometries/point_xy.hpp>
#include <boost/geometry/geometries/polygon.hpp>
#include <boost/geometry/geometries/multi_polygon.hpp>

#include "moundline/error.hpp"

namespace moundline {

struct Point {
  double x = 0;
  double y = 0;

  friend bool operator==(const Point&, const Point&) = default;
};

/// Closed ring: first point repeated as last.
using Ring = std::vector<Point>;

struct Polygon {
  Ring exterior;
  std::vector<Ring> holes;

  friend bool operator==(const Polygon&, const Polygon&) = default;
};

struct BBox {
  double min_x = std::numeric_limits<double>::infinity();
  double min_y = std::numeric_limits<double>::infinity();
  double max_x = -std::numeric_limits<double>::infinity();
  double max_y = -std::numeric_limits<double>::infinity();

  double width() const { return max_x - min_x; }
  double height() const { return max_y - min_y; }
  bool empty() const { return !(max_x >= min_x && max_y >= min_y); }

  void expand(const Point& p) {
    min_x = std::min(min_x, p.x);
    min_y = std::min(min_y, p.y);
    max_x = std::max(max_x, p.x);
    max_y = std::max(max_y, p.y);
  }

  bool overlaps(const BBox& o) const {
    return !(o.min_x > max_x || o.max_x < min_x || o.min_y > max_y || o.max_y < min_y);
  }
};

/// Affine pixel<->world mapping. Origin is the top-left corner of pixel (0,0);
/// world y decreases as the row index grows.
struct GeoTransform {
  double origin_x = 0;
  double origin_y = 0;
  double pixel_w = 1;
  double pixel_h = 1;

  friend bool operator==(const GeoTransform&, const GeoTransform&) = default;

  void validate() const {
    if (!(pixel_w > 0) || !(pixel_h > 0)) {
      throw Error(ErrorCode::InvalidArgument, "pixel size must be positive");
    }
  }

  /// Transform of a sub-raster whose (0,0) is this raster's (col,row).
  GeoTransform shifted(double col, double row) const {
    return {origin_x + col * pixel_w, origin_y - row * pixel_h, pixel_w, pixel_h};
  }

  GeoTransform scaled(double factor) const {
    return {origin_x, origin_y, pixel_w * factor, pixel_h * factor};
  }
};

struct PixelCoord {
  double col = 0;
  double row = 0;
};

inline PixelCoord world_to_pixel(const GeoTransform& t, double x, double y) {
  return {(x - t.origin_x) / t.pixel_w, (t.origin_y - y) / t.pixel_h};
}

inline Point pixel_to_world(const GeoTransform& t, double col, double row) {
  return {t.origin_x + col * t.pixel_w, t.origin_y - row * t.pixel_h};
}

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;

  friend bool operator==(const Rgb&, const Rgb&) = default;
};

template <class V>
struct Raster {
  int width = 0;
  int height = 0;
  std::vector<V> values;
  GeoTransform transform;
  std::optional<V> nodata;

  Raster() = default;
  Raster(int w, int h, GeoTransform t, V fill = V{})
      : width(w), height(h), values(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill),
        transform(t) {
    if (w < 0 || h < 0) throw Error(ErrorCode::InvalidArgument, "negative raster size");
  }

  std::size_t size() const { return values.size(); }
  std::size_t index(int col, int row) const {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(width) + static_cast<std::size_t>(col);
  }
  V& at(int col, int row) { return values[index(col, row)]; }
  const V& at(int col, int row) const { return values[index(col, row)]; }
  bool contains(int col, int row) const { return col >= 0 && row >= 0 && col < width && row < height; }
  bool is_nodata(const V& v) const { return nodata.has_value() && v == *nodata; }

  BBox extent() const {
    BBox b;
    b.expand(pixel_to_world(transform, 0, 0));
    b.expand(pixel_to_world(transform, width, height));
    return b;
  }
};

using Mask = Raster<std::uint8_t>;
using RgbImage = Raster<Rgb>;
/// Per-pixel probabilities in [0,1]; nodata cells hold the nodata sentinel.
using ProbRaster = Raster<float>;

template <class A, class B>
bool same_shape(const Raster<A>& a, const Raster<B>& b) {
  return a.width == b.width && a.height == b.height;
}

// ---------------------------------------------------------------------------
// Rings and polygons

inline void check_ring(const Ring& r) {
  if (r.size() < 4) throw Error(ErrorCode::InvalidRing, "ring has fewer than 4 points");
  if (!(r.front() == r.back())) throw Error(ErrorCode::InvalidRing, "ring is not closed");
}

inline void check_polygon(const Polygon& p) {
  check_ring(p.exterior);
  for (const auto& h : p.holes) check_ring(h);
}

/// Shoelace sum; positive for counter-clockwise rings (y up).
inline double ring_signed_area(const Ring& r) {
  if (r.size() < 3) return 0;
  // shift to the first vertex to limit cancellation on projected coordinates
  const double x0 = r[0].x;
  const double y0 = r[0].y;
  double sum = 0;
  for (std::size_t i = 0; i + 1 < r.size(); ++i) {
    const double ax = r[i].x - x0, ay = r[i].y - y0;
    const double bx = r[i + 1].x - x0, by = r[i + 1].y - y0;
    sum += ax * by - bx * ay;
  }
  return sum / 2.0;
}

inline double polygon_area(const Polygon& p) {
  check_polygon(p);
  double a = std::abs(ring_signed_area(p.exterior));
  for (const auto& h : p.holes) a -= std::abs(ring_signed_area(h));
  return std::max(0.0, a);
}

inline BBox bbox(const Ring& r) {
  BBox b;
  for (const auto& p : r) b.expand(p);
  return b;
}

inline BBox bbox(const Polygon& p) { return bbox(p.exterior); }

/// Area-weighted centroid of the exterior ring, falling back to the vertex
/// mean for degenerate rings.
inline Point centroid(const Polygon& p) {
  const Ring& r = p.exterior;
  const double a = ring_signed_area(r);
  if (r.empty()) return {};
  const double x0 = r[0].x, y0 = r[0].y;
  if (std::abs(a) < 1e-15) {
    Point m;
    for (const auto& q : r) {
      m.x += q.x;
      m.y += q.y;
    }
    return {m.x / r.size(), m.y / r.size()};
  }
  double cx = 0, cy = 0;
  for (std::size_t i = 0; i + 1 < r.size(); ++i) {
    const double ax = r[i].x - x0, ay = r[i].y - y0;
    const double bx = r[i + 1].x - x0, by = r[i + 1].y - y0;
    const double cross = ax * by - bx * ay;
    cx += (ax + bx) * cross;
    cy += (ay + by) * cross;
  }
  return {x0 + cx / (6 * a), y0 + cy / (6 * a)};
}

/// Crossing-number test; points exactly on the boundary may land either side.
inline bool point_in_ring(const Ring& r, double x, double y) {
  bool inside = false;
  for (std::size_t i = 0, j = r.size() - 1; i < r.size(); j = i++) {
    const Point& a = r[i];
    const Point& b = r[j];
    if ((a.y > y) != (b.y > y)) {
      const double xi = a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (x < xi) inside = !inside;
    }
  }
  return inside;
}

inline bool point_in_polygon(const Polygon& p, double x, double y) {
  if (!point_in_ring(p.exterior, x, y)) return false;
  for (const auto& h : p.holes) {
    if (point_in_ring(h, x, y)) return false;
  }
  return true;
}

inline Ring reversed(Ring r) {
  std::reverse(r.begin(), r.end());
  return r;
}

/// Exterior counter-clockwise, holes clockwise (RFC 7946 winding).
inline Polygon oriented(Polygon p) {
  if (ring_signed_area(p.exterior) < 0) p.exterior = reversed(std::move(p.exterior));
  for (auto& h : p.holes) {
    if (ring_signed_area(h) > 0) h = reversed(std::move(h));
  }
  return p;
}

namespace detail {

namespace bg = boost::geometry;
using BgPoint = bg::model::d2::point_xy<double>;
using BgPolygon = bg::model::polygon<BgPoint, /*ClockWise=*/false, /*Closed=*/true>;
using BgMultiPolygon = bg::model::multi_polygon<BgPolygon>;

inline BgPolygon to_bg(const Polygon& p) {
  BgPolygon out;
  for (const auto& q : p.exterior) out.outer().emplace_back(q.x, q.y);
  for (const auto& h : p.holes) {
    out.inners().emplace_back();
    for (const auto& q : h) out.inners().back().emplace_back(q.x, q.y);
  }
  bg::correct(out);
  return out;
}

inline double snap(double v) { return std::round(v * 1e9) / 1e9; }

}  // namespace detail

/// Area of a ∩ b. Result vertices are snapped to 1e-9 m and zero-area pieces
/// are dropped, so touching boundaries contribute nothing.
inline double intersection_area(const Polygon& a, const Polygon& b) {
  check_polygon(a);
  check_polygon(b);
  if (!bbox(a).overlaps(bbox(b))) return 0.0;
  detail::BgMultiPolygon pieces;
  detail::bg::intersection(detail::to_bg(a), detail::to_bg(b), pieces);
  double total = 0;
  for (auto& piece : pieces) {
    detail::bg::for_each_point(piece, [](detail::BgPoint& q) {
      q.x(detail::snap(q.x()));
      q.y(detail::snap(q.y()));
    });
    const double area = std::abs(detail::bg::area(piece));
    if (area > 1e-12) total += area;
  }
  return total;
}

inline bool polygon_intersects(const Polygon& a, const Polygon& b, double min_area = 0.0) {
  if (min_area < 0) throw Error(ErrorCode::InvalidArgument, "min_area must be >= 0");
  return intersection_area(a, b) > min_area;
}

/// Structural validity: closed rings, no self-intersections, holes inside.
inline bool is_valid(const Polygon& p) {
  if (p.exterior.size() < 4 || !(p.exterior.front() == p.exterior.back())) return false;
  for (const auto& h : p.holes) {
    if (h.size() < 4 || !(h.front() == h.back())) return false;
  }
  return detail::bg::is_valid(detail::to_bg(p));
}

inline Polygon rectangle(double min_x, double min_y, double max_x, double max_y) {
  return {{{min_x, min_y}, {max_x, min_y}, {max_x, max_y}, {min_x, max_y}, {min_x, min_y}}, {}};
}

}  // namespace moundline
