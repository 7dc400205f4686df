#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "moundline/error.hpp"
#include "moundline/geo.hpp"
#include "moundline/io/geojson.hpp"

namespace moundline::postproc {

// ---------------------------------------------------------------------------
// Gaussian blur

/// Normalized 1-D kernel of radius ceil(3 sigma); element [radius] is the center.
inline std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma > 0)) return {1.0};
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-(i * i) / (2.0 * sigma * sigma));
    k[static_cast<std::size_t>(i + radius)] = v;
    sum += v;
  }
  for (auto& v : k) v /= sum;
  return k;
}

/// Symmetric reflection (edge sample repeated): -1 -> 0, n -> n-1.
inline int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

/// Separable Gaussian blur with reflected borders. Nodata cells enter the
/// convolution as 0 and stay nodata in the output.
inline ProbRaster gaussian_blur(const ProbRaster& r, double sigma) {
  if (sigma < 0) throw Error(ErrorCode::InvalidArgument, "sigma must be >= 0");
  if (sigma == 0 || r.values.empty()) return r;
  const auto k = gaussian_kernel(sigma);
  const int radius = static_cast<int>(k.size() / 2);
  const int w = r.width, h = r.height;

  std::vector<double> src(r.values.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    const float v = r.values[i];
    src[i] = (r.is_nodata(v) || std::isnan(v)) ? 0.0 : v;
  }
  std::vector<double> tmp(src.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      for (int d = -radius; d <= radius; ++d) {
        acc += k[static_cast<std::size_t>(d + radius)] * src[static_cast<std::size_t>(y) * w + reflect_index(x + d, w)];
      }
      tmp[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
  ProbRaster out = r;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      if (r.is_nodata(r.values[i])) continue;
      double acc = 0;
      for (int d = -radius; d <= radius; ++d) {
        acc += k[static_cast<std::size_t>(d + radius)] * tmp[static_cast<std::size_t>(reflect_index(y + d, h)) * w + x];
      }
      out.values[i] = static_cast<float>(std::clamp(acc, 0.0, 1.0));
    }
  }
  return out;
}

/// 1 iff value >= t; nodata and NaN cells are 0.
inline Mask threshold_clip(const ProbRaster& r, double t) {
  if (!(t >= 0 && t <= 1)) throw Error(ErrorCode::InvalidArgument, "threshold must be in [0,1]");
  Mask m(r.width, r.height, r.transform, 0);
  for (std::size_t i = 0; i < r.values.size(); ++i) {
    const float v = r.values[i];
    m.values[i] = (!r.is_nodata(v) && !std::isnan(v) && v >= t) ? 1 : 0;
  }
  return m;
}

// ---------------------------------------------------------------------------
// Connected components and boundary tracing

enum class Connectivity { four = 4, eight = 8 };

struct Components {
  std::vector<int> labels;  // -1 background, else component id
  int count = 0;
};

inline Components label_components(const Mask& m, Connectivity conn = Connectivity::four) {
  Components cc;
  cc.labels.assign(m.values.size(), -1);
  std::vector<std::pair<int, int>> stack;
  for (int r = 0; r < m.height; ++r) {
    for (int c = 0; c < m.width; ++c) {
      if (!m.at(c, r) || cc.labels[m.index(c, r)] >= 0) continue;
      const int id = cc.count++;
      cc.labels[m.index(c, r)] = id;
      stack.push_back({c, r});
      while (!stack.empty()) {
        auto [x, y] = stack.back();
        stack.pop_back();
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            if ((dx == 0 && dy == 0) || (conn == Connectivity::four && dx != 0 && dy != 0)) continue;
            const int nx = x + dx, ny = y + dy;
            if (!m.contains(nx, ny) || !m.at(nx, ny)) continue;
            auto& l = cc.labels[m.index(nx, ny)];
            if (l < 0) {
              l = id;
              stack.push_back({nx, ny});
            }
          }
        }
      }
    }
  }
  return cc;
}

namespace detail {

struct GridPt {
  int x = 0;
  int y = 0;
  friend bool operator==(const GridPt&, const GridPt&) = default;
  friend auto operator<=>(const GridPt&, const GridPt&) = default;
};

using GridRing = std::vector<GridPt>;  // open (no repeated closing point)

// Boundary edges of one component, oriented so the component lies to the
// right in screen coordinates (y down); outer rings run clockwise on screen.
inline std::vector<GridRing> trace_component(const std::vector<int>& labels, int w, int h, int id,
                                             const std::vector<std::pair<int, int>>& pixels) {
  auto inside = [&](int c, int r) {
    return c >= 0 && r >= 0 && c < w && r < h && labels[static_cast<std::size_t>(r) * w + c] == id;
  };
  struct Edge {
    GridPt from, to;
    bool used = false;
  };
  std::vector<Edge> edges;
  for (auto [c, r] : pixels) {
    if (!inside(c, r - 1)) edges.push_back({{c, r}, {c + 1, r}});
    if (!inside(c + 1, r)) edges.push_back({{c + 1, r}, {c + 1, r + 1}});
    if (!inside(c, r + 1)) edges.push_back({{c + 1, r + 1}, {c, r + 1}});
    if (!inside(c - 1, r)) edges.push_back({{c, r + 1}, {c, r}});
  }
  std::map<GridPt, std::vector<std::size_t>> outgoing;
  for (std::size_t i = 0; i < edges.size(); ++i) outgoing[edges[i].from].push_back(i);

  std::vector<GridRing> rings;
  for (std::size_t start = 0; start < edges.size(); ++start) {
    if (edges[start].used) continue;
    // in-degree equals out-degree everywhere, so the walk can only get stuck
    // back at its start vertex
    GridRing ring;
    std::size_t cur = start;
    while (true) {
      Edge& e = edges[cur];
      e.used = true;
      ring.push_back(e.from);
      const int dx = e.to.x - e.from.x, dy = e.to.y - e.from.y;
      std::size_t next = SIZE_MAX;
      for (auto o : outgoing[e.to]) {
        if (edges[o].used) continue;
        const int ox = edges[o].to.x - edges[o].from.x, oy = edges[o].to.y - edges[o].from.y;
        // prefer the left turn at saddles; split_simple() separates any
        // loops that still share a vertex
        const bool left = (dx * oy - dy * ox) < 0;
        if (next == SIZE_MAX || left) next = o;
      }
      if (next == SIZE_MAX) break;
      cur = next;
    }
    rings.push_back(std::move(ring));
  }
  return rings;
}

// Split a ring at repeated vertices into simple loops.
inline std::vector<GridRing> split_simple(const GridRing& ring) {
  std::vector<GridRing> out;
  GridRing stack;
  std::map<GridPt, std::size_t> pos;
  for (const auto& p : ring) {
    auto it = pos.find(p);
    if (it != pos.end()) {
      GridRing loop(stack.begin() + static_cast<std::ptrdiff_t>(it->second), stack.end());
      for (std::size_t i = it->second + 1; i < stack.size(); ++i) pos.erase(stack[i]);
      stack.resize(it->second + 1);
      if (loop.size() >= 3) out.push_back(std::move(loop));
    } else {
      pos[p] = stack.size();
      stack.push_back(p);
    }
  }
  if (stack.size() >= 3) out.push_back(std::move(stack));
  return out;
}

inline GridRing drop_collinear(const GridRing& r) {
  GridRing out;
  const std::size_t n = r.size();
  for (std::size_t i = 0; i < n; ++i) {
    const GridPt& a = r[(i + n - 1) % n];
    const GridPt& b = r[i];
    const GridPt& c = r[(i + 1) % n];
    const long long cross =
        static_cast<long long>(b.x - a.x) * (c.y - b.y) - static_cast<long long>(b.y - a.y) * (c.x - b.x);
    if (cross != 0) out.push_back(b);
  }
  return out;
}

// Twice the signed area in screen coordinates; positive = clockwise on screen.
inline long long grid_area2(const GridRing& r) {
  long long s = 0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    const GridPt& a = r[i];
    const GridPt& b = r[(i + 1) % r.size()];
    s += static_cast<long long>(a.x) * b.y - static_cast<long long>(b.x) * a.y;
  }
  return s;
}

inline bool grid_point_in_ring(const GridRing& r, double x, double y) {
  bool in = false;
  for (std::size_t i = 0, j = r.size() - 1; i < r.size(); j = i++) {
    const double xi = r[i].x, yi = r[i].y, xj = r[j].x, yj = r[j].y;
    if ((yi > y) != (yj > y) && x < xi + (y - yi) * (xj - xi) / (yj - yi)) in = !in;
  }
  return in;
}

inline Ring to_world(const GridRing& r, const GeoTransform& t) {
  Ring out;
  out.reserve(r.size() + 1);
  for (const auto& p : r) out.push_back(pixel_to_world(t, p.x, p.y));
  out.push_back(out.front());
  return out;
}

}  // namespace detail

/// One polygon per connected foreground component, following exact pixel
/// edges, holes included. An 8-connected component that only touches itself
/// at corners may yield several polygons, or one whose rings meet at a pinch
/// vertex (simple rings, but not OGC-valid).
inline std::vector<Polygon> polygonize(const Mask& m, const GeoTransform& transform,
                                       Connectivity conn = Connectivity::four, Components* labels_out = nullptr,
                                       std::vector<int>* component_of = nullptr) {
  const Components cc = label_components(m, conn);
  std::vector<std::vector<std::pair<int, int>>> pixels(static_cast<std::size_t>(cc.count));
  for (int r = 0; r < m.height; ++r) {
    for (int c = 0; c < m.width; ++c) {
      const int l = cc.labels[m.index(c, r)];
      if (l >= 0) pixels[static_cast<std::size_t>(l)].push_back({c, r});
    }
  }
  std::vector<Polygon> out;
  for (int id = 0; id < cc.count; ++id) {
    std::vector<detail::GridRing> outers, holes;
    for (const auto& raw : detail::trace_component(cc.labels, m.width, m.height, id, pixels[static_cast<std::size_t>(id)])) {
      for (auto& loop : detail::split_simple(raw)) {
        auto ring = detail::drop_collinear(loop);
        if (ring.size() < 3) continue;
        (detail::grid_area2(ring) > 0 ? outers : holes).push_back(std::move(ring));
      }
    }
    std::vector<Polygon> polys;
    for (const auto& o : outers) polys.push_back({detail::to_world(o, transform), {}});
    for (const auto& hring : holes) {
      // the component pixel to the right of the hole's first edge
      const auto& a = hring[0];
      const auto& b = hring[1];
      const double dx = b.x - a.x, dy = b.y - a.y;
      const double len = std::hypot(dx, dy);
      const double px = (a.x + b.x) / 2.0 - 0.5 * dy / len;
      const double py = (a.y + b.y) / 2.0 + 0.5 * dx / len;
      std::size_t best = 0;
      long long best_area = -1;
      for (std::size_t i = 0; i < outers.size(); ++i) {
        const long long area = detail::grid_area2(outers[i]);
        if (detail::grid_point_in_ring(outers[i], px, py) && (best_area < 0 || area < best_area)) {
          best = i;
          best_area = area;
        }
      }
      if (!polys.empty()) polys[best].holes.push_back(detail::to_world(hring, transform));
    }
    for (auto& p : polys) {
      out.push_back(oriented(std::move(p)));
      if (component_of) component_of->push_back(id);
    }
  }
  if (labels_out) *labels_out = cc;
  return out;
}

// ---------------------------------------------------------------------------
// Douglas-Peucker

namespace detail {

inline double segment_distance(const Point& p, const Point& a, const Point& b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  if (len2 == 0) return std::hypot(p.x - a.x, p.y - a.y);
  const double t = std::clamp(((p.x - a.x) * dx + (p.y - a.y) * dy) / len2, 0.0, 1.0);
  return std::hypot(p.x - (a.x + t * dx), p.y - (a.y + t * dy));
}

inline void dp_mark(const std::vector<Point>& pts, std::size_t lo, std::size_t hi, double tol,
                    std::vector<bool>& keep) {
  if (hi <= lo + 1) return;
  double worst = -1;
  std::size_t idx = lo;
  for (std::size_t i = lo + 1; i < hi; ++i) {
    const double d = segment_distance(pts[i], pts[lo], pts[hi]);
    if (d > worst) {
      worst = d;
      idx = i;
    }
  }
  if (worst > tol) {
    keep[idx] = true;
    dp_mark(pts, lo, idx, tol, keep);
    dp_mark(pts, idx, hi, tol, keep);
  }
}

inline Ring simplify_ring(const Ring& ring, double tol) {
  std::vector<Point> pts(ring.begin(), ring.end() - 1);
  const std::size_t n = pts.size();
  // split the closed ring at vertex 0 and the vertex farthest from it
  std::size_t far = 0;
  double far_d = -1;
  for (std::size_t i = 1; i < n; ++i) {
    const double d = std::hypot(pts[i].x - pts[0].x, pts[i].y - pts[0].y);
    if (d > far_d) {
      far_d = d;
      far = i;
    }
  }
  std::vector<Point> loop(pts);
  loop.push_back(pts[0]);
  std::vector<bool> keep(loop.size(), false);
  keep[0] = keep[far] = keep[loop.size() - 1] = true;
  dp_mark(loop, 0, far, tol, keep);
  dp_mark(loop, far, loop.size() - 1, tol, keep);
  Ring out;
  for (std::size_t i = 0; i < loop.size(); ++i) {
    if (keep[i]) out.push_back(loop[i]);
  }
  return out;
}

}  // namespace detail

/// Douglas-Peucker on every ring. Throws DegenerateResult when a ring would
/// drop below 4 points or the result is no longer a valid polygon.
inline Polygon simplify(const Polygon& p, double tolerance) {
  if (tolerance < 0) throw Error(ErrorCode::InvalidArgument, "tolerance must be >= 0");
  check_polygon(p);
  if (tolerance == 0) return p;
  Polygon out;
  out.exterior = detail::simplify_ring(p.exterior, tolerance);
  for (const auto& h : p.holes) out.holes.push_back(detail::simplify_ring(h, tolerance));
  if (out.exterior.size() < 4) throw Error(ErrorCode::DegenerateResult, "exterior collapsed");
  for (const auto& h : out.holes) {
    if (h.size() < 4) throw Error(ErrorCode::DegenerateResult, "hole collapsed");
  }
  if (!is_valid(out)) throw Error(ErrorCode::DegenerateResult, "simplified polygon is invalid");
  return out;
}

/// Binary dilation by a (2k+1)-pixel square: the raster analogue of a
/// Minkowski sum with a square of side 2k pixels.
inline Mask dilate_square(const Mask& m, int k) {
  if (k <= 0) return m;
  Mask tmp(m.width, m.height, m.transform, 0), out(m.width, m.height, m.transform, 0);
  for (int r = 0; r < m.height; ++r) {
    for (int c = 0; c < m.width; ++c) {
      if (!m.at(c, r)) continue;
      for (int d = std::max(0, c - k); d <= std::min(m.width - 1, c + k); ++d) tmp.at(d, r) = 1;
    }
  }
  for (int r = 0; r < m.height; ++r) {
    for (int c = 0; c < m.width; ++c) {
      if (!tmp.at(c, r)) continue;
      for (int d = std::max(0, r - k); d <= std::min(m.height - 1, r + k); ++d) out.at(c, d) = 1;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Candidates

struct CandidateShape {
  std::string id;
  Polygon shape;
  double peak_prob = 0;
  double mean_prob = 0;
  double area_m2 = 0;
  std::string source_tile;
};

struct PostprocParams {
  double sigma = 2.0;
  double threshold = 0.5;
  double min_area = 0.0;
  Connectivity connectivity = Connectivity::four;
  /// Optional outward buffer in meters, applied as a square dilation.
  double buffer_m = 0.0;
  /// Douglas-Peucker tolerance in meters for exported shapes; 0 keeps pixel edges.
  double simplify_tolerance = 0.0;
};

/// blur -> threshold -> polygonize -> area filter, with peak/mean of the
/// blurred raster over each component's pixels.
inline std::vector<CandidateShape> extract_candidates(const ProbRaster& r, const PostprocParams& params,
                                                      const std::string& source_tile = "") {
  const ProbRaster blurred = gaussian_blur(r, params.sigma);
  Mask mask = threshold_clip(blurred, params.threshold);
  if (params.buffer_m > 0) {
    mask = dilate_square(mask, static_cast<int>(std::lround(params.buffer_m / r.transform.pixel_w)));
  }
  Components cc;
  std::vector<int> component_of;
  const auto polys = polygonize(mask, r.transform, params.connectivity, &cc, &component_of);

  std::vector<double> peak(static_cast<std::size_t>(cc.count), 0.0), sum(static_cast<std::size_t>(cc.count), 0.0);
  std::vector<std::size_t> count(static_cast<std::size_t>(cc.count), 0);
  for (std::size_t i = 0; i < cc.labels.size(); ++i) {
    const int l = cc.labels[i];
    if (l < 0) continue;
    const float raw = blurred.values[i];
    const double v = (blurred.is_nodata(raw) || std::isnan(raw)) ? 0.0 : raw;
    peak[static_cast<std::size_t>(l)] = std::max(peak[static_cast<std::size_t>(l)], v);
    sum[static_cast<std::size_t>(l)] += v;
    ++count[static_cast<std::size_t>(l)];
  }

  std::vector<CandidateShape> out;
  for (std::size_t i = 0; i < polys.size(); ++i) {
    const double area = polygon_area(polys[i]);
    if (area < params.min_area || area <= 0) continue;
    const auto l = static_cast<std::size_t>(component_of[i]);
    CandidateShape c;
    c.shape = polys[i];
    if (params.simplify_tolerance > 0) {
      try {
        c.shape = simplify(polys[i], params.simplify_tolerance);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::DegenerateResult) throw;
      }
    }
    c.area_m2 = polygon_area(c.shape);
    c.peak_prob = peak[l];
    c.mean_prob = std::min(c.peak_prob, sum[l] / static_cast<double>(count[l]));
    c.source_tile = source_tile;
    c.id = source_tile + "#" + std::to_string(out.size());
    out.push_back(std::move(c));
  }
  return out;
}

inline io::Feature candidate_to_feature(const CandidateShape& c) {
  return {c.shape,
          {{"id", c.id},
           {"peak_prob", c.peak_prob},
           {"mean_prob", c.mean_prob},
           {"area_m2", c.area_m2},
           {"source_tile", c.source_tile}}};
}

inline io::FeatureCollection candidates_to_collection(const std::vector<CandidateShape>& cands,
                                                      std::optional<int> crs_epsg = std::nullopt) {
  io::FeatureCollection fc;
  fc.crs_epsg = crs_epsg;
  for (const auto& c : cands) fc.features.push_back(candidate_to_feature(c));
  return fc;
}

inline CandidateShape candidate_from_feature(const io::Feature& f) {
  CandidateShape c;
  c.shape = f.shape;
  c.id = f.properties.value("id", std::string{});
  c.peak_prob = f.properties.value("peak_prob", 0.0);
  c.mean_prob = f.properties.value("mean_prob", 0.0);
  c.area_m2 = f.properties.value("area_m2", polygon_area(f.shape));
  c.source_tile = f.properties.value("source_tile", std::string{});
  return c;
}

}  // namespace moundline::postproc
