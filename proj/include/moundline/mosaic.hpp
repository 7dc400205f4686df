#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "moundline/error.hpp"
#include "moundline/geo.hpp"
#include "moundline/io/raster_io.hpp"
#include "moundline/model.hpp"
#include "moundline/tiles.hpp"

namespace moundline::mosaic {

inline constexpr float kNoData = -1.0f;

struct RegionSweep {
  BBox extent;
  int tile_side = 512;
  int stride = 256;
  double ppm = 1.0;

  int width_px() const { return static_cast<int>(std::lround(extent.width() * ppm)); }
  int height_px() const { return static_cast<int>(std::lround(extent.height() * ppm)); }
  GeoTransform transform() const { return {extent.min_x, extent.max_y, 1.0 / ppm, 1.0 / ppm}; }
};

struct Window {
  int col = 0;
  int row = 0;
  int side = 0;
  GeoTransform transform;

  Point center() const { return pixel_to_world(transform, side / 2.0, side / 2.0); }
};

/// Window origins along one axis; the last one is clamped inward.
inline std::vector<int> sweep_positions(int length, int side, int stride) {
  std::vector<int> pos;
  if (side >= length) {
    pos.push_back(0);
    return pos;
  }
  const int n = (length - side + stride - 1) / stride + 1;
  for (int i = 0; i < n; ++i) pos.push_back(std::min(i * stride, length - side));
  return pos;
}

inline std::vector<Window> plan_sweep(const RegionSweep& s) {
  if (!(s.ppm > 0)) throw Error(ErrorCode::InvalidArgument, "ppm must be > 0");
  if (s.stride <= 0 || s.stride > s.tile_side) throw Error(ErrorCode::InvalidArgument, "need 0 < stride <= tile_side");
  if (s.extent.empty()) throw Error(ErrorCode::InvalidArgument, "empty extent");
  const int w = s.width_px(), h = s.height_px();
  if (w < s.tile_side || h < s.tile_side) throw Error(ErrorCode::ExtentTooSmall, "extent smaller than one tile");
  const GeoTransform t = s.transform();
  std::vector<Window> out;
  for (int row : sweep_positions(h, s.tile_side, s.stride)) {
    for (int col : sweep_positions(w, s.tile_side, s.stride)) {
      out.push_back({col, row, s.tile_side, t.shifted(col, row)});
    }
  }
  return out;
}

enum class Weighting { uniform, cosine };

/// Per-cell weighted mean of every covering prediction; uncovered cells get
/// kNoData. Sums and weights are accumulated in double, so the result does
/// not depend on the order of `preds`.
inline ProbRaster stitch(const std::vector<ProbRaster>& preds, const BBox& extent, double ppm,
                         Weighting weighting = Weighting::uniform) {
  if (!(ppm > 0)) throw Error(ErrorCode::InvalidArgument, "ppm must be > 0");
  const double px = 1.0 / ppm;
  const int w = static_cast<int>(std::lround(extent.width() * ppm));
  const int h = static_cast<int>(std::lround(extent.height() * ppm));
  const GeoTransform t{extent.min_x, extent.max_y, px, px};
  std::vector<double> sum(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), 0.0);
  std::vector<double> weight(sum.size(), 0.0);

  for (const auto& p : preds) {
    if (std::abs(p.transform.pixel_w - px) > 1e-9 * px || std::abs(p.transform.pixel_h - px) > 1e-9 * px) {
      throw Error(ErrorCode::PixelSizeMismatch, "prediction pixel size differs from the region grid");
    }
    const double fc = (p.transform.origin_x - t.origin_x) / px;
    const double fr = (t.origin_y - p.transform.origin_y) / px;
    const int oc = static_cast<int>(std::lround(fc));
    const int orow = static_cast<int>(std::lround(fr));
    if (std::abs(fc - oc) > 1e-6 || std::abs(fr - orow) > 1e-6) {
      throw Error(ErrorCode::PixelSizeMismatch, "prediction is not aligned to the region grid");
    }
    for (int r = 0; r < p.height; ++r) {
      const int gr = orow + r;
      if (gr < 0 || gr >= h) continue;
      const double wr = weighting == Weighting::cosine ? std::sin(3.141592653589793 * (r + 0.5) / p.height) : 1.0;
      for (int c = 0; c < p.width; ++c) {
        const int gc = oc + c;
        if (gc < 0 || gc >= w) continue;
        const float v = p.at(c, r);
        if (p.is_nodata(v) || std::isnan(v)) continue;
        const double wc = weighting == Weighting::cosine ? std::sin(3.141592653589793 * (c + 0.5) / p.width) : 1.0;
        const std::size_t i = static_cast<std::size_t>(gr) * w + gc;
        sum[i] += wr * wc * v;
        weight[i] += wr * wc;
      }
    }
  }

  ProbRaster out(w, h, t, kNoData);
  out.nodata = kNoData;
  for (std::size_t i = 0; i < sum.size(); ++i) {
    if (weight[i] > 0) out.values[i] = static_cast<float>(sum[i] / weight[i]);
  }
  return out;
}

/// Predicts every sweep window (zero-padded where imagery ends) and stitches.
inline ProbRaster sweep_predict(const RgbImage& imagery, const RegionSweep& sweep, const model::Segmenter& seg,
                                Weighting weighting = Weighting::uniform) {
  std::vector<ProbRaster> preds;
  for (const auto& win : plan_sweep(sweep)) {
    const RgbImage img =
        tiles::extract_window(imagery, win.center(), win.side / sweep.ppm, sweep.ppm, tiles::BoundsPolicy::zero_pad);
    ProbRaster p = seg.predict(img, "w" + std::to_string(win.col) + "_" + std::to_string(win.row));
    p.transform = win.transform;
    preds.push_back(std::move(p));
  }
  return stitch(preds, sweep.extent, sweep.ppm, weighting);
}

// ---------------------------------------------------------------------------
// Rendering

enum class Ramp { gray, heat };

inline Ramp ramp_from_string(const std::string& s) {
  if (s == "gray") return Ramp::gray;
  if (s == "heat") return Ramp::heat;
  throw Error(ErrorCode::Parse, "unknown ramp '" + s + "'");
}

/// 256-entry black -> red -> yellow -> white ramp.
inline const std::array<std::array<std::uint8_t, 3>, 256>& heat_ramp() {
  static const auto table = [] {
    std::array<std::array<std::uint8_t, 3>, 256> t{};
    for (int i = 0; i < 256; ++i) {
      const double x = i / 255.0;
      auto chan = [x](double lo) {
        return static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(3.0 * x - lo, 0.0, 1.0)));
      };
      t[static_cast<std::size_t>(i)] = {chan(0.0), chan(1.0), chan(2.0)};
    }
    return t;
  }();
  return table;
}

inline std::uint8_t ramp_index(double p) { return static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(p, 0.0, 1.0))); }

/// RGBA pixels, row-major; nodata is fully transparent.
inline std::vector<std::uint8_t> render_heatmap(const ProbRaster& r, Ramp ramp) {
  std::vector<std::uint8_t> rgba(r.values.size() * 4, 0);
  for (std::size_t i = 0; i < r.values.size(); ++i) {
    const float v = r.values[i];
    if (r.is_nodata(v) || std::isnan(v)) continue;
    const std::uint8_t k = ramp_index(v);
    std::uint8_t* px = rgba.data() + 4 * i;
    if (ramp == Ramp::gray) {
      px[0] = px[1] = px[2] = k;
    } else {
      const auto& c = heat_ramp()[k];
      px[0] = c[0];
      px[1] = c[1];
      px[2] = c[2];
    }
    px[3] = 255;
  }
  return rgba;
}

inline void write_heatmap(const std::filesystem::path& png, const ProbRaster& r, Ramp ramp) {
  io::write_rgba_png(png, r.width, r.height, render_heatmap(r, ramp));
  io::write_world_file(png, r.transform);
}

}  // namespace moundline::mosaic
