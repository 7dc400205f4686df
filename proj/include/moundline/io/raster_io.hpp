#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <png.h>

#include "moundline/geo.hpp"
#include "moundline/io/geojson.hpp"

namespace moundline::io {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// World files: pixel_w, 0, 0, -pixel_h, then the CENTER of pixel (0,0).

inline std::string world_file_text(const GeoTransform& t) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << t.pixel_w << "\n0\n0\n" << -t.pixel_h << "\n"
     << t.origin_x + t.pixel_w / 2 << "\n" << t.origin_y - t.pixel_h / 2 << "\n";
  return os.str();
}

inline GeoTransform parse_world_file(const std::string& text) {
  std::istringstream is(text);
  std::array<double, 6> v{};
  for (auto& x : v) {
    if (!(is >> x)) throw Error(ErrorCode::Parse, "world file needs 6 numbers");
  }
  if (v[1] != 0 || v[2] != 0) throw Error(ErrorCode::Parse, "rotated world files are not supported");
  GeoTransform t{v[4] - v[0] / 2, v[5] - v[3] / 2, v[0], -v[3]};
  t.validate();
  return t;
}

/// Sidecar path: foo.png -> foo.pgw
inline fs::path world_file_path(const fs::path& image) {
  auto p = image;
  return p.replace_extension(".pgw");
}

inline void write_world_file(const fs::path& image, const GeoTransform& t) {
  write_text(world_file_path(image), world_file_text(t));
}

inline GeoTransform read_world_file(const fs::path& image) {
  std::ifstream in(world_file_path(image));
  if (!in) throw Error(ErrorCode::Io, "missing world file for " + image.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_world_file(ss.str());
}

// ---------------------------------------------------------------------------
// PNG via libpng's simplified API.

namespace detail {

inline void write_png(const fs::path& path, int w, int h, png_uint_32 format, const void* data) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(w);
  image.height = static_cast<png_uint_32>(h);
  image.format = format;
  if (!png_image_write_to_file(&image, path.c_str(), 0, data, 0, nullptr)) {
    throw Error(ErrorCode::Io, "png write failed for " + path.string() + ": " + image.message);
  }
}

inline std::vector<std::uint8_t> read_png(const fs::path& path, png_uint_32 format, int& w, int& h) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw Error(ErrorCode::Io, "png read failed for " + path.string() + ": " + image.message);
  }
  image.format = format;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&image);
    throw Error(ErrorCode::Io, "png decode failed for " + path.string() + ": " + image.message);
  }
  w = static_cast<int>(image.width);
  h = static_cast<int>(image.height);
  return buf;
}

}  // namespace detail

inline void write_rgb_png(const fs::path& path, const RgbImage& img) {
  static_assert(sizeof(Rgb) == 3);
  detail::write_png(path, img.width, img.height, PNG_FORMAT_RGB, img.values.data());
}

inline void write_gray_png(const fs::path& path, const Raster<std::uint8_t>& img) {
  detail::write_png(path, img.width, img.height, PNG_FORMAT_GRAY, img.values.data());
}

inline void write_rgba_png(const fs::path& path, int w, int h, const std::vector<std::uint8_t>& rgba) {
  detail::write_png(path, w, h, PNG_FORMAT_RGBA, rgba.data());
}

/// Reads an RGB PNG and its world file (identity transform if absent).
inline RgbImage read_rgb_png(const fs::path& path) {
  int w = 0, h = 0;
  auto buf = detail::read_png(path, PNG_FORMAT_RGB, w, h);
  GeoTransform t;
  if (fs::exists(world_file_path(path))) t = read_world_file(path);
  RgbImage img(w, h, t);
  std::memcpy(img.values.data(), buf.data(), buf.size());
  return img;
}

inline Raster<std::uint8_t> read_gray_png(const fs::path& path) {
  int w = 0, h = 0;
  auto buf = detail::read_png(path, PNG_FORMAT_GRAY, w, h);
  GeoTransform t;
  if (fs::exists(world_file_path(path))) t = read_world_file(path);
  Raster<std::uint8_t> img(w, h, t);
  img.values = std::move(buf);
  return img;
}

/// Binary masks are stored as 0/255 gray.
inline void write_mask_png(const fs::path& path, const Mask& m) {
  Raster<std::uint8_t> g = m;
  for (auto& v : g.values) v = v ? 255 : 0;
  write_gray_png(path, g);
  write_world_file(path, m.transform);
}

inline Mask read_mask_png(const fs::path& path) {
  Mask m = read_gray_png(path);
  for (auto& v : m.values) v = v >= 128 ? 1 : 0;
  return m;
}

// ---------------------------------------------------------------------------
// Probability rasters: little-endian float32 row-major + JSON sidecar.

inline json transform_to_json(const GeoTransform& t) {
  return {{"origin_x", t.origin_x}, {"origin_y", t.origin_y}, {"pixel_w", t.pixel_w}, {"pixel_h", t.pixel_h}};
}

inline GeoTransform transform_from_json(const json& j) {
  GeoTransform t{j.at("origin_x").get<double>(), j.at("origin_y").get<double>(), j.at("pixel_w").get<double>(),
                 j.at("pixel_h").get<double>()};
  t.validate();
  return t;
}

inline json prob_sidecar(const ProbRaster& r) {
  return {{"width", r.width},
          {"height", r.height},
          {"transform", transform_to_json(r.transform)},
          {"nodata", r.nodata ? json(*r.nodata) : json(nullptr)}};
}

/// Writes `<base>.f32` and `<base>.json`.
inline void write_prob_raster(const fs::path& base, const ProbRaster& r) {
  fs::path data = base;
  data += ".f32";
  fs::path side = base;
  side += ".json";
  if (data.has_parent_path()) fs::create_directories(data.parent_path());
  std::ofstream out(data, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + data.string());
  std::vector<std::uint32_t> words(r.values.size());
  std::memcpy(words.data(), r.values.data(), words.size() * 4);
  if constexpr (std::endian::native == std::endian::big) {
    for (auto& w : words) w = __builtin_bswap32(w);
  }
  out.write(reinterpret_cast<const char*>(words.data()), static_cast<std::streamsize>(words.size() * 4));
  write_json(side, prob_sidecar(r));
}

inline ProbRaster read_prob_raster(const fs::path& base) {
  fs::path data = base;
  data += ".f32";
  fs::path side = base;
  side += ".json";
  if (!fs::exists(data) || !fs::exists(side)) {
    throw Error(ErrorCode::MissingExternalRaster, "no probability raster at " + base.string());
  }
  const json meta = read_json(side);
  ProbRaster r(meta.at("width").get<int>(), meta.at("height").get<int>(), transform_from_json(meta.at("transform")));
  if (!meta["nodata"].is_null()) r.nodata = meta["nodata"].get<float>();
  std::ifstream in(data, std::ios::binary);
  std::vector<std::uint32_t> words(r.values.size());
  in.read(reinterpret_cast<char*>(words.data()), static_cast<std::streamsize>(words.size() * 4));
  if (static_cast<std::size_t>(in.gcount()) != words.size() * 4) {
    throw Error(ErrorCode::DimensionMismatch, data.string() + " is shorter than its sidecar declares");
  }
  if constexpr (std::endian::native == std::endian::big) {
    for (auto& w : words) w = __builtin_bswap32(w);
  }
  std::memcpy(r.values.data(), words.data(), words.size() * 4);
  return r;
}

/// Optional 8-bit render, value = round(255 p); nodata renders as 0.
inline void write_prob_png(const fs::path& path, const ProbRaster& r) {
  Raster<std::uint8_t> g(r.width, r.height, r.transform);
  for (std::size_t i = 0; i < r.values.size(); ++i) {
    const float v = r.values[i];
    g.values[i] = r.is_nodata(v) ? 0 : static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(v, 0.0f, 1.0f)));
  }
  write_gray_png(path, g);
  write_world_file(path, r.transform);
}

}  // namespace moundline::io
