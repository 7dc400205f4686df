#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "moundline/catalog.hpp"
#include "moundline/error.hpp"
#include "moundline/io/geojson.hpp"
#include "moundline/model.hpp"
#include "moundline/postproc.hpp"
#include "moundline/tiles.hpp"

namespace moundline {

struct TileParams {
  double side_m = 1000.0;
  double ppm = 1.024;
  bool crop = true;  // random crop to half the window side
  bool downscale = true;
  tiles::AugBounds aug;
};

struct SweepParams {
  int tile = 512;
  int stride = 256;
};

struct PostprocConfig {
  postproc::PostprocParams params;
  double min_intersection = 0.0;
};

/// Every knob of one pipeline run. Serialized as the CLI config file.
struct RunConfig {
  std::string id;
  std::map<std::string, std::string> inputs;  // role -> path
  catalog::CurationParams curation;
  TileParams tiles;
  model::SegmenterSpec segmenter;
  PostprocConfig postproc;
  SweepParams sweep;
  std::uint64_t seed = 0;

  /// All referenced paths must exist.
  void validate_inputs() const {
    for (const auto& [role, path] : inputs) {
      if (!std::filesystem::exists(path)) throw Error(ErrorCode::InvalidArgument, "input '" + role + "' missing: " + path);
    }
  }
};

inline io::json postproc_to_json(const PostprocConfig& p) {
  return {{"sigma", p.params.sigma},
          {"threshold", p.params.threshold},
          {"min_area", p.params.min_area},
          {"min_intersection", p.min_intersection},
          {"connectivity", static_cast<int>(p.params.connectivity)},
          {"buffer_m", p.params.buffer_m},
          {"simplify_tolerance", p.params.simplify_tolerance}};
}

inline PostprocConfig postproc_from_json(const io::json& j) {
  PostprocConfig p;
  p.params.sigma = j.value("sigma", p.params.sigma);
  p.params.threshold = j.value("threshold", p.params.threshold);
  p.params.min_area = j.value("min_area", p.params.min_area);
  p.min_intersection = j.value("min_intersection", p.min_intersection);
  p.params.connectivity = j.value("connectivity", 4) == 8 ? postproc::Connectivity::eight : postproc::Connectivity::four;
  p.params.buffer_m = j.value("buffer_m", p.params.buffer_m);
  p.params.simplify_tolerance = j.value("simplify_tolerance", p.params.simplify_tolerance);
  return p;
}

inline io::json run_config_to_json(const RunConfig& c) {
  return {{"v", 1},
          {"id", c.id},
          {"inputs", c.inputs},
          {"curation",
           {{"top_k", c.curation.top_k}, {"min_area", c.curation.min_area}, {"window_side", c.curation.window_side}}},
          {"tiles",
           {{"side_m", c.tiles.side_m},
            {"ppm", c.tiles.ppm},
            {"crop", c.tiles.crop},
            {"downscale", c.tiles.downscale},
            {"aug", {{"brightness", c.tiles.aug.brightness}, {"contrast", c.tiles.aug.contrast}}}}},
          {"segmenter", model::spec_to_json(c.segmenter)},
          {"postproc", postproc_to_json(c.postproc)},
          {"sweep", {{"tile", c.sweep.tile}, {"stride", c.sweep.stride}}},
          {"seed", c.seed}};
}

inline RunConfig run_config_from_json(const io::json& j) {
  RunConfig c;
  c.id = j.value("id", std::string{});
  if (j.contains("inputs")) c.inputs = j["inputs"].get<std::map<std::string, std::string>>();
  if (j.contains("curation")) {
    const auto& k = j["curation"];
    c.curation.top_k = k.value("top_k", c.curation.top_k);
    c.curation.min_area = k.value("min_area", c.curation.min_area);
    c.curation.window_side = k.value("window_side", c.curation.window_side);
  }
  if (j.contains("tiles")) {
    const auto& t = j["tiles"];
    c.tiles.side_m = t.value("side_m", c.tiles.side_m);
    c.tiles.ppm = t.value("ppm", c.tiles.ppm);
    c.tiles.crop = t.value("crop", c.tiles.crop);
    c.tiles.downscale = t.value("downscale", c.tiles.downscale);
    if (t.contains("aug")) {
      c.tiles.aug.brightness = t["aug"].value("brightness", c.tiles.aug.brightness);
      c.tiles.aug.contrast = t["aug"].value("contrast", c.tiles.aug.contrast);
    }
  }
  if (j.contains("segmenter")) c.segmenter = model::spec_from_json(j["segmenter"]);
  if (j.contains("postproc")) c.postproc = postproc_from_json(j["postproc"]);
  if (j.contains("sweep")) {
    c.sweep.tile = j["sweep"].value("tile", c.sweep.tile);
    c.sweep.stride = j["sweep"].value("stride", c.sweep.stride);
  }
  c.seed = j.value("seed", c.seed);
  return c;
}

}  // namespace moundline
