#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "moundline/error.hpp"
#include "moundline/geo.hpp"

namespace moundline::io {

using json = nlohmann::json;

struct Feature {
  Polygon shape;
  json properties = json::object();
};

struct FeatureCollection {
  std::optional<int> crs_epsg;
  std::vector<Feature> features;
};

inline json ring_to_json(const Ring& r) {
  json out = json::array();
  for (const auto& p : r) out.push_back({p.x, p.y});
  return out;
}

inline json polygon_coordinates(const Polygon& p) {
  const Polygon o = oriented(p);
  json rings = json::array();
  rings.push_back(ring_to_json(o.exterior));
  for (const auto& h : o.holes) rings.push_back(ring_to_json(h));
  return rings;
}

inline json polygon_to_geometry(const Polygon& p) {
  return {{"type", "Polygon"}, {"coordinates", polygon_coordinates(p)}};
}

inline Ring ring_from_json(const json& j) {
  Ring r;
  for (const auto& c : j) {
    if (!c.is_array() || c.size() < 2) throw Error(ErrorCode::Parse, "bad coordinate");
    r.push_back({c[0].get<double>(), c[1].get<double>()});
  }
  return r;
}

inline Polygon polygon_from_coordinates(const json& rings) {
  if (!rings.is_array() || rings.empty()) throw Error(ErrorCode::Parse, "polygon without rings");
  Polygon p;
  p.exterior = ring_from_json(rings[0]);
  for (std::size_t i = 1; i < rings.size(); ++i) p.holes.push_back(ring_from_json(rings[i]));
  check_polygon(p);
  return p;
}

/// Polygon geometry, or the largest part of a MultiPolygon.
inline Polygon polygon_from_geometry(const json& g) {
  const auto type = g.at("type").get<std::string>();
  if (type == "Polygon") return polygon_from_coordinates(g.at("coordinates"));
  if (type == "MultiPolygon") {
    std::optional<Polygon> best;
    double best_area = -1;
    for (const auto& part : g.at("coordinates")) {
      Polygon p = polygon_from_coordinates(part);
      const double a = polygon_area(p);
      if (a > best_area) {
        best_area = a;
        best = std::move(p);
      }
    }
    if (!best) throw Error(ErrorCode::Parse, "empty MultiPolygon");
    return *best;
  }
  throw Error(ErrorCode::Parse, "unsupported geometry type " + type);
}

inline json to_json(const FeatureCollection& fc) {
  json out = {{"type", "FeatureCollection"}};
  if (fc.crs_epsg) out["crs_epsg"] = *fc.crs_epsg;
  json feats = json::array();
  for (const auto& f : fc.features) {
    feats.push_back({{"type", "Feature"}, {"properties", f.properties}, {"geometry", polygon_to_geometry(f.shape)}});
  }
  out["features"] = std::move(feats);
  return out;
}

inline FeatureCollection feature_collection_from_json(const json& j) {
  if (j.value("type", "") != "FeatureCollection") throw Error(ErrorCode::Parse, "not a FeatureCollection");
  FeatureCollection fc;
  if (j.contains("crs_epsg") && j["crs_epsg"].is_number_integer()) fc.crs_epsg = j["crs_epsg"].get<int>();
  for (const auto& f : j.at("features")) {
    Feature feat;
    feat.shape = polygon_from_geometry(f.at("geometry"));
    if (f.contains("properties") && f["properties"].is_object()) feat.properties = f["properties"];
    fc.features.push_back(std::move(feat));
  }
  return fc;
}

inline json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Parse, path.string() + ": " + e.what());
  }
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << text;
}

inline void write_json(const std::filesystem::path& path, const json& j, int indent = 1) {
  write_text(path, j.dump(indent) + "\n");
}

inline FeatureCollection read_geojson(const std::filesystem::path& path) {
  return feature_collection_from_json(read_json(path));
}

inline void write_geojson(const std::filesystem::path& path, const FeatureCollection& fc) {
  write_json(path, to_json(fc));
}

/// Reads a JSON-lines file; blank lines are skipped.
inline std::vector<json> read_jsonl(const std::filesystem::path& path) {
  std::vector<json> out;
  std::ifstream in(path);
  if (!in) return out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::Parse, path.string() + ": " + e.what());
    }
  }
  return out;
}

inline void write_jsonl(const std::filesystem::path& path, const std::vector<json>& rows) {
  std::ostringstream os;
  for (const auto& r : rows) os << r.dump() << "\n";
  write_text(path, os.str());
}

}  // namespace moundline::io
