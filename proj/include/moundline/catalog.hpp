#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "moundline/error.hpp"
#include "moundline/geo.hpp"
#include "moundline/io/geojson.hpp"
#include "moundline/rng.hpp"

namespace moundline::catalog {

enum class Visibility { visible, not_visible, unknown };

inline std::string to_string(Visibility v) {
  switch (v) {
    case Visibility::visible: return "visible";
    case Visibility::not_visible: return "not_visible";
    case Visibility::unknown: break;
  }
  return "unknown";
}

inline Visibility visibility_from_string(const std::string& s) {
  if (s == "visible") return Visibility::visible;
  if (s == "not_visible") return Visibility::not_visible;
  return Visibility::unknown;
}

struct SiteRecord {
  std::string id;
  Polygon shape;
  double area_m2 = 0;
  bool destroyed = false;
  Visibility visibility = Visibility::unknown;
  std::optional<std::string> category;
  std::optional<std::string> preservation;
};

inline SiteRecord make_site(std::string id, Polygon shape, bool destroyed = false,
                            Visibility visibility = Visibility::unknown) {
  SiteRecord s;
  s.id = std::move(id);
  s.area_m2 = polygon_area(shape);
  s.shape = std::move(shape);
  s.destroyed = destroyed;
  s.visibility = visibility;
  return s;
}

enum class NegativeKind { urban, agriculture, flooded, rocky };

struct NegativeRegion {
  std::string id;
  Polygon shape;
  NegativeKind kind = NegativeKind::urban;
};

/// Declaration order is precedence order: a site that fails several filters
/// records the first one.
enum class RemovalReason { TopK, WindowOverflow, TooSmall, Destroyed };

inline std::string to_string(RemovalReason r) {
  switch (r) {
    case RemovalReason::TopK: return "TopK";
    case RemovalReason::WindowOverflow: return "WindowOverflow";
    case RemovalReason::TooSmall: return "TooSmall";
    case RemovalReason::Destroyed: return "Destroyed";
  }
  return "?";
}

struct Removal {
  SiteRecord site;
  RemovalReason reason;
  /// Every filter the site fails, in precedence order.
  std::vector<RemovalReason> all_reasons;
};

struct CurationParams {
  std::size_t top_k = 200;
  double min_area = 1000.0;
  /// Side of the square input window in meters; <= 0 disables the overflow filter.
  double window_side = 1000.0;
};

struct CurationResult {
  std::vector<SiteRecord> kept;
  std::vector<Removal> removed;
};

inline CurationResult curate(const std::vector<SiteRecord>& sites, const CurationParams& params) {
  if (params.min_area < 0) throw Error(ErrorCode::InvalidArgument, "min_area must be >= 0");

  // largest first; ties broken by id so the cut is deterministic
  std::vector<std::size_t> order(sites.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (sites[a].area_m2 != sites[b].area_m2) return sites[a].area_m2 > sites[b].area_m2;
    return sites[a].id < sites[b].id;
  });
  std::vector<bool> in_top(sites.size(), false);
  for (std::size_t i = 0; i < std::min(params.top_k, order.size()); ++i) in_top[order[i]] = true;

  CurationResult out;
  for (std::size_t i = 0; i < sites.size(); ++i) {
    const auto& s = sites[i];
    std::vector<RemovalReason> reasons;
    if (in_top[i]) reasons.push_back(RemovalReason::TopK);
    if (params.window_side > 0) {
      const BBox b = bbox(s.shape);
      if (std::max(b.width(), b.height()) > params.window_side) reasons.push_back(RemovalReason::WindowOverflow);
    }
    if (s.area_m2 < params.min_area) reasons.push_back(RemovalReason::TooSmall);
    if (s.destroyed) reasons.push_back(RemovalReason::Destroyed);
    if (reasons.empty()) {
      out.kept.push_back(s);
    } else {
      out.removed.push_back({s, reasons.front(), std::move(reasons)});
    }
  }
  return out;
}

inline std::vector<SiteRecord> select_by_labels(const std::vector<SiteRecord>& sites,
                                                const std::set<std::string>& categories,
                                                const std::set<std::string>& preservation) {
  std::vector<SiteRecord> out;
  for (const auto& s : sites) {
    if (s.category && s.preservation && categories.count(*s.category) && preservation.count(*s.preservation)) {
      out.push_back(s);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Splits

enum class Split { train, val, test };

inline std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

inline Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw Error(ErrorCode::Parse, "unknown split '" + s + "'");
}

struct SplitAssignment {
  std::string id;
  Split split;

  friend bool operator==(const SplitAssignment&, const SplitAssignment&) = default;
};

namespace detail {

inline void split_stratum(const std::vector<std::string>& ids, double test_frac, double val_frac,
                          std::uint64_t seed, std::vector<SplitAssignment>& out) {
  if (ids.empty()) return;
  if (ids.size() < 3) throw Error(ErrorCode::StratumTooSmall, "stratum has fewer than 3 members");
  const auto n = ids.size();
  const auto n_test = static_cast<std::size_t>(std::floor(test_frac * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::floor(val_frac * static_cast<double>(n - n_test)));
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(perm.begin(), perm.end());
  std::vector<Split> split(n, Split::train);
  for (std::size_t i = 0; i < n_test; ++i) split[perm[i]] = Split::test;
  for (std::size_t i = n_test; i < n_test + n_val; ++i) split[perm[i]] = Split::val;
  for (std::size_t i = 0; i < n; ++i) out.push_back({ids[i], split[i]});
}

}  // namespace detail

/// Sites and negatives are split as independent strata. Output keeps input
/// order (sites, then negatives).
inline std::vector<SplitAssignment> make_splits(const std::vector<std::string>& curated_ids,
                                                const std::vector<std::string>& negative_ids, double test_frac,
                                                double val_frac_of_train, std::uint64_t seed) {
  if (!(test_frac > 0 && test_frac < 1)) throw Error(ErrorCode::InvalidArgument, "test_frac must be in (0,1)");
  if (!(val_frac_of_train > 0 && val_frac_of_train < 1)) {
    throw Error(ErrorCode::InvalidArgument, "val_frac_of_train must be in (0,1)");
  }
  std::vector<SplitAssignment> out;
  detail::split_stratum(curated_ids, test_frac, val_frac_of_train, mix_seed(seed, 1), out);
  detail::split_stratum(negative_ids, test_frac, val_frac_of_train, mix_seed(seed, 2), out);
  return out;
}

// ---------------------------------------------------------------------------
// Reports and file formats

struct CurationReportOptions {
  std::size_t negatives = 0;
  /// Image total claimed by an external source, checked against kept + negatives.
  std::optional<std::size_t> expected_total_images;
};

inline io::json curation_report(const CurationResult& r, const CurationReportOptions& opt = {}) {
  io::json kept = io::json::array();
  for (const auto& s : r.kept) kept.push_back(s.id);
  io::json removed = io::json::array();
  std::map<std::string, std::size_t> first_counts, any_counts;
  for (auto reason : {RemovalReason::TopK, RemovalReason::WindowOverflow, RemovalReason::TooSmall,
                      RemovalReason::Destroyed}) {
    first_counts[to_string(reason)] = 0;
    any_counts[to_string(reason)] = 0;
  }
  for (const auto& rm : r.removed) {
    removed.push_back({{"id", rm.site.id}, {"reason", to_string(rm.reason)}});
    ++first_counts[to_string(rm.reason)];
    for (auto reason : rm.all_reasons) ++any_counts[to_string(reason)];
  }
  const std::size_t total_images = r.kept.size() + opt.negatives;
  io::json report = {
      {"kept", kept},
      {"removed", removed},
      {"totals",
       {{"input_sites", r.kept.size() + r.removed.size()},
        {"kept_sites", r.kept.size()},
        {"removed_sites", r.removed.size()},
        {"removed_by_first_reason", first_counts},
        {"removed_by_any_reason", any_counts},
        {"negatives", opt.negatives},
        {"total_images", total_images}}},
  };
  if (opt.expected_total_images) {
    const auto expected = *opt.expected_total_images;
    report["discrepancy"] = {
        {"expected_total_images", expected},
        {"computed_total_images", total_images},
        {"difference", static_cast<long long>(total_images) - static_cast<long long>(expected)},
        {"flagged", expected != total_images},
    };
  }
  return report;
}

inline io::json splits_jsonl_row(const SplitAssignment& a) { return {{"id", a.id}, {"split", to_string(a.split)}}; }

inline SiteRecord site_from_feature(const io::Feature& f) {
  const auto& p = f.properties;
  if (!p.contains("id")) throw Error(ErrorCode::Parse, "site feature without id");
  SiteRecord s = make_site(p["id"].is_string() ? p["id"].get<std::string>() : p["id"].dump(), f.shape);
  if (p.contains("destroyed") && p["destroyed"].is_boolean()) s.destroyed = p["destroyed"].get<bool>();
  if (p.contains("visibility") && p["visibility"].is_string()) {
    s.visibility = visibility_from_string(p["visibility"].get<std::string>());
  }
  if (p.contains("category") && p["category"].is_string()) s.category = p["category"].get<std::string>();
  if (p.contains("preservation") && p["preservation"].is_string()) {
    s.preservation = p["preservation"].get<std::string>();
  }
  return s;
}

inline io::Feature site_to_feature(const SiteRecord& s) {
  io::Feature f{s.shape, {{"id", s.id}, {"destroyed", s.destroyed}, {"visibility", to_string(s.visibility)}}};
  if (s.category) f.properties["category"] = *s.category;
  if (s.preservation) f.properties["preservation"] = *s.preservation;
  return f;
}

inline std::vector<SiteRecord> read_sites(const std::filesystem::path& path) {
  std::vector<SiteRecord> out;
  for (const auto& f : io::read_geojson(path).features) out.push_back(site_from_feature(f));
  return out;
}

inline NegativeKind negative_kind_from_string(const std::string& s) {
  if (s == "urban") return NegativeKind::urban;
  if (s == "agriculture") return NegativeKind::agriculture;
  if (s == "flooded") return NegativeKind::flooded;
  if (s == "rocky") return NegativeKind::rocky;
  throw Error(ErrorCode::Parse, "unknown negative kind '" + s + "'");
}

inline std::vector<NegativeRegion> read_negatives(const std::filesystem::path& path) {
  std::vector<NegativeRegion> out;
  for (const auto& f : io::read_geojson(path).features) {
    NegativeRegion n;
    n.id = f.properties.value("id", std::string{});
    if (n.id.empty()) throw Error(ErrorCode::Parse, "negative feature without id");
    n.shape = f.shape;
    n.kind = negative_kind_from_string(f.properties.value("kind", std::string{"urban"}));
    out.push_back(std::move(n));
  }
  return out;
}

}  // namespace moundline::catalog
