#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "moundline/config.hpp"
#include "moundline/error.hpp"
#include "moundline/evals.hpp"
#include "moundline/geo.hpp"
#include "moundline/io/geojson.hpp"
#include "moundline/io/raster_io.hpp"
#include "moundline/mosaic.hpp"
#include "moundline/postproc.hpp"

namespace moundline::service {

namespace fs = std::filesystem;
using io::json;

/// Thrown by request handling; carries the HTTP status to answer with.
class HttpError : public std::runtime_error {
 public:
  HttpError(int status, const std::string& msg) : std::runtime_error(msg), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

inline fs::path data_root() {
  const char* env = std::getenv("MOUNDLINE_DATA_DIR");
  return env && *env ? fs::path(env) : fs::path("moundline-data");
}

inline bool valid_run_id(const std::string& id) {
  if (id.empty() || id.size() > 128 || id == "." || id == "..") return false;
  return std::all_of(id.begin(), id.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
  });
}

/// Thresholds are quantized to 0.001 so a candidate id names one exact cutoff.
inline double quantize_threshold(double t) { return std::round(t * 1000.0) / 1000.0; }

inline std::string threshold_key(double t) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%.3f", quantize_threshold(t));
  return buf;
}

inline std::string candidate_id(const std::string& image, double t, std::size_t k) {
  return image + "@" + threshold_key(t) + "#" + std::to_string(k);
}

struct CandidateRef {
  std::string image;
  double threshold = 0;
  std::size_t index = 0;
};

inline std::optional<CandidateRef> parse_candidate_id(const std::string& id) {
  const auto hash = id.rfind('#');
  if (hash == std::string::npos) return std::nullopt;
  const auto at = id.rfind('@', hash);
  if (at == std::string::npos || at == 0) return std::nullopt;
  const std::string tkey = id.substr(at + 1, hash - at - 1);
  const std::string kstr = id.substr(hash + 1);
  if (kstr.empty() || !std::all_of(kstr.begin(), kstr.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    return std::nullopt;
  }
  char* end = nullptr;
  const double t = std::strtod(tkey.c_str(), &end);
  if (end != tkey.c_str() + tkey.size() || !(t >= 0 && t <= 1) || threshold_key(t) != tkey) return std::nullopt;
  return CandidateRef{id.substr(0, at), t, static_cast<std::size_t>(std::stoull(kstr))};
}

/// A catalogued site known to the run. image_id is empty for sites that are
/// not the ground truth of any evaluated image.
struct KnownSite {
  std::string id;
  Polygon shape;
  std::string image_id;
};

inline std::vector<KnownSite> read_known_sites(const fs::path& path) {
  std::vector<KnownSite> out;
  for (const auto& f : io::read_geojson(path).features) {
    KnownSite s;
    const auto& p = f.properties;
    if (!p.contains("id")) throw Error(ErrorCode::Parse, "site feature without id");
    s.id = p["id"].is_string() ? p["id"].get<std::string>() : p["id"].dump();
    s.shape = f.shape;
    if (p.contains("image_id") && p["image_id"].is_string()) s.image_id = p["image_id"].get<std::string>();
    out.push_back(std::move(s));
  }
  return out;
}

inline void write_known_sites(const fs::path& path, const std::vector<KnownSite>& sites) {
  io::FeatureCollection fc;
  for (const auto& s : sites) {
    fc.features.push_back(
        {s.shape, {{"id", s.id}, {"image_id", s.image_id.empty() ? json(nullptr) : json(s.image_id)}}});
  }
  io::write_geojson(path, fc);
}

/// Candidates of one image at threshold t, with ids in the run's id scheme.
inline std::vector<postproc::CandidateShape> run_candidates(const ProbRaster& r, const std::string& image,
                                                            const PostprocConfig& pp, double t) {
  postproc::PostprocParams params = pp.params;
  params.threshold = quantize_threshold(t);
  auto cands = postproc::extract_candidates(r, params, image);
  for (std::size_t k = 0; k < cands.size(); ++k) cands[k].id = candidate_id(image, t, k);
  return cands;
}

inline std::vector<evals::DetectionOutcome> run_outcomes(const std::map<std::string, ProbRaster>& probs,
                                                         const std::vector<KnownSite>& sites,
                                                         const PostprocConfig& pp) {
  std::vector<evals::DetectionImage> images;
  for (const auto& [image, r] : probs) {
    evals::DetectionImage di;
    di.image_id = image;
    for (const auto& s : sites) {
      if (s.image_id == image) di.gt_sites.push_back({s.id, s.shape});
    }
    di.candidates = run_candidates(r, image, pp, pp.params.threshold);
    images.push_back(std::move(di));
  }
  return evals::detect_outcomes(images, pp.min_intersection);
}

// ---------------------------------------------------------------------------
// Review records and the ledger derived from them

enum class Verdict { accept, reject, mark_not_visible, relabel };

inline std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::accept: return "accept";
    case Verdict::reject: return "reject";
    case Verdict::mark_not_visible: return "mark_not_visible";
    case Verdict::relabel: return "relabel";
  }
  return "?";
}

inline std::optional<Verdict> verdict_from_string(const std::string& s) {
  if (s == "accept") return Verdict::accept;
  if (s == "reject") return Verdict::reject;
  if (s == "mark_not_visible") return Verdict::mark_not_visible;
  if (s == "relabel") return Verdict::relabel;
  return std::nullopt;
}

/// One persisted review action, enriched by the server with the image it
/// belongs to and (for candidates) the polygon the reviewer saw.
struct ReviewRecord {
  long long seq = 0;
  bool is_site = false;
  std::string target_id;
  std::string image_id;
  Verdict verdict = Verdict::accept;
  std::string reviewer;
  std::string timestamp;
  std::optional<Polygon> new_polygon;
  std::optional<Polygon> candidate_shape;

  std::tuple<std::string, std::string, std::string> key() const { return {target_id, reviewer, timestamp}; }
};

inline json review_to_json(const ReviewRecord& r) {
  auto geom = [](const std::optional<Polygon>& p) { return p ? io::polygon_to_geometry(*p) : json(nullptr); };
  return {{"v", 1},
          {"seq", r.seq},
          {"target_kind", r.is_site ? "site" : "candidate"},
          {r.is_site ? "site_id" : "candidate_id", r.target_id},
          {"image_id", r.image_id},
          {"verdict", to_string(r.verdict)},
          {"reviewer", r.reviewer},
          {"timestamp", r.timestamp},
          {"new_polygon", geom(r.new_polygon)},
          {"candidate_shape", geom(r.candidate_shape)}};
}

inline ReviewRecord review_from_json(const json& j) {
  ReviewRecord r;
  r.seq = j.at("seq").get<long long>();
  r.is_site = j.at("target_kind").get<std::string>() == "site";
  r.target_id = j.at(r.is_site ? "site_id" : "candidate_id").get<std::string>();
  r.image_id = j.value("image_id", std::string{});
  const auto v = verdict_from_string(j.at("verdict").get<std::string>());
  if (!v) throw Error(ErrorCode::Parse, "unknown verdict in ledger");
  r.verdict = *v;
  r.reviewer = j.at("reviewer").get<std::string>();
  r.timestamp = j.at("timestamp").get<std::string>();
  if (j.contains("new_polygon") && j["new_polygon"].is_object()) r.new_polygon = io::polygon_from_geometry(j["new_polygon"]);
  if (j.contains("candidate_shape") && j["candidate_shape"].is_object()) {
    r.candidate_shape = io::polygon_from_geometry(j["candidate_shape"]);
  }
  return r;
}

/// The body a client posted, as stored; used to tell a retry from a conflict.
inline json review_request_fields(const ReviewRecord& r) {
  json j = review_to_json(r);
  j.erase("seq");
  j.erase("candidate_shape");
  j.erase("image_id");
  return j;
}

/// Latest review per target, in append order.
inline std::map<std::string, ReviewRecord> fold_reviews(const std::vector<ReviewRecord>& records) {
  std::map<std::string, ReviewRecord> state;
  for (const auto& r : records) state[(r.is_site ? "site:" : "cand:") + r.target_id] = r;
  return state;
}

/// Ledger rules, at most one adjustment per image, ordered by image id:
/// - FN image with one of its gt sites marked not visible: FN -> TN;
/// - FP image with an accepted candidate overlapping any known site: FP -> TP.
inline std::vector<evals::AdjustmentRecord> derive_ledger(const std::vector<evals::DetectionOutcome>& outcomes,
                                                          const std::vector<KnownSite>& sites,
                                                          const std::vector<ReviewRecord>& records,
                                                          double min_intersection) {
  const auto state = fold_reviews(records);
  std::vector<const evals::DetectionOutcome*> sorted;
  for (const auto& o : outcomes) sorted.push_back(&o);
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->image_id < b->image_id; });

  std::vector<evals::AdjustmentRecord> ledger;
  for (const auto* o : sorted) {
    if (o->klass == evals::Outcome::FN) {
      for (const auto& s : o->per_site) {
        auto it = state.find("site:" + s.site_id);
        if (it != state.end() && it->second.verdict == Verdict::mark_not_visible) {
          ledger.push_back(evals::AdjustmentRecord::reclassify(evals::Outcome::FN, evals::Outcome::TN, 1,
                                                               evals::AdjustmentReason::site_not_visible, o->image_id));
          break;
        }
      }
    } else if (o->klass == evals::Outcome::FP) {
      bool hit = false;
      for (const auto& [key, r] : state) {
        if (r.is_site || r.image_id != o->image_id || r.verdict != Verdict::accept || !r.candidate_shape) continue;
        for (const auto& s : sites) {
          if (polygon_intersects(s.shape, *r.candidate_shape, min_intersection)) {
            hit = true;
            break;
          }
        }
        if (hit) break;
      }
      if (hit) {
        ledger.push_back(evals::AdjustmentRecord::reclassify(evals::Outcome::FP, evals::Outcome::TP, 1,
                                                             evals::AdjustmentReason::nearby_site_matched, o->image_id));
      }
    }
  }
  return ledger;
}

inline json metrics_body(const std::string& run_id, double threshold,
                         const std::vector<evals::DetectionOutcome>& outcomes,
                         const std::vector<evals::AdjustmentRecord>& ledger, bool adjusted) {
  const auto automatic = evals::count_outcomes(outcomes);
  const auto counts = adjusted ? evals::apply_adjustments(automatic, ledger) : automatic;
  json led = json::array();
  if (adjusted) {
    for (const auto& r : ledger) led.push_back(evals::adjustment_to_json(r));
  }
  const evals::TableRow row{run_id, adjusted ? "Adjusted" : "Automatic", counts};
  return {{"v", 1},
          {"run_id", run_id},
          {"adjusted", adjusted},
          {"threshold", threshold},
          {"counts", evals::counts_to_json(counts)},
          {"metrics", evals::metrics_to_json(evals::metrics(counts))},
          {"ledger", led},
          {"table", evals::render_table({row})}};
}

// ---------------------------------------------------------------------------
// Run directories

struct RunPaths {
  fs::path dir;
  fs::path run_json() const { return dir / "run.json"; }
  fs::path probs() const { return dir / "probs"; }
  fs::path sites() const { return dir / "sites.geojson"; }
  fs::path outcomes() const { return dir / "outcomes.jsonl"; }
  fs::path report() const { return dir / "report.json"; }
  fs::path candidates() const { return dir / "candidates.geojson"; }
  fs::path reviews() const { return dir / "reviews.jsonl"; }
  fs::path heatmap() const { return dir / "heatmap.png"; }
};

inline json candidates_collection(const std::vector<postproc::CandidateShape>& cands) {
  return io::to_json(postproc::candidates_to_collection(cands));
}

/// DetectionReport: per-image outcomes, aggregate counts and metrics, ledger.
inline json detection_report(const std::string& run_id, const PostprocConfig& pp,
                             const std::vector<evals::DetectionOutcome>& outcomes,
                             const std::vector<evals::AdjustmentRecord>& ledger = {}) {
  json outs = json::array();
  for (const auto& o : outcomes) outs.push_back(evals::outcome_to_json(o));
  json led = json::array();
  for (const auto& r : ledger) led.push_back(evals::adjustment_to_json(r));
  const auto counts = evals::count_outcomes(outcomes);
  return {{"v", 1},
          {"run_id", run_id},
          {"threshold", pp.params.threshold},
          {"min_intersection", pp.min_intersection},
          {"outcomes", outs},
          {"counts", evals::counts_to_json(counts)},
          {"metrics", evals::metrics_to_json(evals::metrics(counts))},
          {"per_site_counts", evals::counts_to_json(evals::per_site_counts(outcomes))},
          {"ledger", led}};
}

/// Materializes a completed run under <root>/runs/<id>: stored probability
/// rasters, known sites, automatic outcomes, report and an empty review ledger.
inline fs::path create_run(const fs::path& root, const RunConfig& cfg, const std::map<std::string, ProbRaster>& probs,
                           const std::vector<KnownSite>& sites, const ProbRaster* heatmap = nullptr,
                           bool overwrite = false) {
  if (!valid_run_id(cfg.id)) throw Error(ErrorCode::InvalidArgument, "invalid run id '" + cfg.id + "'");
  cfg.validate_inputs();
  if (probs.empty()) throw Error(ErrorCode::InvalidArgument, "a run needs at least one probability raster");
  const RunPaths p{root / "runs" / cfg.id};
  if (fs::exists(p.dir)) {
    if (!overwrite) throw Error(ErrorCode::InvalidArgument, "run '" + cfg.id + "' already exists");
    fs::remove_all(p.dir);
  }
  fs::create_directories(p.probs());

  RunConfig stored = cfg;
  stored.postproc.params.threshold = quantize_threshold(cfg.postproc.params.threshold);
  for (const auto& [image, r] : probs) {
    if (!valid_run_id(image)) throw Error(ErrorCode::InvalidArgument, "invalid image id '" + image + "'");
    io::write_prob_raster(p.probs() / image, r);
  }
  write_known_sites(p.sites(), sites);
  const auto outcomes = run_outcomes(probs, sites, stored.postproc);
  std::vector<json> rows;
  for (const auto& o : outcomes) rows.push_back(evals::outcome_to_json(o));
  io::write_jsonl(p.outcomes(), rows);
  io::write_json(p.report(), detection_report(cfg.id, stored.postproc, outcomes));

  std::vector<postproc::CandidateShape> all;
  for (const auto& [image, r] : probs) {
    auto c = run_candidates(r, image, stored.postproc, stored.postproc.params.threshold);
    all.insert(all.end(), c.begin(), c.end());
  }
  io::write_json(p.candidates(), candidates_collection(all));
  if (heatmap) {
    mosaic::write_heatmap(p.heatmap(), *heatmap, mosaic::Ramp::heat);
  }
  io::write_text(p.reviews(), "");
  io::write_json(p.run_json(), {{"v", 1}, {"id", cfg.id}, {"status", "completed"}, {"config", run_config_to_json(stored)}});
  return p.dir;
}

// ---------------------------------------------------------------------------

struct LedgerSnapshot {
  std::vector<ReviewRecord> records;
  std::map<std::tuple<std::string, std::string, std::string>, std::size_t> by_key;
};

struct PostResult {
  int status = 201;
  json body;
};

/// One loaded run. Reads work on immutable snapshots; review appends are
/// serialized by a per-run mutex and written to reviews.jsonl before the new
/// snapshot is published.
class RunStore {
 public:
  static std::shared_ptr<RunStore> open(const fs::path& dir) {
    auto s = std::shared_ptr<RunStore>(new RunStore());
    s->paths_.dir = dir;
    s->run_json_ = io::read_json(s->paths_.run_json());
    s->cfg_ = run_config_from_json(s->run_json_.at("config"));
    s->id_ = s->run_json_.at("id").get<std::string>();
    for (const auto& e : fs::directory_iterator(s->paths_.probs())) {
      if (e.path().extension() != ".json") continue;
      const fs::path base = e.path().parent_path() / e.path().stem();
      s->probs_.emplace(base.filename().string(), io::read_prob_raster(base));
    }
    s->sites_ = read_known_sites(s->paths_.sites());
    if (fs::exists(s->paths_.outcomes())) {
      for (const auto& j : io::read_jsonl(s->paths_.outcomes())) s->outcomes_.push_back(evals::outcome_from_json(j));
    } else {
      s->outcomes_ = run_outcomes(s->probs_, s->sites_, s->cfg_.postproc);
    }
    auto snap = std::make_shared<LedgerSnapshot>();
    for (const auto& j : io::read_jsonl(s->paths_.reviews())) {
      ReviewRecord r = review_from_json(j);
      snap->by_key[r.key()] = snap->records.size();
      snap->records.push_back(std::move(r));
    }
    s->snapshot_ = snap;
    return s;
  }

  const std::string& id() const { return id_; }
  const RunConfig& config() const { return cfg_; }
  const std::vector<evals::DetectionOutcome>& outcomes() const { return outcomes_; }
  const std::vector<KnownSite>& sites() const { return sites_; }
  std::shared_ptr<const LedgerSnapshot> snapshot() const { return std::atomic_load(&snapshot_); }

  json info() const {
    json j = run_json_;
    j["reviews"] = snapshot()->records.size();
    j["images"] = json::array();
    for (const auto& [image, r] : probs_) j["images"].push_back(image);
    return j;
  }

  std::optional<fs::path> heatmap_path() const {
    if (fs::exists(paths_.heatmap())) return paths_.heatmap();
    return std::nullopt;
  }

  std::shared_ptr<const std::vector<postproc::CandidateShape>> candidates(const std::string& image, double t) const {
    const auto key = std::make_pair(image, threshold_key(t));
    {
      std::lock_guard lock(cache_mu_);
      auto it = cache_.find(key);
      if (it != cache_.end()) return it->second;
    }
    auto pit = probs_.find(image);
    if (pit == probs_.end()) throw HttpError(404, "unknown image '" + image + "'");
    auto c = std::make_shared<const std::vector<postproc::CandidateShape>>(
        run_candidates(pit->second, image, cfg_.postproc, t));
    std::lock_guard lock(cache_mu_);
    return cache_.emplace(key, c).first->second;
  }

  /// FeatureCollection of every image's candidates at t, each with its review state.
  json candidates_json(double t) const {
    if (!(t >= 0 && t <= 1)) throw HttpError(422, "threshold must be in [0,1]");
    const auto state = fold_reviews(snapshot()->records);
    std::vector<postproc::CandidateShape> all;
    for (const auto& [image, r] : probs_) {
      const auto c = candidates(image, t);
      all.insert(all.end(), c->begin(), c->end());
    }
    json fc = candidates_collection(all);
    for (auto& f : fc["features"]) {
      const auto id = f["properties"]["id"].get<std::string>();
      auto it = state.find("cand:" + id);
      f["properties"]["review_state"] = it == state.end() ? "pending" : to_string(it->second.verdict);
    }
    fc["v"] = 1;
    fc["run_id"] = id_;
    fc["threshold"] = quantize_threshold(t);
    return fc;
  }

  PostResult post_review(const json& body) {
    ReviewRecord r = resolve(body);
    std::lock_guard lock(write_mu_);
    auto cur = snapshot();
    auto it = cur->by_key.find(r.key());
    if (it != cur->by_key.end()) {
      const ReviewRecord& prev = cur->records[it->second];
      if (review_request_fields(prev) == review_request_fields(r)) {
        return {200, {{"v", 1}, {"status", "duplicate"}, {"review", review_to_json(prev)}}};
      }
      throw HttpError(409, "a different review with the same target, reviewer and timestamp exists");
    }
    r.seq = static_cast<long long>(cur->records.size()) + 1;
    {
      std::ofstream out(paths_.reviews(), std::ios::app | std::ios::binary);
      if (!out) throw Error(ErrorCode::Io, "cannot append to " + paths_.reviews().string());
      out << review_to_json(r).dump() << "\n";
      out.flush();
      if (!out) throw Error(ErrorCode::Io, "append failed on " + paths_.reviews().string());
    }
    auto next = std::make_shared<LedgerSnapshot>(*cur);
    next->by_key[r.key()] = next->records.size();
    next->records.push_back(r);
    std::atomic_store(&snapshot_, std::shared_ptr<const LedgerSnapshot>(next));
    return {201, {{"v", 1}, {"status", "appended"}, {"review", review_to_json(r)}}};
  }

  std::vector<evals::AdjustmentRecord> ledger() const {
    return derive_ledger(outcomes_, sites_, snapshot()->records, cfg_.postproc.min_intersection);
  }

  json metrics_json(bool adjusted) const {
    return metrics_body(id_, cfg_.postproc.params.threshold, outcomes_, adjusted ? ledger() : std::vector<evals::AdjustmentRecord>{},
                        adjusted);
  }

  /// Accepted and relabeled shapes, one per target, ordered by target id.
  json export_annotations() const {
    const auto state = fold_reviews(snapshot()->records);
    io::FeatureCollection fc;
    for (const auto& [key, r] : state) {
      std::optional<Polygon> shape;
      if (r.verdict == Verdict::relabel) {
        shape = r.new_polygon;
      } else if (r.verdict == Verdict::accept) {
        if (r.is_site) {
          for (const auto& s : sites_) {
            if (s.id == r.target_id) shape = s.shape;
          }
        } else {
          shape = r.candidate_shape;
        }
      }
      if (!shape) continue;
      fc.features.push_back({*shape,
                             {{"id", r.target_id},
                              {"target_kind", r.is_site ? "site" : "candidate"},
                              {"image_id", r.image_id},
                              {"verdict", to_string(r.verdict)},
                              {"reviewer", r.reviewer},
                              {"timestamp", r.timestamp}}});
    }
    json j = io::to_json(fc);
    j["v"] = 1;
    j["run_id"] = id_;
    return j;
  }

 private:
  RunStore() = default;

  ReviewRecord resolve(const json& body) const {
    if (!body.is_object()) throw HttpError(422, "review body must be a JSON object");
    if (!body.contains("v") || body["v"] != 1) throw HttpError(422, "expected \"v\":1");
    const bool has_c = body.contains("candidate_id"), has_s = body.contains("site_id");
    if (has_c == has_s) throw HttpError(422, "exactly one of candidate_id or site_id is required");
    auto str = [&](const char* k) {
      if (!body.contains(k) || !body[k].is_string() || body[k].get<std::string>().empty()) {
        throw HttpError(422, std::string("missing or empty string field '") + k + "'");
      }
      return body[k].get<std::string>();
    };
    ReviewRecord r;
    r.is_site = has_s;
    r.target_id = str(has_s ? "site_id" : "candidate_id");
    const auto v = verdict_from_string(str("verdict"));
    if (!v) throw HttpError(422, "verdict must be accept, reject, mark_not_visible or relabel");
    r.verdict = *v;
    r.reviewer = str("reviewer");
    r.timestamp = str("timestamp");

    const bool has_poly = body.contains("new_polygon") && !body["new_polygon"].is_null();
    if (r.verdict == Verdict::relabel && !has_poly) throw HttpError(422, "relabel requires new_polygon");
    if (r.verdict != Verdict::relabel && has_poly) throw HttpError(422, "new_polygon is only valid with relabel");
    if (has_poly) {
      try {
        const json& g = body["new_polygon"];
        Polygon p = g.is_object() && g.contains("type") ? io::polygon_from_geometry(g) : io::polygon_from_coordinates(g);
        if (!is_valid(p)) throw HttpError(422, "new_polygon is not a valid polygon");
        r.new_polygon = oriented(std::move(p));
      } catch (const Error& e) {
        throw HttpError(422, std::string("invalid new_polygon: ") + e.what());
      } catch (const json::exception& e) {
        throw HttpError(422, std::string("invalid new_polygon: ") + e.what());
      }
    }

    if (r.is_site) {
      auto it = std::find_if(sites_.begin(), sites_.end(), [&](const KnownSite& s) { return s.id == r.target_id; });
      if (it == sites_.end()) throw HttpError(404, "unknown site '" + r.target_id + "'");
      r.image_id = it->image_id;
    } else {
      const auto ref = parse_candidate_id(r.target_id);
      if (!ref || !probs_.count(ref->image)) throw HttpError(404, "unknown candidate '" + r.target_id + "'");
      const auto cands = candidates(ref->image, ref->threshold);
      if (ref->index >= cands->size()) throw HttpError(404, "unknown candidate '" + r.target_id + "'");
      r.image_id = ref->image;
      r.candidate_shape = (*cands)[ref->index].shape;
    }
    return r;
  }

  RunPaths paths_;
  json run_json_;
  RunConfig cfg_;
  std::string id_;
  std::map<std::string, ProbRaster> probs_;
  std::vector<KnownSite> sites_;
  std::vector<evals::DetectionOutcome> outcomes_;

  mutable std::mutex cache_mu_;
  mutable std::map<std::pair<std::string, std::string>, std::shared_ptr<const std::vector<postproc::CandidateShape>>>
      cache_;

  std::mutex write_mu_;
  std::shared_ptr<const LedgerSnapshot> snapshot_;
};

/// Every run under <root>/runs, opened lazily and kept for the process lifetime.
class RunRegistry {
 public:
  explicit RunRegistry(fs::path root) : root_(std::move(root)) {}

  const fs::path& root() const { return root_; }

  std::vector<std::string> ids() const {
    std::vector<std::string> out;
    const fs::path runs = root_ / "runs";
    if (!fs::exists(runs)) return out;
    for (const auto& e : fs::directory_iterator(runs)) {
      if (e.is_directory() && fs::exists(e.path() / "run.json")) out.push_back(e.path().filename().string());
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  std::shared_ptr<RunStore> get(const std::string& id) {
    if (!valid_run_id(id)) throw HttpError(404, "unknown run '" + id + "'");
    std::lock_guard lock(mu_);
    auto it = runs_.find(id);
    if (it != runs_.end()) return it->second;
    const fs::path dir = root_ / "runs" / id;
    if (!fs::exists(dir / "run.json")) throw HttpError(404, "unknown run '" + id + "'");
    auto store = RunStore::open(dir);
    runs_.emplace(id, store);
    return store;
  }

  json list() {
    json runs = json::array();
    for (const auto& id : ids()) {
      const json rj = io::read_json(root_ / "runs" / id / "run.json");
      runs.push_back({{"id", id}, {"status", rj.value("status", std::string{"unknown"})}});
    }
    return {{"v", 1}, {"runs", runs}};
  }

 private:
  fs::path root_;
  std::mutex mu_;
  std::map<std::string, std::shared_ptr<RunStore>> runs_;
};

}  // namespace moundline::service
