#pragma once

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "moundline/error.hpp"
#include "moundline/geo.hpp"
#include "moundline/io/geojson.hpp"
#include "moundline/model.hpp"
#include "moundline/postproc.hpp"
#include "moundline/rng.hpp"
#include "moundline/tiles.hpp"

namespace moundline::evals {

// ---------------------------------------------------------------------------
// Segmentation overlap

/// |a ∩ b| / |a ∪ b|; two empty masks score 1.
inline double iou(const Mask& a, const Mask& b) {
  if (!same_shape(a, b)) throw Error(ErrorCode::DimensionMismatch, "iou: mask shapes differ");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const bool x = a.values[i] != 0, y = b.values[i] != 0;
    inter += (x && y);
    uni += (x || y);
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

struct RepeatedIouOptions {
  int passes = 10;
  std::uint64_t seed = 0;
  /// Side of the random crop in pixels; 0 evaluates full tiles.
  int crop_side = 0;
  double threshold = 0.5;
};

struct RepeatedIouResult {
  double mean = 0;
  double std = 0;  // sample standard deviation of the pass means
  std::vector<double> pass_means;
  std::vector<std::vector<double>> per_tile;  // [pass][tile]
};

/// Accumulates offsets from the first sample, so identical samples give their
/// own value back exactly (and a standard deviation of exactly 0).
inline double sample_mean(const std::vector<double>& v) {
  if (v.empty()) return 0;
  double s = 0;
  for (double x : v) s += x - v.front();
  return v.front() + s / static_cast<double>(v.size());
}

inline double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0;
  const double m = sample_mean(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

/// Each pass re-crops every test tile with a pass-specific seed, predicts,
/// thresholds and scores IoU; the spread of pass means reflects crop luck.
inline RepeatedIouResult repeated_iou(const std::vector<tiles::Tile>& test, const model::Segmenter& segmenter,
                                      const RepeatedIouOptions& opt) {
  if (opt.passes < 2) throw Error(ErrorCode::InvalidArgument, "repeated_iou needs at least 2 passes");
  if (test.empty()) throw Error(ErrorCode::EmptyTestSet, "no test tiles");
  RepeatedIouResult res;
  for (int pass = 0; pass < opt.passes; ++pass) {
    std::vector<double> scores;
    for (std::size_t i = 0; i < test.size(); ++i) {
      const tiles::Tile cropped =
          opt.crop_side > 0
              ? tiles::random_crop(test[i], opt.crop_side, mix_seed(opt.seed, static_cast<std::uint64_t>(pass) * 1000003 + i))
              : test[i];
      const ProbRaster p = segmenter.predict(cropped.image, cropped.source_id);
      scores.push_back(iou(postproc::threshold_clip(p, opt.threshold), cropped.mask));
    }
    res.pass_means.push_back(sample_mean(scores));
    res.per_tile.push_back(std::move(scores));
  }
  res.mean = sample_mean(res.pass_means);
  res.std = sample_std(res.pass_means);
  return res;
}

inline io::json repeated_iou_log(const RepeatedIouResult& r) {
  return {{"mean", r.mean}, {"std", r.std}, {"pass_means", r.pass_means}, {"per_tile", r.per_tile}};
}

// ---------------------------------------------------------------------------
// Detection accounting

enum class Outcome { TP, TN, FP, FN };

inline std::string to_string(Outcome o) {
  switch (o) {
    case Outcome::TP: return "TP";
    case Outcome::TN: return "TN";
    case Outcome::FP: return "FP";
    case Outcome::FN: return "FN";
  }
  return "?";
}

inline Outcome outcome_from_string(const std::string& s) {
  if (s == "TP") return Outcome::TP;
  if (s == "TN") return Outcome::TN;
  if (s == "FP") return Outcome::FP;
  if (s == "FN") return Outcome::FN;
  throw Error(ErrorCode::Parse, "unknown outcome '" + s + "'");
}

struct ConfusionCounts {
  long long tp = 0, tn = 0, fp = 0, fn = 0;

  long long total() const { return tp + tn + fp + fn; }
  long long& operator[](Outcome o) {
    switch (o) {
      case Outcome::TP: return tp;
      case Outcome::TN: return tn;
      case Outcome::FP: return fp;
      case Outcome::FN: break;
    }
    return fn;
  }
  long long operator[](Outcome o) const { return const_cast<ConfusionCounts&>(*this)[o]; }

  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

struct Metrics {
  std::optional<double> accuracy;
  std::optional<double> recall;
  std::optional<double> precision;
};

/// A metric whose denominator is zero is absent.
inline Metrics metrics(const ConfusionCounts& c) {
  if (c.tp < 0 || c.tn < 0 || c.fp < 0 || c.fn < 0) throw Error(ErrorCode::InvalidArgument, "negative count");
  Metrics m;
  if (c.total() > 0) m.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
  if (c.tp + c.fn > 0) m.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  if (c.tp + c.fp > 0) m.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  return m;
}

enum class AdjustmentKind { reclassify, append };
enum class AdjustmentReason { site_not_visible, nearby_site_matched, other };

inline std::string to_string(AdjustmentReason r) {
  switch (r) {
    case AdjustmentReason::site_not_visible: return "site_not_visible";
    case AdjustmentReason::nearby_site_matched: return "nearby_site_matched";
    case AdjustmentReason::other: break;
  }
  return "other";
}

inline AdjustmentReason reason_from_string(const std::string& s) {
  if (s == "site_not_visible") return AdjustmentReason::site_not_visible;
  if (s == "nearby_site_matched") return AdjustmentReason::nearby_site_matched;
  return AdjustmentReason::other;
}

struct AdjustmentRecord {
  AdjustmentKind kind = AdjustmentKind::reclassify;
  Outcome from = Outcome::FN;  // ignored for append
  Outcome to = Outcome::TN;
  long long count = 1;
  AdjustmentReason reason = AdjustmentReason::other;
  std::string note;

  static AdjustmentRecord reclassify(Outcome from, Outcome to, long long n,
                                     AdjustmentReason why = AdjustmentReason::other, std::string note = {}) {
    return {AdjustmentKind::reclassify, from, to, n, why, std::move(note)};
  }
  static AdjustmentRecord append(Outcome to, long long n, AdjustmentReason why = AdjustmentReason::other,
                                 std::string note = {}) {
    return {AdjustmentKind::append, to, to, n, why, std::move(note)};
  }
};

/// Applies the ledger in order. Reclassification preserves the total; append
/// grows it.
inline ConfusionCounts apply_adjustments(ConfusionCounts c, const std::vector<AdjustmentRecord>& ledger) {
  for (const auto& rec : ledger) {
    if (rec.count < 1) throw Error(ErrorCode::InvalidArgument, "adjustment count must be >= 1");
    if (rec.kind == AdjustmentKind::reclassify) {
      if (c[rec.from] < rec.count) {
        throw Error(ErrorCode::InsufficientCount, "cannot move " + std::to_string(rec.count) + " out of " +
                                                      to_string(rec.from) + " (" + std::to_string(c[rec.from]) + ")");
      }
      c[rec.from] -= rec.count;
    }
    c[rec.to] += rec.count;
  }
  return c;
}

inline io::json adjustment_to_json(const AdjustmentRecord& r) {
  io::json j = {{"kind", r.kind == AdjustmentKind::reclassify ? "reclassify" : "append"},
                {"to", to_string(r.to)},
                {"count", r.count},
                {"reason", to_string(r.reason)},
                {"note", r.note}};
  if (r.kind == AdjustmentKind::reclassify) j["from"] = to_string(r.from);
  return j;
}

inline AdjustmentRecord adjustment_from_json(const io::json& j) {
  AdjustmentRecord r;
  r.kind = j.at("kind").get<std::string>() == "append" ? AdjustmentKind::append : AdjustmentKind::reclassify;
  r.to = outcome_from_string(j.at("to").get<std::string>());
  r.from = r.kind == AdjustmentKind::reclassify ? outcome_from_string(j.at("from").get<std::string>()) : r.to;
  r.count = j.value("count", 1LL);
  r.reason = reason_from_string(j.value("reason", std::string{"other"}));
  r.note = j.value("note", std::string{});
  return r;
}

struct GroundTruthSite {
  std::string id;
  Polygon shape;
};

struct DetectionImage {
  std::string image_id;
  std::vector<GroundTruthSite> gt_sites;
  std::vector<postproc::CandidateShape> candidates;
};

struct SiteMatch {
  std::string site_id;
  bool matched = false;
  std::vector<std::string> candidate_ids;
};

struct DetectionOutcome {
  std::string image_id;
  Outcome klass = Outcome::TN;
  std::vector<std::string> matched_candidate_ids;
  std::vector<std::string> unmatched_candidate_ids;
  std::optional<std::string> site_id;  // first matched site, else first gt site
  std::vector<SiteMatch> per_site;
};

/// TP if any candidate overlaps any gt site by more than min_intersection,
/// FN if gt exists but nothing overlaps, TN/FP on empty gt by candidate presence.
inline std::vector<DetectionOutcome> detect_outcomes(const std::vector<DetectionImage>& images,
                                                     double min_intersection = 0.0) {
  std::vector<DetectionOutcome> out;
  for (const auto& img : images) {
    DetectionOutcome o;
    o.image_id = img.image_id;
    std::vector<bool> cand_matched(img.candidates.size(), false);
    for (const auto& site : img.gt_sites) {
      SiteMatch sm{site.id, false, {}};
      for (std::size_t k = 0; k < img.candidates.size(); ++k) {
        if (polygon_intersects(site.shape, img.candidates[k].shape, min_intersection)) {
          sm.matched = true;
          sm.candidate_ids.push_back(img.candidates[k].id);
          cand_matched[k] = true;
        }
      }
      if (sm.matched && !o.site_id) o.site_id = site.id;
      o.per_site.push_back(std::move(sm));
    }
    for (std::size_t k = 0; k < img.candidates.size(); ++k) {
      (cand_matched[k] ? o.matched_candidate_ids : o.unmatched_candidate_ids).push_back(img.candidates[k].id);
    }
    if (!img.gt_sites.empty()) {
      o.klass = o.matched_candidate_ids.empty() ? Outcome::FN : Outcome::TP;
      if (!o.site_id) o.site_id = img.gt_sites.front().id;
    } else {
      o.klass = img.candidates.empty() ? Outcome::TN : Outcome::FP;
    }
    out.push_back(std::move(o));
  }
  return out;
}

/// Per-site reading: every gt site is its own TP/FN; candidates touching no
/// site count as FP only on images without gt.
inline ConfusionCounts per_site_counts(const std::vector<DetectionOutcome>& outcomes) {
  ConfusionCounts c;
  for (const auto& o : outcomes) {
    if (o.per_site.empty()) {
      ++c[o.klass];
      continue;
    }
    for (const auto& s : o.per_site) ++c[s.matched ? Outcome::TP : Outcome::FN];
  }
  return c;
}

inline ConfusionCounts count_outcomes(const std::vector<DetectionOutcome>& outcomes) {
  ConfusionCounts c;
  for (const auto& o : outcomes) ++c[o.klass];
  return c;
}

inline io::json outcome_to_json(const DetectionOutcome& o) {
  io::json sites = io::json::array();
  for (const auto& s : o.per_site) {
    sites.push_back({{"site_id", s.site_id}, {"matched", s.matched}, {"candidate_ids", s.candidate_ids}});
  }
  return {{"image_id", o.image_id},
          {"klass", to_string(o.klass)},
          {"matched_candidate_ids", o.matched_candidate_ids},
          {"unmatched_candidate_ids", o.unmatched_candidate_ids},
          {"site_id", o.site_id ? io::json(*o.site_id) : io::json(nullptr)},
          {"per_site", sites}};
}

inline DetectionOutcome outcome_from_json(const io::json& j) {
  DetectionOutcome o;
  o.image_id = j.at("image_id").get<std::string>();
  o.klass = outcome_from_string(j.at("klass").get<std::string>());
  o.matched_candidate_ids = j.value("matched_candidate_ids", std::vector<std::string>{});
  o.unmatched_candidate_ids = j.value("unmatched_candidate_ids", std::vector<std::string>{});
  if (j.contains("site_id") && j["site_id"].is_string()) o.site_id = j["site_id"].get<std::string>();
  if (j.contains("per_site")) {
    for (const auto& s : j["per_site"]) {
      o.per_site.push_back({s.at("site_id").get<std::string>(), s.at("matched").get<bool>(),
                            s.value("candidate_ids", std::vector<std::string>{})});
    }
  }
  return o;
}

// ---------------------------------------------------------------------------
// Reports

inline io::json counts_to_json(const ConfusionCounts& c) {
  return {{"tp", c.tp}, {"tn", c.tn}, {"fp", c.fp}, {"fn", c.fn}};
}

inline io::json metrics_to_json(const Metrics& m) {
  auto opt = [](const std::optional<double>& v) { return v ? io::json(*v) : io::json(nullptr); };
  return {{"accuracy", opt(m.accuracy)}, {"recall", opt(m.recall)}, {"precision", opt(m.precision)}};
}

inline std::string fmt4(const std::optional<double>& v) {
  if (!v) return "-";
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << *v;
  return os.str();
}

struct TableRow {
  std::string model;
  std::string evaluation;
  ConfusionCounts counts;
};

/// Tab-separated table with TP TN FP FN Accuracy Recall Precision columns,
/// or CSV when `csv` is set.
inline std::string render_table(const std::vector<TableRow>& rows, bool csv = false) {
  const char sep = csv ? ',' : '\t';
  std::ostringstream os;
  os << "Model" << sep << "Evaluation" << sep << "TP" << sep << "TN" << sep << "FP" << sep << "FN" << sep
     << "Accuracy" << sep << "Recall" << sep << "Precision\n";
  for (const auto& r : rows) {
    const Metrics m = metrics(r.counts);
    os << r.model << sep << r.evaluation << sep << r.counts.tp << sep << r.counts.tn << sep << r.counts.fp << sep
       << r.counts.fn << sep << fmt4(m.accuracy) << sep << fmt4(m.recall) << sep << fmt4(m.precision) << "\n";
  }
  return os.str();
}

}  // namespace moundline::evals
