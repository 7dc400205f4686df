#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "moundline/error.hpp"
#include "moundline/geo.hpp"
#include "moundline/io/geojson.hpp"
#include "moundline/io/raster_io.hpp"
#include "moundline/rng.hpp"
#include "moundline/tiles.hpp"

namespace moundline::model {

inline constexpr double kProbEpsilon = 1e-7;

enum class LossKind { focal, dice };

inline std::string to_string(LossKind k) { return k == LossKind::focal ? "focal" : "dice"; }

inline LossKind loss_from_string(const std::string& s) {
  if (s == "focal") return LossKind::focal;
  if (s == "dice") return LossKind::dice;
  throw Error(ErrorCode::Parse, "unknown loss '" + s + "'");
}

enum class SegmenterKind { external_raster, baseline };

struct SegmenterSpec {
  SegmenterKind kind = SegmenterKind::baseline;
  LossKind loss = LossKind::focal;
  double focal_gamma = 2.0;
  double focal_alpha = 0.25;
  int epochs = 20;
  double learning_rate = 1.0;
  std::vector<int> feature_radii = {2, 8, 24};
  std::uint64_t seed = 0;
  /// Pixels per SGD step per tile; tiles with fewer pixels use every pixel.
  int batch_pixels = 4096;
  /// Fresh dihedral + photometric augmentation for every tile visit.
  bool augment = true;
  tiles::AugBounds aug_bounds;

  void validate() const {
    if (epochs < 1) throw Error(ErrorCode::InvalidArgument, "epochs must be >= 1");
    if (feature_radii.empty()) throw Error(ErrorCode::InvalidArgument, "feature_radii must be non-empty");
    if (!std::is_sorted(feature_radii.begin(), feature_radii.end()) ||
        std::adjacent_find(feature_radii.begin(), feature_radii.end()) != feature_radii.end() ||
        feature_radii.front() < 1) {
      throw Error(ErrorCode::InvalidArgument, "feature_radii must be positive and strictly ascending");
    }
    if (!(learning_rate > 0)) throw Error(ErrorCode::InvalidArgument, "learning_rate must be > 0");
    if (!(focal_gamma >= 0)) throw Error(ErrorCode::InvalidArgument, "focal_gamma must be >= 0");
    if (!(focal_alpha > 0 && focal_alpha < 1)) throw Error(ErrorCode::InvalidArgument, "focal_alpha must be in (0,1)");
    if (batch_pixels < 2) throw Error(ErrorCode::InvalidArgument, "batch_pixels must be >= 2");
  }
};

// ---------------------------------------------------------------------------
// Losses

inline double clamp_prob(double p) { return std::clamp(p, kProbEpsilon, 1.0 - kProbEpsilon); }

inline double focal_loss(double p, int y, double gamma, double alpha) {
  p = clamp_prob(p);
  const double pt = y ? p : 1.0 - p;
  const double at = y ? alpha : 1.0 - alpha;
  return -at * std::pow(1.0 - pt, gamma) * std::log(pt);
}

/// d focal_loss / d logit, where p = sigmoid(logit). Zero where the clamp is
/// active, matching the clamped loss.
inline double focal_grad_logit(double p, int y, double gamma, double alpha) {
  if (p < kProbEpsilon || p > 1.0 - kProbEpsilon) return 0.0;
  if (y) return alpha * std::pow(1.0 - p, gamma) * (gamma * p * std::log(p) - (1.0 - p));
  return (1.0 - alpha) * std::pow(p, gamma) * (p - gamma * (1.0 - p) * std::log(1.0 - p));
}

inline constexpr double kDiceSmooth = 1.0;

template <class P, class Y>
double dice_loss_values(const std::vector<P>& pred, const std::vector<Y>& target) {
  if (pred.size() != target.size()) throw Error(ErrorCode::DimensionMismatch, "dice: size mismatch");
  double inter = 0, sp = 0, sy = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = pred[i];
    const double y = target[i] ? 1.0 : 0.0;
    inter += p * y;
    sp += p;
    sy += y;
  }
  return 1.0 - (2.0 * inter + kDiceSmooth) / (sp + sy + kDiceSmooth);
}

inline double dice_loss(const ProbRaster& pred, const Mask& target) {
  if (!same_shape(pred, target)) throw Error(ErrorCode::DimensionMismatch, "dice: raster shapes differ");
  return dice_loss_values(pred.values, target.values);
}

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// ---------------------------------------------------------------------------
// Features

namespace detail {

enum class Extreme { min, max };

// Sliding min/max over a clipped window of radius r along a strided line.
inline void sliding_extreme(const double* in, double* out, int n, std::ptrdiff_t stride, int r, Extreme kind) {
  std::deque<int> dq;
  auto better = [kind](double a, double b) { return kind == Extreme::min ? a <= b : a >= b; };
  int next = 0;
  for (int i = 0; i < n; ++i) {
    const int hi = std::min(n - 1, i + r);
    while (next <= hi) {
      while (!dq.empty() && better(in[next * stride], in[dq.back() * stride])) dq.pop_back();
      dq.push_back(next);
      ++next;
    }
    while (dq.front() < i - r) dq.pop_front();
    out[i * stride] = in[dq.front() * stride];
  }
}

inline std::vector<double> window_extreme(const std::vector<double>& img, int w, int h, int r, Extreme kind) {
  std::vector<double> tmp(img.size()), out(img.size());
  for (int y = 0; y < h; ++y) {
    sliding_extreme(img.data() + static_cast<std::ptrdiff_t>(y) * w, tmp.data() + static_cast<std::ptrdiff_t>(y) * w,
                    w, 1, r, kind);
  }
  for (int x = 0; x < w; ++x) sliding_extreme(tmp.data() + x, out.data() + x, h, w, r, kind);
  return out;
}

// Summed-area table with a zero border row/column.
class Integral {
 public:
  Integral(const std::vector<double>& img, int w, int h)
      : w_(w), h_(h), s_(static_cast<std::size_t>(w + 1) * static_cast<std::size_t>(h + 1), 0.0) {
    for (int y = 0; y < h; ++y) {
      double row = 0;
      for (int x = 0; x < w; ++x) {
        row += img[static_cast<std::size_t>(y) * w + x];
        at(x + 1, y + 1) = at(x + 1, y) + row;
      }
    }
  }

  /// Sum over [x0,x1] x [y0,y1], inclusive.
  double sum(int x0, int y0, int x1, int y1) const {
    return at(x1 + 1, y1 + 1) - at(x0, y1 + 1) - at(x1 + 1, y0) + at(x0, y0);
  }

 private:
  double& at(int x, int y) { return s_[static_cast<std::size_t>(y) * (w_ + 1) + x]; }
  double at(int x, int y) const { return s_[static_cast<std::size_t>(y) * (w_ + 1) + x]; }
  int w_, h_;
  std::vector<double> s_;
};

}  // namespace detail

inline int feature_count(const std::vector<int>& radii) { return 5 * static_cast<int>(radii.size()) + 3; }

/// Row-major per-pixel features: raw RGB, then per radius the windowed
/// gray mean, std, min, max and mean gradient magnitude. Windows are clipped
/// at the raster border.
struct FeatureMap {
  int width = 0;
  int height = 0;
  int count = 0;
  std::vector<double> values;

  const double* pixel(std::size_t i) const { return values.data() + i * static_cast<std::size_t>(count); }
};

inline FeatureMap compute_features(const RgbImage& img, const std::vector<int>& radii) {
  const int w = img.width, h = img.height;
  const std::size_t n = img.values.size();
  FeatureMap fm{w, h, feature_count(radii), {}};
  fm.values.assign(n * static_cast<std::size_t>(fm.count), 0.0);

  std::vector<double> gray(n), gray_sq(n), grad(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Rgb& p = img.values[i];
    gray[i] = (p.r + p.g + p.b) / (3.0 * 255.0);
    gray_sq[i] = gray[i] * gray[i];
    fm.values[i * fm.count + 0] = p.r / 255.0;
    fm.values[i * fm.count + 1] = p.g / 255.0;
    fm.values[i * fm.count + 2] = p.b / 255.0;
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      auto g = [&](int xx, int yy) {
        return gray[static_cast<std::size_t>(std::clamp(yy, 0, h - 1)) * w + std::clamp(xx, 0, w - 1)];
      };
      const double gx = (g(x + 1, y) - g(x - 1, y)) / 2.0;
      const double gy = (g(x, y + 1) - g(x, y - 1)) / 2.0;
      grad[static_cast<std::size_t>(y) * w + x] = std::sqrt(gx * gx + gy * gy);
    }
  }
  const detail::Integral s1(gray, w, h), s2(gray_sq, w, h), sg(grad, w, h);
  for (std::size_t k = 0; k < radii.size(); ++k) {
    const int r = radii[k];
    const auto mn = detail::window_extreme(gray, w, h, r, detail::Extreme::min);
    const auto mx = detail::window_extreme(gray, w, h, r, detail::Extreme::max);
    const int base = 3 + 5 * static_cast<int>(k);
    for (int y = 0; y < h; ++y) {
      const int y0 = std::max(0, y - r), y1 = std::min(h - 1, y + r);
      for (int x = 0; x < w; ++x) {
        const int x0 = std::max(0, x - r), x1 = std::min(w - 1, x + r);
        const double cnt = static_cast<double>(x1 - x0 + 1) * (y1 - y0 + 1);
        const double mean = s1.sum(x0, y0, x1, y1) / cnt;
        const double var = std::max(0.0, s2.sum(x0, y0, x1, y1) / cnt - mean * mean);
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        double* f = fm.values.data() + i * fm.count + base;
        f[0] = mean;
        f[1] = std::sqrt(var);
        f[2] = mn[i];
        f[3] = mx[i];
        f[4] = sg.sum(x0, y0, x1, y1) / cnt;
      }
    }
  }
  return fm;
}

// ---------------------------------------------------------------------------
// Baseline logistic model

struct EpochLoss {
  double train = 0;
  double val = 0;
  bool has_val = false;
};

struct BaselineModel {
  SegmenterSpec spec;
  std::vector<double> weights;  // one per feature
  double bias = 0;
  std::vector<double> feat_mean;
  std::vector<double> feat_std;
  std::vector<EpochLoss> history;

  int feature_count() const { return model::feature_count(spec.feature_radii); }

  /// Fresh model with zero weights and identity normalization.
  static BaselineModel zeros(const SegmenterSpec& spec) {
    BaselineModel m;
    m.spec = spec;
    const auto f = static_cast<std::size_t>(m.feature_count());
    m.weights.assign(f, 0.0);
    m.feat_mean.assign(f, 0.0);
    m.feat_std.assign(f, 1.0);
    return m;
  }

  double logit(const double* raw) const {
    double z = bias;
    for (std::size_t k = 0; k < weights.size(); ++k) z += weights[k] * (raw[k] - feat_mean[k]) / feat_std[k];
    return z;
  }
};

/// A batch of pixel indices into one tile's feature map.
struct PixelBatch {
  std::vector<std::size_t> pixels;
};

/// Sample with 1:1 positive/negative balance when the tile has both classes;
/// a tile no larger than the batch contributes every pixel once.
inline PixelBatch sample_batch(const Mask& mask, int batch, Rng& rng) {
  PixelBatch b;
  const std::size_t n = mask.values.size();
  if (n <= static_cast<std::size_t>(batch)) {
    b.pixels.resize(n);
    std::iota(b.pixels.begin(), b.pixels.end(), std::size_t{0});
    return b;
  }
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < n; ++i) (mask.values[i] ? pos : neg).push_back(i);
  b.pixels.reserve(static_cast<std::size_t>(batch));
  if (pos.empty() || neg.empty()) {
    for (int i = 0; i < batch; ++i) b.pixels.push_back(rng.below(n));
    return b;
  }
  const int half = batch / 2;
  for (int i = 0; i < half; ++i) b.pixels.push_back(pos[rng.below(pos.size())]);
  for (int i = half; i < batch; ++i) b.pixels.push_back(neg[rng.below(neg.size())]);
  return b;
}

struct LossAndGrad {
  double loss = 0;
  std::vector<double> grad;  // weights..., then bias
};

/// Mean focal loss or batch dice loss over the batch, with its gradient
/// with respect to every weight and the bias.
inline LossAndGrad batch_loss(const BaselineModel& m, const FeatureMap& fm, const Mask& mask,
                              const PixelBatch& batch, bool want_grad = true) {
  const std::size_t nf = m.weights.size();
  const std::size_t nb = batch.pixels.size();
  LossAndGrad out;
  out.grad.assign(nf + 1, 0.0);
  if (nb == 0) return out;

  std::vector<double> p(nb), dz(nb);
  std::vector<int> y(nb);
  for (std::size_t i = 0; i < nb; ++i) {
    const std::size_t px = batch.pixels[i];
    p[i] = sigmoid(m.logit(fm.pixel(px)));
    y[i] = mask.values[px] ? 1 : 0;
  }

  if (m.spec.loss == LossKind::focal) {
    for (std::size_t i = 0; i < nb; ++i) {
      out.loss += focal_loss(p[i], y[i], m.spec.focal_gamma, m.spec.focal_alpha);
      dz[i] = focal_grad_logit(p[i], y[i], m.spec.focal_gamma, m.spec.focal_alpha) / static_cast<double>(nb);
    }
    out.loss /= static_cast<double>(nb);
  } else {
    double inter = 0, sp = 0, sy = 0;
    for (std::size_t i = 0; i < nb; ++i) {
      inter += p[i] * y[i];
      sp += p[i];
      sy += y[i];
    }
    const double num = 2.0 * inter + kDiceSmooth;
    const double den = sp + sy + kDiceSmooth;
    out.loss = 1.0 - num / den;
    for (std::size_t i = 0; i < nb; ++i) {
      const double dldp = -(2.0 * y[i] * den - num) / (den * den);
      dz[i] = dldp * p[i] * (1.0 - p[i]);
    }
  }

  if (want_grad) {
    for (std::size_t i = 0; i < nb; ++i) {
      if (dz[i] == 0.0) continue;
      const double* raw = fm.pixel(batch.pixels[i]);
      for (std::size_t k = 0; k < nf; ++k) out.grad[k] += dz[i] * (raw[k] - m.feat_mean[k]) / m.feat_std[k];
      out.grad[nf] += dz[i];
    }
  }
  return out;
}

namespace detail {

inline void fit_normalization(BaselineModel& m, const std::vector<const tiles::Tile*>& train) {
  const auto nf = static_cast<std::size_t>(m.feature_count());
  std::vector<double> sum(nf, 0.0), sum_sq(nf, 0.0);
  double count = 0;
  Rng rng(mix_seed(m.spec.seed, 17));
  for (const auto* t : train) {
    const FeatureMap fm = compute_features(t->image, m.spec.feature_radii);
    const PixelBatch b = sample_batch(t->mask, m.spec.batch_pixels, rng);
    for (auto px : b.pixels) {
      const double* f = fm.pixel(px);
      for (std::size_t k = 0; k < nf; ++k) {
        sum[k] += f[k];
        sum_sq[k] += f[k] * f[k];
      }
      count += 1;
    }
  }
  m.feat_mean.assign(nf, 0.0);
  m.feat_std.assign(nf, 1.0);
  for (std::size_t k = 0; k < nf; ++k) {
    m.feat_mean[k] = sum[k] / count;
    const double var = sum_sq[k] / count - m.feat_mean[k] * m.feat_mean[k];
    m.feat_std[k] = var > 1e-12 ? std::sqrt(var) : 1.0;
  }
}

struct EvalSet {
  std::vector<FeatureMap> features;
  std::vector<const Mask*> masks;
  std::vector<PixelBatch> batches;
};

inline EvalSet make_eval_set(const std::vector<const tiles::Tile*>& tiles_in, const SegmenterSpec& spec,
                             std::uint64_t salt) {
  EvalSet e;
  Rng rng(mix_seed(spec.seed, salt));
  for (const auto* t : tiles_in) {
    e.features.push_back(compute_features(t->image, spec.feature_radii));
    e.masks.push_back(&t->mask);
    e.batches.push_back(sample_batch(t->mask, spec.batch_pixels, rng));
  }
  return e;
}

inline double eval_loss(const BaselineModel& m, const EvalSet& e) {
  if (e.features.empty()) return 0.0;
  double total = 0;
  for (std::size_t i = 0; i < e.features.size(); ++i) {
    total += batch_loss(m, e.features[i], *e.masks[i], e.batches[i], false).loss;
  }
  return total / static_cast<double>(e.features.size());
}

}  // namespace detail

/// Mini-batch SGD, one step per training tile per epoch (tile order
/// reshuffled each epoch). History records the loss on a fixed evaluation
/// sample of the train and val tiles after every epoch.
inline BaselineModel train_baseline(const std::vector<tiles::Tile>& train, const std::vector<tiles::Tile>& val,
                                    const SegmenterSpec& spec) {
  spec.validate();
  if (spec.kind != SegmenterKind::baseline) throw Error(ErrorCode::InvalidArgument, "spec.kind must be baseline");
  if (train.empty()) throw Error(ErrorCode::EmptyTrainingSet, "no training tiles");

  std::vector<const tiles::Tile*> train_ptrs, val_ptrs;
  for (const auto& t : train) train_ptrs.push_back(&t);
  for (const auto& t : val) val_ptrs.push_back(&t);

  BaselineModel m = BaselineModel::zeros(spec);
  detail::fit_normalization(m, train_ptrs);
  const detail::EvalSet train_eval = detail::make_eval_set(train_ptrs, spec, 23);
  const detail::EvalSet val_eval = detail::make_eval_set(val_ptrs, spec, 29);

  Rng rng(mix_seed(spec.seed, 31));
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t nf = m.weights.size();

  for (int epoch = 0; epoch < spec.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    for (auto idx : order) {
      const tiles::Tile* tile = &train[idx];
      tiles::Tile augmented;
      if (spec.augment) {
        augmented = tiles::augment(*tile, tiles::random_aug_spec(rng.next(), spec.aug_bounds));
        tile = &augmented;
      }
      const FeatureMap fm = compute_features(tile->image, spec.feature_radii);
      const PixelBatch batch = sample_batch(tile->mask, spec.batch_pixels, rng);
      const LossAndGrad lg = batch_loss(m, fm, tile->mask, batch);
      for (std::size_t k = 0; k < nf; ++k) m.weights[k] -= spec.learning_rate * lg.grad[k];
      m.bias -= spec.learning_rate * lg.grad[nf];
    }
    EpochLoss el;
    el.train = detail::eval_loss(m, train_eval);
    if (!val_eval.features.empty()) {
      el.val = detail::eval_loss(m, val_eval);
      el.has_val = true;
    }
    m.history.push_back(el);
  }
  return m;
}

inline ProbRaster predict(const BaselineModel& m, const RgbImage& image) {
  const FeatureMap fm = compute_features(image, m.spec.feature_radii);
  ProbRaster out(image.width, image.height, image.transform, 0.0f);
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    out.values[i] = static_cast<float>(sigmoid(m.logit(fm.pixel(i))));
  }
  return out;
}

/// Max relative error between the analytic batch-loss gradient and central
/// differences, over every weight and the bias.
inline double finite_diff_check(const BaselineModel& m, const tiles::Tile& tile, double epsilon,
                                std::uint64_t seed = 0) {
  const FeatureMap fm = compute_features(tile.image, m.spec.feature_radii);
  Rng rng(seed);
  const PixelBatch batch = sample_batch(tile.mask, m.spec.batch_pixels, rng);
  const LossAndGrad analytic = batch_loss(m, fm, tile.mask, batch);
  double worst = 0;
  BaselineModel probe = m;
  for (std::size_t k = 0; k <= m.weights.size(); ++k) {
    double& param = k < m.weights.size() ? probe.weights[k] : probe.bias;
    const double orig = param;
    param = orig + epsilon;
    const double up = batch_loss(probe, fm, tile.mask, batch, false).loss;
    param = orig - epsilon;
    const double down = batch_loss(probe, fm, tile.mask, batch, false).loss;
    param = orig;
    const double numeric = (up - down) / (2 * epsilon);
    const double a = analytic.grad[k];
    const double scale = std::max({std::abs(a), std::abs(numeric), 1e-6});
    worst = std::max(worst, std::abs(a - numeric) / scale);
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Segmenter adapter

class Segmenter {
 public:
  virtual ~Segmenter() = default;
  /// `name` identifies the tile for adapters that look predictions up.
  virtual ProbRaster predict(const RgbImage& image, const std::string& name) const = 0;
};

class BaselineSegmenter : public Segmenter {
 public:
  explicit BaselineSegmenter(BaselineModel m) : model_(std::move(m)) {}
  ProbRaster predict(const RgbImage& image, const std::string&) const override { return model::predict(model_, image); }
  const BaselineModel& model() const { return model_; }

 private:
  BaselineModel model_;
};

/// Reads `<dir>/<name>.f32` produced by an external model; it must be
/// co-registered with the tile.
class ExternalRasterSegmenter : public Segmenter {
 public:
  explicit ExternalRasterSegmenter(std::filesystem::path dir) : dir_(std::move(dir)) {}

  ProbRaster predict(const RgbImage& image, const std::string& name) const override {
    ProbRaster r = io::read_prob_raster(dir_ / name);
    if (!same_shape(r, image)) throw Error(ErrorCode::DimensionMismatch, name + ": external raster size differs");
    const auto& a = r.transform;
    const auto& b = image.transform;
    const double tol = 1e-6 * b.pixel_w;
    if (std::abs(a.origin_x - b.origin_x) > tol || std::abs(a.origin_y - b.origin_y) > tol ||
        std::abs(a.pixel_w - b.pixel_w) > tol || std::abs(a.pixel_h - b.pixel_h) > tol) {
      throw Error(ErrorCode::DimensionMismatch, name + ": external raster is not co-registered");
    }
    for (float v : r.values) {
      if (r.is_nodata(v) || std::isnan(v)) continue;
      if (v < 0.0f || v > 1.0f) throw Error(ErrorCode::InvalidArgument, name + ": probability outside [0,1]");
    }
    return r;
  }

 private:
  std::filesystem::path dir_;
};

// ---------------------------------------------------------------------------
// Checkpoints

inline io::json spec_to_json(const SegmenterSpec& s) {
  return {{"kind", s.kind == SegmenterKind::baseline ? "baseline" : "external_raster"},
          {"loss", to_string(s.loss)},
          {"focal_gamma", s.focal_gamma},
          {"focal_alpha", s.focal_alpha},
          {"epochs", s.epochs},
          {"learning_rate", s.learning_rate},
          {"feature_radii", s.feature_radii},
          {"seed", s.seed},
          {"batch_pixels", s.batch_pixels},
          {"augment", s.augment},
          {"aug_bounds",
           {{"brightness", s.aug_bounds.brightness},
            {"contrast", s.aug_bounds.contrast},
            {"arbitrary_angle", s.aug_bounds.arbitrary_angle}}}};
}

inline SegmenterSpec spec_from_json(const io::json& j) {
  SegmenterSpec s;
  s.kind = j.value("kind", std::string{"baseline"}) == "external_raster" ? SegmenterKind::external_raster
                                                                         : SegmenterKind::baseline;
  s.loss = loss_from_string(j.value("loss", std::string{"focal"}));
  s.focal_gamma = j.value("focal_gamma", s.focal_gamma);
  s.focal_alpha = j.value("focal_alpha", s.focal_alpha);
  s.epochs = j.value("epochs", s.epochs);
  s.learning_rate = j.value("learning_rate", s.learning_rate);
  if (j.contains("feature_radii")) s.feature_radii = j["feature_radii"].get<std::vector<int>>();
  s.seed = j.value("seed", s.seed);
  s.batch_pixels = j.value("batch_pixels", s.batch_pixels);
  s.augment = j.value("augment", s.augment);
  if (j.contains("aug_bounds")) {
    const auto& b = j["aug_bounds"];
    s.aug_bounds.brightness = b.value("brightness", s.aug_bounds.brightness);
    s.aug_bounds.contrast = b.value("contrast", s.aug_bounds.contrast);
    s.aug_bounds.arbitrary_angle = b.value("arbitrary_angle", false);
  }
  return s;
}

inline io::json checkpoint_to_json(const BaselineModel& m) {
  io::json hist = io::json::array();
  for (const auto& h : m.history) {
    hist.push_back({{"train", h.train}, {"val", h.has_val ? io::json(h.val) : io::json(nullptr)}});
  }
  return {{"v", 1},
          {"spec", spec_to_json(m.spec)},
          {"feature_radii", m.spec.feature_radii},
          {"weights", m.weights},
          {"bias", m.bias},
          {"normalization", {{"mean", m.feat_mean}, {"std", m.feat_std}}},
          {"history", hist}};
}

inline BaselineModel checkpoint_from_json(const io::json& j) {
  BaselineModel m;
  m.spec = spec_from_json(j.at("spec"));
  m.weights = j.at("weights").get<std::vector<double>>();
  m.bias = j.at("bias").get<double>();
  m.feat_mean = j.at("normalization").at("mean").get<std::vector<double>>();
  m.feat_std = j.at("normalization").at("std").get<std::vector<double>>();
  const auto nf = static_cast<std::size_t>(m.feature_count());
  if (m.weights.size() != nf || m.feat_mean.size() != nf || m.feat_std.size() != nf) {
    throw Error(ErrorCode::Parse, "checkpoint weight count does not match feature_radii");
  }
  if (j.contains("history")) {
    for (const auto& h : j["history"]) {
      EpochLoss el;
      el.train = h.at("train").get<double>();
      if (!h["val"].is_null()) {
        el.val = h["val"].get<double>();
        el.has_val = true;
      }
      m.history.push_back(el);
    }
  }
  return m;
}

}  // namespace moundline::model
