#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>
#include <zlib.h>

#include <json.hpp>

#include "igan/adam.hpp"
#include "igan/nn.hpp"
#include "igan/ops.hpp"
#include "igan/squares.hpp"

// Evaluation: embeddings, Gaussian fits, the Fréchet distance between
// feature distributions, and predicate-based scores. All statistics run in
// double precision regardless of the training scalar.

namespace igan {

struct GaussianFit {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;

  int64_t dim() const { return mean.size(); }
};

// Fits mean and unbiased covariance to [N, d] features, N >= 2. The
// covariance is symmetrized on construction so downstream eigensolves see an
// exactly symmetric matrix.
inline GaussianFit fit_gaussian(const Tensor& feats) {
  check(feats.rank() == 2, ErrorKind::usage,
        "fit_gaussian expects [N, d] features, got ", shape_str(feats.shape()));
  const int64_t n = feats.dim(0), d = feats.dim(1);
  check(n >= 2, ErrorKind::usage,
        "fit_gaussian needs at least 2 samples, got ", n);
  Eigen::MatrixXd x(n, d);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < d; ++j) x(i, j) = double(feats.at(i * d + j));
  GaussianFit g;
  g.mean = x.colwise().mean();
  const Eigen::MatrixXd centered = x.rowwise() - g.mean.transpose();
  g.cov = (centered.transpose() * centered) / double(n - 1);
  g.cov = ((g.cov + g.cov.transpose()) / 2.0).eval();
  return g;
}

namespace detail {

// Symmetric PSD square root by eigendecomposition. Eigenvalues may dip
// slightly negative from rounding; anything below -1e-8 means the input was
// not a covariance matrix at all.
inline Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m, const char* what) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
  check(eig.info() == Eigen::Success, ErrorKind::numeric,
        "eigendecomposition failed for ", what);
  Eigen::VectorXd lam = eig.eigenvalues();
  for (int64_t i = 0; i < lam.size(); ++i) {
    check(lam(i) >= -1e-8, ErrorKind::numeric, what,
          " has a significantly negative eigenvalue: ", lam(i));
    lam(i) = std::sqrt(std::max(lam(i), 0.0));
  }
  return eig.eigenvectors() * lam.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace detail

// Fréchet distance between two Gaussians:
//   |mu_a - mu_b|^2 + tr(Ca) + tr(Cb) - 2 tr((Ca^1/2 Cb Ca^1/2)^1/2)
// computed with symmetric eigendecompositions only, so the trace of the
// matrix square root never goes through a non-symmetric solver.
inline double frechet_distance(const GaussianFit& a, const GaussianFit& b) {
  check(a.dim() == b.dim(), ErrorKind::usage,
        "fréchet distance needs equal dimensions, got ", a.dim(), " vs ",
        b.dim());
  const Eigen::MatrixXd ra = detail::psd_sqrt(a.cov, "first covariance");
  Eigen::MatrixXd inner = ra * b.cov * ra;
  inner = ((inner + inner.transpose()) / 2.0).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(inner);
  check(eig.info() == Eigen::Success, ErrorKind::numeric,
        "eigendecomposition failed for the mixed covariance");
  double tr_sqrt = 0;
  for (int64_t i = 0; i < eig.eigenvalues().size(); ++i) {
    const double lam = eig.eigenvalues()(i);
    check(lam >= -1e-8, ErrorKind::numeric,
          "mixed covariance has a significantly negative eigenvalue: ", lam);
    tr_sqrt += std::sqrt(std::max(lam, 0.0));
  }
  const double d2 = (a.mean - b.mean).squaredNorm() + a.cov.trace() +
                    b.cov.trace() - 2.0 * tr_sqrt;
  return std::max(d2, 0.0);
}

// ---- embeddings ----------------------------------------------------------

// Average-pools [N, C, S, S] images down to 8x8 and flattens to [N, C*64].
// Cheap, training-free embedding for distribution distances.
inline Tensor embed_raw(const Tensor& images) {
  check(images.rank() == 4, ErrorKind::usage,
        "embed_raw expects [N, C, S, S] images");
  const int64_t n = images.dim(0), c = images.dim(1), s = images.dim(2);
  check(images.dim(3) == s && s % 8 == 0, ErrorKind::usage,
        "embed_raw needs square images with side divisible by 8, got ",
        shape_str(images.shape()));
  const int64_t cell = s / 8, dim = c * 64;
  Tensor out({n, dim});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t ch = 0; ch < c; ++ch)
      for (int64_t by = 0; by < 8; ++by)
        for (int64_t bx = 0; bx < 8; ++bx) {
          double acc = 0;
          for (int64_t y = by * cell; y < (by + 1) * cell; ++y)
            for (int64_t x = bx * cell; x < (bx + 1) * cell; ++x)
              acc += double(images.at(images.idx4(i, ch, y, x)));
          out.at(i * dim + ch * 64 + by * 8 + bx) =
              Real(acc / double(cell * cell));
        }
  return out;
}

// ---- probe classifier ----------------------------------------------------

struct ProbeConfig {
  int64_t classes = 10;
  int64_t image_side = 32;    // input is [N, 1, side, side]
  int64_t base_channels = 16;
  int64_t batch = 64;
  Real lr = Real(1e-3);
  int64_t max_epochs = 8;
  double holdout_fraction = 0.1;
  double accuracy_gate = 0.95;
  uint64_t seed = 7;
};

// Small supervised classifier (two strided convs, flattened feature map,
// one dense head) whose penultimate activations double as a learned
// embedding. Scoring refuses to run until its held-out accuracy clears the
// configured gate, so a badly trained probe can never quietly bless a model.
class Probe {
 public:
  explicit Probe(const ProbeConfig& cfg)
      : cfg_(cfg),
        rng_(cfg.seed, "probe/init"),
        c1_(rng_, 1, cfg.base_channels, 4, 2, 1),
        c2_(rng_, cfg.base_channels, cfg.base_channels * 2, 4, 2, 1),
        fc_(rng_, cfg.base_channels * 2 * (cfg.image_side / 4) *
                      (cfg.image_side / 4),
            cfg.classes) {
    check(cfg.classes >= 2, ErrorKind::usage, "probe needs >= 2 classes");
    check(cfg.image_side >= 8 && cfg.image_side % 4 == 0, ErrorKind::usage,
          "probe image side must be a multiple of 4 and >= 8");
  }

  const ProbeConfig& config() const { return cfg_; }
  int64_t feature_dim() const {
    const int64_t s = cfg_.image_side / 4;
    return cfg_.base_channels * 2 * s * s;
  }
  double held_out_accuracy() const { return held_out_accuracy_; }

  // Penultimate features: conv -> leaky relu -> conv -> leaky relu ->
  // flatten. Flattening (rather than pooling) keeps the spatial layout the
  // classifier needs to tell content classes apart.
  Var features(const Var& x) const {
    check(x.shape().size() == 4 && x.shape()[1] == 1 &&
              x.shape()[2] == cfg_.image_side &&
              x.shape()[3] == cfg_.image_side,
          ErrorKind::usage, "probe expects [N, 1, ", cfg_.image_side, ", ",
          cfg_.image_side, "] images, got ", shape_str(x.shape()));
    Var h = leaky_relu(c1_.forward(x), kLeakySlope);
    h = leaky_relu(c2_.forward(h), kLeakySlope);
    const Shape& s = h.shape();
    return reshape(h, {s[0], s[1] * s[2] * s[3]});
  }

  Var logits(const Var& x) const { return fc_.forward(features(x)); }

  void visit_params(const ParamVisitor& f) {
    c1_.visit_params("probe/conv1", f);
    c2_.visit_params("probe/conv2", f);
    fc_.visit_params("probe/fc", f);
  }

  std::vector<int> predict(const Tensor& images) const {
    const int64_t n = images.dim(0);
    std::vector<int> out(static_cast<size_t>(n));
    for (int64_t at = 0; at < n; at += cfg_.batch) {
      const int64_t take = std::min(cfg_.batch, n - at);
      const Var lg = logits(constant(slice_batch(images, at, take)));
      for (int64_t i = 0; i < take; ++i) {
        int best = 0;
        for (int64_t k = 1; k < cfg_.classes; ++k)
          if (lg.val().at(i * cfg_.classes + k) >
              lg.val().at(i * cfg_.classes + best))
            best = static_cast<int>(k);
        out[static_cast<size_t>(at + i)] = best;
      }
    }
    return out;
  }

  // Penultimate embedding of a whole image set, computed in batches.
  Tensor embed(const Tensor& images) const {
    const int64_t n = images.dim(0), d = feature_dim();
    Tensor out({n, d});
    for (int64_t at = 0; at < n; at += cfg_.batch) {
      const int64_t take = std::min(cfg_.batch, n - at);
      const Var f = features(constant(slice_batch(images, at, take)));
      for (int64_t i = 0; i < take; ++i)
        for (int64_t j = 0; j < d; ++j)
          out.at((at + i) * d + j) = f.val().at(i * d + j);
    }
    return out;
  }

  void set_held_out_accuracy(double acc) { held_out_accuracy_ = acc; }

  static Tensor slice_batch(const Tensor& images, int64_t at, int64_t take) {
    const int64_t c = images.dim(1), s = images.dim(2);
    const int64_t plane = c * s * images.dim(3);
    Tensor out({take, c, s, images.dim(3)});
    for (int64_t j = 0; j < take * plane; ++j)
      out.at(j) = images.at(at * plane + j);
    return out;
  }

 private:
  ProbeConfig cfg_;
  Rng rng_;
  Conv c1_, c2_;
  Dense fc_;
  double held_out_accuracy_ = 0.0;
};

// Mean cross entropy from logits. The row max is subtracted as a graph
// constant before the log-sum-exp; shifting logits by a constant leaves the
// softmax gradient untouched, so the gradient stays exact while the exp can
// never overflow.
inline Var cross_entropy_with_logits(const Var& logits,
                                     const std::vector<uint8_t>& labels,
                                     int64_t classes) {
  const int64_t b = logits.shape()[0], k = logits.shape()[1];
  check(k == classes && b == static_cast<int64_t>(labels.size()),
        ErrorKind::usage, "logit/label shape mismatch");
  Tensor mx({b, 1});
  Tensor onehot({b, k});
  for (int64_t i = 0; i < b; ++i) {
    check(labels[static_cast<size_t>(i)] < classes, ErrorKind::data,
          "label ", int(labels[static_cast<size_t>(i)]), " out of range");
    Real m = logits.val().at(i * k);
    for (int64_t j = 1; j < k; ++j)
      m = std::max(m, logits.val().at(i * k + j));
    mx.at(i) = m;
    onehot.at(i * k + labels[static_cast<size_t>(i)]) = Real(1);
  }
  const Var m = constant(mx);
  const Var shifted = sub(logits, broadcast_to(m, logits.shape()));
  const Var lse = add(m, log_(reduce_sum_to(exp_(shifted), {b, 1})));
  const Var picked = reduce_sum_to(mul(logits, constant(onehot)), {b, 1});
  return mean_all(sub(lse, picked));
}

// Trains a probe on labeled images with a deterministic internal split
// (`holdout_fraction` of a seeded shuffle is held out). Training stops at
// the first epoch whose held-out accuracy clears the gate, or after
// `max_epochs`; the measured accuracy is recorded on the returned probe
// either way.
inline Probe train_probe(const Tensor& images,
                         const std::vector<uint8_t>& labels,
                         const ProbeConfig& cfg) {
  check(images.rank() == 4 && images.dim(0) >= 2, ErrorKind::usage,
        "train_probe expects [N >= 2, 1, S, S] images");
  const int64_t n = images.dim(0);
  check(n == static_cast<int64_t>(labels.size()), ErrorKind::data,
        "image/label count mismatch: ", n, " vs ", labels.size());

  Rng split_rng(cfg.seed, "probe/split");
  std::vector<int64_t> order(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  for (int64_t i = n - 1; i > 0; --i)
    std::swap(order[static_cast<size_t>(i)],
              order[static_cast<size_t>(split_rng.below(
                  static_cast<uint64_t>(i + 1)))]);
  const int64_t held = std::max<int64_t>(
      1, static_cast<int64_t>(std::llround(double(n) * cfg.holdout_fraction)));
  check(held < n, ErrorKind::usage, "holdout fraction leaves no training data");
  const std::vector<int64_t> hold_idx(order.begin(), order.begin() + held);
  std::vector<int64_t> train_idx(order.begin() + held, order.end());
  check(static_cast<int64_t>(train_idx.size()) >= cfg.batch, ErrorKind::usage,
        "training split smaller than one batch");

  Probe probe(cfg);
  AdamFamily opt;
  probe.visit_params([&](const std::string& name, Var& v) {
    opt.add(name, v);
  });

  auto gather = [&](const std::vector<int64_t>& idx, int64_t at, int64_t take,
                    Tensor& xs, std::vector<uint8_t>& ys) {
    const int64_t plane = images.dim(1) * images.dim(2) * images.dim(3);
    xs = Tensor({take, images.dim(1), images.dim(2), images.dim(3)});
    ys.resize(static_cast<size_t>(take));
    for (int64_t i = 0; i < take; ++i) {
      const int64_t src = idx[static_cast<size_t>(at + i)];
      for (int64_t j = 0; j < plane; ++j)
        xs.at(i * plane + j) = images.at(src * plane + j);
      ys[static_cast<size_t>(i)] = labels[static_cast<size_t>(src)];
    }
  };

  auto held_accuracy = [&]() {
    Tensor xs;
    std::vector<uint8_t> ys;
    gather(hold_idx, 0, held, xs, ys);
    const std::vector<int> pred = probe.predict(xs);
    int64_t hit = 0;
    for (int64_t i = 0; i < held; ++i)
      hit += pred[static_cast<size_t>(i)] == int(ys[static_cast<size_t>(i)]);
    return double(hit) / double(held);
  };

  Rng order_rng(cfg.seed, "probe/order");
  for (int64_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    for (int64_t i = static_cast<int64_t>(train_idx.size()) - 1; i > 0; --i)
      std::swap(train_idx[static_cast<size_t>(i)],
                train_idx[static_cast<size_t>(order_rng.below(
                    static_cast<uint64_t>(i + 1)))]);
    const int64_t steps = static_cast<int64_t>(train_idx.size()) / cfg.batch;
    for (int64_t s = 0; s < steps; ++s) {
      Tensor xs;
      std::vector<uint8_t> ys;
      gather(train_idx, s * cfg.batch, cfg.batch, xs, ys);
      Var loss = cross_entropy_with_logits(probe.logits(constant(xs)), ys,
                                           cfg.classes);
      check(std::isfinite(double(loss.val().at(0))), ErrorKind::numeric,
            "probe training loss became non-finite");
      const GradMap grads = backward(loss, opt.params());
      opt.step(cfg.lr, grads);
    }
    probe.set_held_out_accuracy(held_accuracy());
    if (probe.held_out_accuracy() >= cfg.accuracy_gate) break;
  }
  return probe;
}

// ---- scores --------------------------------------------------------------

// Fraction of images whose estimated scene satisfies every predicate. Each
// image is estimated exactly once; an image with no detectable square fails
// every predicate. An empty predicate list is vacuously satisfied.
inline double attribute_score(const Tensor& images,
                              const std::vector<AttributePredicate>& preds) {
  check(images.rank() == 4 && images.dim(1) == 3, ErrorKind::usage,
        "attribute_score expects [N, 3, S, S] images, got ",
        shape_str(images.shape()));
  const int64_t n = images.dim(0);
  check(n > 0, ErrorKind::usage, "cannot score an empty batch");
  if (preds.empty()) return 1.0;
  const int64_t plane = images.dim(1) * images.dim(2) * images.dim(3);
  int64_t hits = 0;
  for (int64_t i = 0; i < n; ++i) {
    Tensor img({images.dim(1), images.dim(2), images.dim(3)});
    for (int64_t j = 0; j < plane; ++j) img.at(j) = images.at(i * plane + j);
    const auto est = estimate_scene(img);
    if (!est) continue;
    bool all = true;
    for (const auto& p : preds)
      if (!p.holds(*est)) {
        all = false;
        break;
      }
    hits += all;
  }
  return double(hits) / double(n);
}

// Fraction of images the probe classifies into an accepted class. Refuses to
// score when the probe's held-out accuracy is below its gate.
inline double content_score(const Probe& probe, const Tensor& images,
                            const std::vector<uint8_t>& accepted) {
  check(probe.held_out_accuracy() >= probe.config().accuracy_gate,
        ErrorKind::usage, "probe held-out accuracy ",
        probe.held_out_accuracy(), " is below the ",
        probe.config().accuracy_gate,
        " gate; train the probe before scoring");
  const int64_t n = images.dim(0);
  check(n > 0, ErrorKind::usage, "cannot score an empty batch");
  if (accepted.empty()) return 0.0;
  const std::vector<int> pred = probe.predict(images);
  int64_t hits = 0;
  for (int p : pred)
    for (uint8_t a : accepted)
      if (p == int(a)) {
        ++hits;
        break;
      }
  return double(hits) / double(n);
}

// ---- metric records ------------------------------------------------------

// Every metric value is emitted alongside the configuration that produced it
// plus a short digest of that configuration, so logged numbers can never be
// mistaken for a run with different settings.
inline nlohmann::json metric_record(const std::string& metric, double value,
                                    const nlohmann::json& config) {
  const std::string canon = config.dump();
  const uint32_t crc =
      crc32(0L, reinterpret_cast<const Bytef*>(canon.data()),
            static_cast<uInt>(canon.size()));
  char digest[16];
  std::snprintf(digest, sizeof digest, "%08x", crc);
  return nlohmann::json{{"metric", metric},
                        {"value", value},
                        {"config", config},
                        {"config_digest", digest}};
}

}  // namespace igan
