#pragma once

#include <functional>
#include <string>
#include <vector>

#include "igan/nn.hpp"
#include "igan/ops.hpp"
#include "igan/rng.hpp"

// Adversarial objectives. All "value" quantities below are written in ascent
// form: the discriminator side maximizes them, generators minimize (their
// part of) them. The trainer negates as needed.
//
// Two modes:
//  - standard: value = E[log D(x)] + E[log(1 - D(G(z)))], computed from raw
//    scores through numerically stable softplus identities,
//  - wgan_gp: value = E[D(x)] - E[D(G(z))] - lambda_gp * penalty, where the
//    penalty pushes the critic's input-gradient norm towards 1 along random
//    interpolates between real and fake samples.
//
// The interpolated points are constructed from plain tensors (detached), so
// parameter gradients of the penalty are second derivatives of the critic
// only; generators receive gradients exclusively through their score terms.

namespace igan {

enum class GanMode { standard, wgan_gp };

inline GanMode gan_mode_from_string(const std::string& s) {
  if (s == "standard") return GanMode::standard;
  if (s == "wgan_gp") return GanMode::wgan_gp;
  fail(ErrorKind::usage, "unknown gan mode '", s, "'");
}

inline const char* to_string(GanMode m) {
  return m == GanMode::standard ? "standard" : "wgan_gp";
}

struct LossWeights {
  std::vector<Real> alpha;  // per-domain weights; empty means all ones
  Real lambda_intersect = Real(1);
  Real lambda_gp = Real(10);
  Real lambda_similarity = Real(10);

  std::vector<Real> alpha_for(int64_t n) const {
    if (alpha.empty()) return std::vector<Real>(static_cast<size_t>(n), Real(1));
    check(static_cast<int64_t>(alpha.size()) == n, ErrorKind::usage,
          "loss weights: got ", alpha.size(), " alpha entries for ", n,
          " domains");
    return alpha;
  }
};

// Scalar summary of one training iteration, written to the metrics log.
struct LossReport {
  std::vector<double> parallel;        // alpha_i * L_GAN(X_i, G_i, D_i)
  double intersection = 0;             // sum_i alpha_i * L_GAN(X_i, G_Y, D_i)
  double total = 0;                    // sum(parallel) + lambda_I * intersection
  double similarity = 0;               // trio variant only
  std::vector<double> gp_parallel;     // raw penalty per domain (wgan mode)
  std::vector<double> gp_intersection;
  std::vector<double> score_real;      // mean discriminator score per domain
  std::vector<double> score_fake;
  std::vector<double> score_fake_y;
  double gen_objective = 0;  // value minimized by the generator family
};

// ---- building blocks ----------------------------------------------------

// Classic saturating value from probabilities (both in the open interval
// (0,1)): mean(log r) + mean(log(1 - f)). With r = f = 0.5 this is -2 ln 2.
inline Var gan_loss_standard(const Var& d_real_prob, const Var& d_fake_prob) {
  for (const Var* v : {&d_real_prob, &d_fake_prob})
    for (int64_t i = 0; i < v->numel(); ++i)
      check(v->val().at(i) > Real(0) && v->val().at(i) < Real(1),
            ErrorKind::numeric,
            "gan_loss_standard: probabilities must lie strictly in (0,1), got ",
            v->val().at(i));
  return add(mean_all(log_(d_real_prob)),
             mean_all(log_(add_scalar(neg(d_fake_prob), Real(1)))));
}

// Same value computed from raw scores: log sigmoid(r) = -softplus(-r) and
// log(1 - sigmoid(f)) = -softplus(f). Safe for scores of any magnitude.
inline Var gan_value_standard_from_scores(const Var& real_scores,
                                          const Var& fake_scores) {
  return neg(add(mean_all(softplus(neg(real_scores))),
                 mean_all(softplus(fake_scores))));
}

// Per-image random interpolates x_hat = eps*real + (1-eps)*fake, eps~U[0,1).
// Inputs are tensors on purpose: the result is a fresh differentiable leaf,
// not connected to whatever graph produced the fake batch.
inline Var interpolate_pairs(const Tensor& real, const Tensor& fake,
                             Rng& rng) {
  check_same_shape(real, fake, "interpolate_pairs");
  check(real.rank() >= 1, ErrorKind::numeric, "interpolate_pairs: rank");
  const int64_t B = real.dim(0), stride = real.numel() / real.dim(0);
  Tensor x = real;
  for (int64_t b = 0; b < B; ++b) {
    const Real eps = static_cast<Real>(rng.uniform());
    for (int64_t i = 0; i < stride; ++i) {
      const int64_t k = b * stride + i;
      x.at(k) = eps * real.at(k) + (Real(1) - eps) * fake.at(k);
    }
  }
  return Var::leaf(std::move(x), /*requires_grad=*/true);
}

using CriticFn = std::function<Var(const Var&)>;

// mean over the batch of (||grad_x critic(x_hat)||_2 - 1)^2. The critic must
// score samples independently (true here: layer norm, no batch norm), which
// lets one backward pass from the summed scores recover every per-image
// input gradient at once. The small epsilon under the square root keeps the
// value finite for an identically-flat critic.
inline Var gradient_penalty(const CriticFn& critic, const Var& x_hat) {
  Var scores = critic(x_hat);
  check(scores.val().rank() == 1 && scores.shape()[0] == x_hat.shape()[0],
        ErrorKind::numeric, "gradient_penalty: critic must map [B,...] to [B]");
  GradMap gm = backward(sum_all(scores), {x_hat});
  Var g = grad_of(gm, x_hat);
  check(g.defined(), ErrorKind::numeric,
        "gradient_penalty: critic does not depend on its input");
  Shape per(x_hat.shape().size(), 1);
  per[0] = x_hat.shape()[0];
  Var norm = sqrt_(add_scalar(reduce_sum_to(mul(g, g), per), Real(1e-12)));
  Var d = add_scalar(norm, Real(-1));
  return mean_all(mul(d, d));
}

// Critic objective value: mean(real) - mean(fake) - lambda_gp * penalty.
inline Var wgan_gp_loss(const Var& d_real, const Var& d_fake,
                        const Var& penalty, Real lambda_gp) {
  return sub(sub(mean_all(d_real), mean_all(d_fake)),
             scale(penalty, lambda_gp));
}

// ---- per-domain composition ---------------------------------------------

struct GanTerm {
  Var value;           // ascent-form L_GAN for this (domain, generator) pair
  Var penalty;         // wgan mode only
  double real_mean = 0, fake_mean = 0;
};

// L_GAN(X_i, G, D_i) where `fake` is a generator output kept in the graph,
// so the same value serves discriminator and generator gradients.
inline GanTerm gan_term(const Discriminator& disc, const Var& real,
                        const Var& fake, GanMode mode, Real lambda_gp,
                        Rng& gp_rng) {
  GanTerm t;
  Var d_real = disc.forward(real);
  Var d_fake = disc.forward(fake);
  t.real_mean = mean_all(d_real).val().at(0);
  t.fake_mean = mean_all(d_fake).val().at(0);
  if (mode == GanMode::standard) {
    t.value = gan_value_standard_from_scores(d_real, d_fake);
  } else {
    Var x_hat = interpolate_pairs(real.val(), fake.val(), gp_rng);
    t.penalty = gradient_penalty(
        [&disc](const Var& x) { return disc.forward(x); }, x_hat);
    t.value = wgan_gp_loss(d_real, d_fake, t.penalty, lambda_gp);
  }
  return t;
}

inline void check_loss_inputs(ModelBundle& bundle,
                              const std::vector<Tensor>& reals,
                              GanMode mode, const std::vector<Rng*>& gp_rngs) {
  const int64_t n = bundle.n();
  check(static_cast<int64_t>(reals.size()) == n, ErrorKind::usage,
        "losses: got ", reals.size(), " real batches for ", n, " domains");
  if (mode == GanMode::wgan_gp)
    check(static_cast<int64_t>(gp_rngs.size()) == n, ErrorKind::usage,
          "losses: wgan mode needs one interpolation stream per domain");
}

// alpha_i * L_GAN(X_i, G_i, D_i) for every domain, all on one shared z batch.
inline std::vector<Var> parallel_losses(ModelBundle& bundle,
                                        const std::vector<Tensor>& reals,
                                        const Tensor& z,
                                        const LossWeights& weights,
                                        GanMode mode,
                                        const std::vector<Rng*>& gp_rngs,
                                        bool train,
                                        std::vector<GanTerm>* terms = nullptr) {
  check_loss_inputs(bundle, reals, mode, gp_rngs);
  const auto alpha = weights.alpha_for(bundle.n());
  std::vector<Var> out;
  for (int64_t i = 0; i < bundle.n(); ++i) {
    Var fake = bundle.gens[static_cast<size_t>(i)].forward(constant(z), train);
    Rng dummy;
    GanTerm t = gan_term(bundle.discs[static_cast<size_t>(i)],
                         constant(reals[static_cast<size_t>(i)]), fake, mode,
                         weights.lambda_gp,
                         mode == GanMode::wgan_gp ? *gp_rngs[static_cast<size_t>(i)]
                                                  : dummy);
    out.push_back(scale(t.value, alpha[static_cast<size_t>(i)]));
    if (terms) terms->push_back(t);
  }
  return out;
}

// sum_i alpha_i * L_GAN(X_i, G_Y, D_i): one intersection batch judged by
// every discriminator against its own domain's real data.
inline Var intersection_loss(ModelBundle& bundle,
                             const std::vector<Tensor>& reals, const Tensor& z,
                             const LossWeights& weights, GanMode mode,
                             const std::vector<Rng*>& gp_rngs, bool train,
                             std::vector<GanTerm>* terms = nullptr) {
  check_loss_inputs(bundle, reals, mode, gp_rngs);
  const auto alpha = weights.alpha_for(bundle.n());
  Var fake_y = bundle.gen_y->forward(constant(z), train);
  Var sum;
  for (int64_t i = 0; i < bundle.n(); ++i) {
    Rng dummy;
    GanTerm t = gan_term(bundle.discs[static_cast<size_t>(i)],
                         constant(reals[static_cast<size_t>(i)]), fake_y, mode,
                         weights.lambda_gp,
                         mode == GanMode::wgan_gp ? *gp_rngs[static_cast<size_t>(i)]
                                                  : dummy);
    Var term = scale(t.value, alpha[static_cast<size_t>(i)]);
    sum = sum.defined() ? add(sum, term) : term;
    if (terms) terms->push_back(t);
  }
  return sum;
}

// Full objective: sum_i parallel_i + lambda_intersect * intersection.
inline Var total_loss(const std::vector<Var>& parallel, const Var& intersection,
                      const LossWeights& weights) {
  check(!parallel.empty(), ErrorKind::usage, "total_loss: no parallel terms");
  Var sum = parallel[0];
  for (size_t i = 1; i < parallel.size(); ++i) sum = add(sum, parallel[i]);
  check(intersection.defined(), ErrorKind::usage,
        "total_loss: undefined intersection term");
  return add(sum, scale(intersection, weights.lambda_intersect));
}

// Mean absolute element difference between each parallel output and the
// intersection output, summed over the two domains (trio variant, n = 2).
inline Var similarity_loss(const Var& g1, const Var& g2, const Var& gy) {
  check_same_shape(g1.val(), gy.val(), "similarity_loss");
  check_same_shape(g2.val(), gy.val(), "similarity_loss");
  return add(mean_all(abs_(sub(g1, gy))), mean_all(abs_(sub(g2, gy))));
}

}  // namespace igan
