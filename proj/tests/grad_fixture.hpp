#pragma once

// Cross-precision gradient fixture, shared by the double-precision reference
// writer (igan_gradref) and the float acceptance check. Both builds construct
// the same tiny two-domain bundle and the same two training objectives from
// values narrowed through float, so every leaf is exactly representable in
// either precision and the two builds differentiate the same mathematical
// function at the same point. The reference writer stores the point and its
// central-difference gradients in an archive; the float build loads the point
// verbatim (never re-deriving anything through its own arithmetic) and
// compares analytic gradients against the stored differences.

#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "igan/losses.hpp"
#include "igan/nn.hpp"
#include "igan/rng.hpp"

namespace igan::test {

inline GeneratorConfig gradref_gen() {
  GeneratorConfig g;
  g.noise_dim = 3;
  g.out_channels = 2;
  g.out_side = 8;
  g.base_channels = 2;
  g.n_deconv = 2;
  return g;
}

inline DiscriminatorConfig gradref_disc() {
  DiscriminatorConfig d;
  d.in_channels = 2;
  d.in_side = 8;
  d.base_channels = 2;
  d.n_conv = 2;
  d.head_hidden = 4;
  return d;
}

inline ShareConfig gradref_share(bool trio) {
  ShareConfig s;
  s.enabled = trio;
  return s;
}

constexpr uint64_t kGradrefSeed = 71;
constexpr int64_t kGradrefBatch = 3;

// Step and comparison scales, matched to the double-precision total-loss
// suite: the objectives sum several O(1) terms, so (lp - lm) carries absolute
// rounding of order eps * |L| and the step must stay above it, while the
// floor keeps identically-zero-gradient tensors (bias feeding a batch norm)
// from being compared against their own noise.
constexpr double kGradrefH = 3e-7;
constexpr double kGradrefFloor = 1e-3;

inline void narrow_to_float(Tensor& t) {
  for (int64_t i = 0; i < t.numel(); ++i)
    t.at(i) = static_cast<Real>(static_cast<float>(t.at(i)));
}

struct NamedParam {
  std::string name;
  Var var;
};

// Unique parameters under their first visitation name. The visit order is a
// fixed structural walk, so the names agree between the two builds even when
// weight sharing aliases tensors across networks.
inline std::vector<NamedParam> named_unique_params(ModelBundle& b) {
  std::vector<NamedParam> out;
  std::unordered_set<const Node*> seen;
  b.visit_params([&](const std::string& n, Var& v) {
    if (seen.insert(v.node()).second) out.push_back({n, v});
  });
  return out;
}

inline std::vector<NamedParam> named_gen_params(ModelBundle& b) {
  std::vector<NamedParam> out;
  std::unordered_set<const Node*> seen;
  b.visit_gen_params([&](const std::string& n, Var& v) {
    if (seen.insert(v.node()).second) out.push_back({n, v});
  });
  return out;
}

// Everything an objective evaluation depends on besides the parameters. The
// interpolation points for the penalty are frozen data by definition of the
// objective, so they are part of the point, not of the computation.
struct GradrefInputs {
  Tensor z;
  std::vector<Tensor> reals;
  std::vector<Tensor> xhat_par;  // wgan only: interpolates against G_i fakes
  std::vector<Tensor> xhat_int;  // wgan only: interpolates against G_Y fakes
};

inline ModelBundle gradref_bundle(bool trio) {
  ModelBundle b = build_bundle({"a", "b"}, gradref_gen(), gradref_disc(),
                               gradref_share(trio), kGradrefSeed);
  std::unordered_set<const Node*> seen;
  b.visit_params([&](const std::string&, Var& v) {
    if (seen.insert(v.node()).second) narrow_to_float(v.mutable_val());
  });
  return b;
}

// Draws the noise batch and real batches, then (in wgan mode) derives the
// frozen interpolates from the narrowed base parameters. Only the reference
// writer calls this; the float build loads the results from the archive.
inline GradrefInputs gradref_inputs(ModelBundle& b, GanMode mode) {
  GradrefInputs in;
  Rng zr(kGradrefSeed + 1, "z");
  in.z = zr.normal_tensor({kGradrefBatch, gradref_gen().noise_dim});
  narrow_to_float(in.z);
  Rng xr(kGradrefSeed + 2, "reals");
  for (int i = 0; i < 2; ++i) {
    in.reals.push_back(xr.uniform_tensor(
        {kGradrefBatch, gradref_disc().in_channels, gradref_disc().in_side,
         gradref_disc().in_side},
        Real(-1), Real(1)));
    narrow_to_float(in.reals.back());
  }
  if (mode == GanMode::wgan_gp) {
    Rng ea(kGradrefSeed + 3, "eps/a"), eb(kGradrefSeed + 3, "eps/b");
    std::vector<Rng*> eps{&ea, &eb};
    for (int i = 0; i < 2; ++i) {
      Tensor fake = b.gens[static_cast<size_t>(i)]
                        .forward(constant(in.z), true)
                        .val();
      Tensor xh = interpolate_pairs(in.reals[static_cast<size_t>(i)], fake,
                                    *eps[static_cast<size_t>(i)])
                      .val();
      narrow_to_float(xh);
      in.xhat_par.push_back(std::move(xh));
    }
    Tensor fake_y = b.gen_y->forward(constant(in.z), true).val();
    for (int i = 0; i < 2; ++i) {
      Tensor xh = interpolate_pairs(in.reals[static_cast<size_t>(i)], fake_y,
                                    *eps[static_cast<size_t>(i)])
                      .val();
      narrow_to_float(xh);
      in.xhat_int.push_back(std::move(xh));
    }
  }
  return in;
}

// Discriminator-ascent total over two domains plus the weighted intersection
// block, with the wgan penalty evaluated at the frozen interpolates.
inline Var gradref_total_objective(ModelBundle& b, const GradrefInputs& in,
                                   const LossWeights& w, GanMode mode) {
  auto term = [&](size_t i, const Var& fake, const Tensor* xhat) {
    Discriminator& d = b.discs[i];
    Var d_real = d.forward(constant(in.reals[i]));
    Var d_fake = d.forward(fake);
    if (mode == GanMode::standard)
      return gan_value_standard_from_scores(d_real, d_fake);
    Var pen = gradient_penalty([&d](const Var& v) { return d.forward(v); },
                               Var::leaf(*xhat, true));
    return wgan_gp_loss(d_real, d_fake, pen, w.lambda_gp);
  };
  Var fa = b.gens[0].forward(constant(in.z), true);
  Var fb = b.gens[1].forward(constant(in.z), true);
  Var fy = b.gen_y->forward(constant(in.z), true);
  const Tensor* xa = in.xhat_par.empty() ? nullptr : &in.xhat_par[0];
  const Tensor* xb = in.xhat_par.empty() ? nullptr : &in.xhat_par[1];
  const Tensor* ya = in.xhat_int.empty() ? nullptr : &in.xhat_int[0];
  const Tensor* yb = in.xhat_int.empty() ? nullptr : &in.xhat_int[1];
  Var par = add(term(0, fa, xa), term(1, fb, xb));
  Var inter = add(term(0, fy, ya), term(1, fy, yb));
  return add(par, scale(inter, w.lambda_intersect));
}

// Minimization-form generator-family objective: non-saturating in standard
// mode, negative critic mean in wgan mode, plus the intersection block and
// (for the trio) the similarity term. Mirrors the trainer's generator step.
inline Var gradref_gen_objective(ModelBundle& b, const GradrefInputs& in,
                                 const LossWeights& w, GanMode mode,
                                 bool trio) {
  auto gen_value = [&](const Var& scores) {
    if (mode == GanMode::standard) return mean_all(softplus(neg(scores)));
    return neg(mean_all(scores));
  };
  Var zc = constant(in.z);
  Var fa = b.gens[0].forward(zc, true);
  Var fb = b.gens[1].forward(zc, true);
  Var fy = b.gen_y->forward(zc, true);
  Var obj = add(gen_value(b.discs[0].forward(fa)),
                gen_value(b.discs[1].forward(fb)));
  Var iobj = add(gen_value(b.discs[0].forward(fy)),
                 gen_value(b.discs[1].forward(fy)));
  obj = add(obj, scale(iobj, w.lambda_intersect));
  if (trio)
    obj = add(obj, scale(similarity_loss(fa, fb, fy), w.lambda_similarity));
  return obj;
}

}  // namespace igan::test
