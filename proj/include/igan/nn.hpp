#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "igan/conv.hpp"
#include "igan/ops.hpp"
#include "igan/rng.hpp"

// Network definitions.
//
// A bundle holds n per-domain generators, one intersection generator that is
// judged by every discriminator, and n discriminators. Weight sharing (the
// trio variant) is plain aliasing: shared blocks are the same heap objects,
// so shared parameters are the same graph leaves and gradient fan-out
// accumulation does the bookkeeping for free.
//
// Layer recipe, generator (input z:[B,noise_dim]):
//   head:  dense -> reshape [B,c0,4,4] -> batchnorm -> relu
//   up_k:  deconv 4x4 stride 2 pad 1 (doubles the side) -> batchnorm -> relu
//   out:   deconv 3x3 stride 1 pad 1 -> tanh
// with c0 = base * 2^(n_deconv-1), halving per up block down to `base`.
//
// Discriminator (input x:[B,C,S,S]):
//   conv_k: conv 4x4 stride 2 pad 1 -> layernorm (from the 2nd conv on)
//           -> leaky relu 0.2, channels base * 2^k
//   head:   flatten -> dense -> leaky relu -> dense -> scalar score
// Layer norm rather than batch norm keeps samples independent, which the
// gradient-penalty path relies on.

namespace igan {

using ParamVisitor = std::function<void(const std::string&, Var&)>;
using StateVisitor = std::function<void(const std::string&, Tensor&)>;

constexpr Real kInitStd = Real(0.02);
constexpr Real kLeakySlope = Real(0.2);
constexpr Real kNormEps = Real(1e-5);
constexpr Real kBnMomentum = Real(0.9);

// ---- basic layers -------------------------------------------------------

struct Dense {
  Var W, b;  // W:[in,out], b:[1,out]

  Dense(Rng& rng, int64_t in, int64_t out)
      : W(parameter(rng.normal_tensor({in, out}, 0.0, kInitStd))),
        b(parameter(Tensor::zeros({1, out}))) {}

  Var forward(const Var& x) const {
    return add_bcast(matmul(x, W), b);
  }

  void visit_params(const std::string& p, const ParamVisitor& f) {
    f(p + "/W", W);
    f(p + "/b", b);
  }
};

struct Conv {
  Var W, b;  // W:[out,in,k,k], b:[1,out,1,1]
  int64_t stride, pad;

  Conv(Rng& rng, int64_t cin, int64_t cout, int64_t k, int64_t s, int64_t p)
      : W(parameter(rng.normal_tensor({cout, cin, k, k}, 0.0, kInitStd))),
        b(parameter(Tensor::zeros({1, cout, 1, 1}))),
        stride(s),
        pad(p) {}

  Var forward(const Var& x) const {
    return add_bcast(conv2d(x, W, stride, pad), b);
  }

  void visit_params(const std::string& p, const ParamVisitor& f) {
    f(p + "/W", W);
    f(p + "/b", b);
  }
};

struct Deconv {
  Var W, b;  // W:[in,out,k,k], b:[1,out,1,1]
  int64_t stride, pad;

  Deconv(Rng& rng, int64_t cin, int64_t cout, int64_t k, int64_t s, int64_t p)
      : W(parameter(rng.normal_tensor({cin, cout, k, k}, 0.0, kInitStd))),
        b(parameter(Tensor::zeros({1, cout, 1, 1}))),
        stride(s),
        pad(p) {}

  Var forward(const Var& x) const {
    return add_bcast(conv2d_transpose(x, W, stride, pad), b);
  }

  void visit_params(const std::string& p, const ParamVisitor& f) {
    f(p + "/W", W);
    f(p + "/b", b);
  }
};

struct BatchNorm2d {
  Var gamma, beta;        // [1,C,1,1]
  Tensor run_mean, run_var;  // running averages used in eval mode

  explicit BatchNorm2d(int64_t c)
      : gamma(parameter(Tensor::full({1, c, 1, 1}, Real(1)))),
        beta(parameter(Tensor::zeros({1, c, 1, 1}))),
        run_mean(Tensor::zeros({1, c, 1, 1})),
        run_var(Tensor::full({1, c, 1, 1}, Real(1))) {}

  Var forward(const Var& x, bool train) {
    const Shape& s = x.shape();
    const Shape stat_shape{1, s[1], 1, 1};
    const Real inv_n =
        Real(1) / static_cast<Real>(s[0] * s[2] * s[3]);
    Var m, v, xc;
    if (train) {
      m = scale(reduce_sum_to(x, stat_shape), inv_n);
      xc = sub_bcast(x, m);
      v = scale(reduce_sum_to(mul(xc, xc), stat_shape), inv_n);
      for (int64_t i = 0; i < run_mean.numel(); ++i) {
        run_mean.at(i) = kBnMomentum * run_mean.at(i) +
                         (Real(1) - kBnMomentum) * m.val().at(i);
        run_var.at(i) = kBnMomentum * run_var.at(i) +
                        (Real(1) - kBnMomentum) * v.val().at(i);
      }
    } else {
      m = constant(run_mean);
      v = constant(run_var);
      xc = sub_bcast(x, m);
    }
    Var inv = recip(sqrt_(add_scalar(v, kNormEps)));
    Var y = mul_bcast(xc, inv);
    return add_bcast(mul_bcast(y, gamma), beta);
  }

  void visit_params(const std::string& p, const ParamVisitor& f) {
    f(p + "/gamma", gamma);
    f(p + "/beta", beta);
  }
  void visit_state(const std::string& p, const StateVisitor& f) {
    f(p + "/run_mean", run_mean);
    f(p + "/run_var", run_var);
  }
};

struct LayerNorm2d {
  Var gamma, beta;  // per-channel affine, [1,C,1,1]

  explicit LayerNorm2d(int64_t c)
      : gamma(parameter(Tensor::full({1, c, 1, 1}, Real(1)))),
        beta(parameter(Tensor::zeros({1, c, 1, 1}))) {}

  Var forward(const Var& x) const {
    const Shape& s = x.shape();
    const Shape stat_shape{s[0], 1, 1, 1};
    const Real inv_n = Real(1) / static_cast<Real>(s[1] * s[2] * s[3]);
    Var m = scale(reduce_sum_to(x, stat_shape), inv_n);
    Var xc = sub_bcast(x, m);
    Var v = scale(reduce_sum_to(mul(xc, xc), stat_shape), inv_n);
    Var inv = recip(sqrt_(add_scalar(v, kNormEps)));
    Var y = mul_bcast(xc, inv);
    return add_bcast(mul_bcast(y, gamma), beta);
  }

  void visit_params(const std::string& p, const ParamVisitor& f) {
    f(p + "/gamma", gamma);
    f(p + "/beta", beta);
  }
};

// ---- configs ------------------------------------------------------------

struct GeneratorConfig {
  int64_t noise_dim = 32;
  int64_t out_channels = 3;
  int64_t out_side = 32;
  int64_t base_channels = 16;
  int64_t n_deconv = 4;  // head + (n_deconv-1) upsampling blocks + out block

  void validate() const {
    check(noise_dim > 0 && out_channels > 0 && base_channels > 0 &&
              n_deconv >= 1,
          ErrorKind::usage, "generator config: all sizes must be positive");
    const int64_t side = int64_t(4) << (n_deconv - 1);
    check(out_side == side, ErrorKind::usage,
          "generator config: out_side must be 4*2^(n_deconv-1) = ", side,
          ", got ", out_side);
  }
  // Blocks: head (index 0), ups (1..n_deconv-1), out (n_deconv).
  int64_t n_blocks() const { return n_deconv + 1; }
};

struct DiscriminatorConfig {
  int64_t in_channels = 3;
  int64_t in_side = 32;
  int64_t base_channels = 16;
  int64_t n_conv = 3;
  int64_t head_hidden = 128;

  void validate() const {
    check(in_channels > 0 && in_side > 0 && base_channels > 0 && n_conv >= 1 &&
              head_hidden > 0,
          ErrorKind::usage, "discriminator config: all sizes must be positive");
    check(in_side % (int64_t(1) << n_conv) == 0 &&
              (in_side >> n_conv) >= 1,
          ErrorKind::usage, "discriminator config: in_side ", in_side,
          " not divisible by 2^n_conv");
  }
  // Blocks: convs (0..n_conv-1), fc head (n_conv), score head (n_conv+1).
  int64_t n_blocks() const { return n_conv + 2; }
};

struct ShareConfig {
  bool enabled = false;
  int64_t gen_prefix = 2;    // leading generator blocks shared with all
  int64_t disc_private = 2;  // leading discriminator blocks kept private

  void validate(const GeneratorConfig& g, const DiscriminatorConfig& d) const {
    if (!enabled) return;
    check(gen_prefix >= 0 && gen_prefix <= g.n_blocks(), ErrorKind::usage,
          "share config: gen_prefix out of range");
    check(disc_private >= 0 && disc_private <= d.n_blocks(), ErrorKind::usage,
          "share config: disc_private out of range");
  }
};

// ---- generator ----------------------------------------------------------

namespace blocks {

struct GenHead {
  Dense fc;
  BatchNorm2d bn;
  int64_t c0;

  GenHead(Rng& rng, const GeneratorConfig& cfg)
      : fc(rng, cfg.noise_dim,
           (cfg.base_channels << (cfg.n_deconv - 1)) * 16),
        bn(cfg.base_channels << (cfg.n_deconv - 1)),
        c0(cfg.base_channels << (cfg.n_deconv - 1)) {}

  Var forward(const Var& z, bool train) {
    Var h = fc.forward(z);
    h = reshape(h, {z.shape()[0], c0, 4, 4});
    return relu(bn.forward(h, train));
  }
  void visit_params(const std::string& p, const ParamVisitor& f) {
    fc.visit_params(p + "/fc", f);
    bn.visit_params(p + "/bn", f);
  }
  void visit_state(const std::string& p, const StateVisitor& f) {
    bn.visit_state(p + "/bn", f);
  }
};

struct GenUp {
  Deconv dc;
  BatchNorm2d bn;

  GenUp(Rng& rng, int64_t cin, int64_t cout)
      : dc(rng, cin, cout, 4, 2, 1), bn(cout) {}

  Var forward(const Var& x, bool train) {
    return relu(bn.forward(dc.forward(x), train));
  }
  void visit_params(const std::string& p, const ParamVisitor& f) {
    dc.visit_params(p + "/dc", f);
    bn.visit_params(p + "/bn", f);
  }
  void visit_state(const std::string& p, const StateVisitor& f) {
    bn.visit_state(p + "/bn", f);
  }
};

struct GenOut {
  Deconv dc;

  GenOut(Rng& rng, int64_t cin, int64_t cout) : dc(rng, cin, cout, 3, 1, 1) {}

  Var forward(const Var& x) const { return tanh_(dc.forward(x)); }
  void visit_params(const std::string& p, const ParamVisitor& f) {
    dc.visit_params(p + "/dc", f);
  }
};

}  // namespace blocks

class Generator {
 public:
  // Builds a generator, aliasing the first `share_prefix` blocks of
  // `share_src` instead of creating them when sharing is requested.
  Generator(const GeneratorConfig& cfg, Rng& rng,
            const Generator* share_src = nullptr, int64_t share_prefix = 0)
      : cfg_(cfg) {
    cfg.validate();
    check(share_src != nullptr || share_prefix == 0, ErrorKind::usage,
          "generator: share_prefix without a source network");
    int64_t block = 0;
    head_ = (block < share_prefix) ? share_src->head_
                                   : std::make_shared<blocks::GenHead>(rng, cfg);
    ++block;
    int64_t c = cfg.base_channels << (cfg.n_deconv - 1);
    for (int64_t k = 1; k < cfg.n_deconv; ++k, ++block) {
      if (block < share_prefix) {
        ups_.push_back(share_src->ups_[static_cast<size_t>(k - 1)]);
      } else {
        ups_.push_back(std::make_shared<blocks::GenUp>(rng, c, c / 2));
      }
      c /= 2;
    }
    out_ = (block < share_prefix)
               ? share_src->out_
               : std::make_shared<blocks::GenOut>(rng, c, cfg.out_channels);
  }

  Var forward(const Var& z, bool train) {
    check(z.val().rank() == 2 && z.shape()[1] == cfg_.noise_dim,
          ErrorKind::numeric, "generator: noise must be [B,", cfg_.noise_dim,
          "], got ", shape_str(z.shape()));
    Var h = head_->forward(z, train);
    for (auto& up : ups_) h = up->forward(h, train);
    return out_->forward(h);
  }

  const GeneratorConfig& config() const { return cfg_; }

  void visit_params(const std::string& p, const ParamVisitor& f) {
    head_->visit_params(p + "/head", f);
    for (size_t k = 0; k < ups_.size(); ++k)
      ups_[k]->visit_params(p + "/up" + std::to_string(k + 1), f);
    out_->visit_params(p + "/out", f);
  }
  void visit_state(const std::string& p, const StateVisitor& f) {
    head_->visit_state(p + "/head", f);
    for (size_t k = 0; k < ups_.size(); ++k)
      ups_[k]->visit_state(p + "/up" + std::to_string(k + 1), f);
  }

 private:
  GeneratorConfig cfg_;
  std::shared_ptr<blocks::GenHead> head_;
  std::vector<std::shared_ptr<blocks::GenUp>> ups_;
  std::shared_ptr<blocks::GenOut> out_;
};

// ---- discriminator ------------------------------------------------------

namespace blocks {

struct DiscConv {
  Conv conv;
  std::optional<LayerNorm2d> ln;

  DiscConv(Rng& rng, int64_t cin, int64_t cout, bool with_ln)
      : conv(rng, cin, cout, 4, 2, 1) {
    if (with_ln) ln.emplace(cout);
  }

  Var forward(const Var& x) const {
    Var h = conv.forward(x);
    if (ln) h = ln->forward(h);
    return leaky_relu(h, kLeakySlope);
  }
  void visit_params(const std::string& p, const ParamVisitor& f) {
    conv.visit_params(p + "/conv", f);
    if (ln) ln->visit_params(p + "/ln", f);
  }
};

struct DiscHead {
  Dense fc;
  bool activated;

  DiscHead(Rng& rng, int64_t in, int64_t out, bool act)
      : fc(rng, in, out), activated(act) {}

  Var forward(const Var& x) const {
    Var h = fc.forward(x);
    return activated ? leaky_relu(h, kLeakySlope) : h;
  }
  void visit_params(const std::string& p, const ParamVisitor& f) {
    fc.visit_params(p + "/fc", f);
  }
};

}  // namespace blocks

class Discriminator {
 public:
  // `share_private` leading blocks stay private; the rest alias `share_src`.
  Discriminator(const DiscriminatorConfig& cfg, Rng& rng,
                const Discriminator* share_src = nullptr,
                int64_t share_private = 0)
      : cfg_(cfg) {
    cfg.validate();
    const int64_t total = cfg.n_blocks();
    const bool sharing = share_src != nullptr;
    auto shared = [&](int64_t block) { return sharing && block >= share_private; };
    int64_t c = cfg.in_channels, side = cfg.in_side;
    for (int64_t k = 0; k < cfg.n_conv; ++k) {
      const int64_t cout = cfg.base_channels << k;
      if (shared(k)) {
        convs_.push_back(share_src->convs_[static_cast<size_t>(k)]);
      } else {
        convs_.push_back(
            std::make_shared<blocks::DiscConv>(rng, c, cout, /*ln=*/k > 0));
      }
      c = cout;
      side /= 2;
    }
    flat_dim_ = c * side * side;
    fc1_ = shared(total - 2)
               ? share_src->fc1_
               : std::make_shared<blocks::DiscHead>(rng, flat_dim_,
                                                    cfg.head_hidden, true);
    fc2_ = shared(total - 1)
               ? share_src->fc2_
               : std::make_shared<blocks::DiscHead>(rng, cfg.head_hidden,
                                                    int64_t(1), false);
  }

  // Raw score (logit in standard mode, critic value in wgan mode), [B].
  Var forward(const Var& x) const {
    check(x.val().rank() == 4 && x.shape()[1] == cfg_.in_channels &&
              x.shape()[2] == cfg_.in_side && x.shape()[3] == cfg_.in_side,
          ErrorKind::numeric, "discriminator: bad input shape ",
          shape_str(x.shape()));
    Var h = x;
    for (auto& cb : convs_) h = cb->forward(h);
    h = reshape(h, {x.shape()[0], flat_dim_});
    h = fc1_->forward(h);
    h = fc2_->forward(h);
    return reshape(h, {x.shape()[0]});
  }

  const DiscriminatorConfig& config() const { return cfg_; }

  void visit_params(const std::string& p, const ParamVisitor& f) {
    for (size_t k = 0; k < convs_.size(); ++k)
      convs_[k]->visit_params(p + "/conv" + std::to_string(k + 1), f);
    fc1_->visit_params(p + "/fc1", f);
    fc2_->visit_params(p + "/fc2", f);
  }

 private:
  DiscriminatorConfig cfg_;
  std::vector<std::shared_ptr<blocks::DiscConv>> convs_;
  std::shared_ptr<blocks::DiscHead> fc1_;
  std::shared_ptr<blocks::DiscHead> fc2_;
  int64_t flat_dim_ = 0;
};

// ---- bundle -------------------------------------------------------------

// The intersection generator is listed under this pseudo-domain name in
// parameter names, rng stream names and reports.
inline const char* kIntersectionName = "intersection";

struct ModelBundle {
  std::vector<std::string> domains;
  std::vector<Generator> gens;   // one per domain
  std::vector<Discriminator> discs;  // one per domain
  std::shared_ptr<Generator> gen_y;  // intersection generator

  int64_t n() const { return static_cast<int64_t>(domains.size()); }

  // Stable enumeration: intersection generator first (it owns shared
  // generator blocks), then per-domain generators, then discriminators.
  void visit_gen_params(const ParamVisitor& f) {
    gen_y->visit_params(std::string("gen/") + kIntersectionName, f);
    for (size_t i = 0; i < gens.size(); ++i)
      gens[i].visit_params("gen/" + domains[i], f);
  }
  void visit_disc_params(const ParamVisitor& f) {
    for (size_t i = 0; i < discs.size(); ++i)
      discs[i].visit_params("disc/" + domains[i], f);
  }
  void visit_params(const ParamVisitor& f) {
    visit_gen_params(f);
    visit_disc_params(f);
  }
  void visit_state(const StateVisitor& f) {
    gen_y->visit_state(std::string("gen/") + kIntersectionName, f);
    for (size_t i = 0; i < gens.size(); ++i)
      gens[i].visit_state("gen/" + domains[i], f);
  }
};

// Builds all networks. Initialization draws come from per-network streams
// keyed by (seed, domain name), so the same domain always initializes
// identically no matter which other domains are present -- this is what
// makes a joint run comparable to independent per-domain runs.
inline ModelBundle build_bundle(const std::vector<std::string>& domains,
                                const GeneratorConfig& gcfg,
                                const DiscriminatorConfig& dcfg,
                                const ShareConfig& share, uint64_t seed) {
  check(!domains.empty(), ErrorKind::usage, "build_bundle: no domains");
  for (const auto& d : domains)
    check(d != kIntersectionName, ErrorKind::usage,
          "build_bundle: domain name '", d, "' is reserved");
  gcfg.validate();
  dcfg.validate();
  share.validate(gcfg, dcfg);
  if (share.enabled)
    check(domains.size() == 2, ErrorKind::usage,
          "build_bundle: weight sharing is defined for exactly 2 domains");

  ModelBundle b;
  b.domains = domains;
  // Reserve up front: later emplacements alias pointers into these vectors.
  b.gens.reserve(domains.size());
  b.discs.reserve(domains.size());
  {
    Rng rng(seed, std::string("init/gen/") + kIntersectionName);
    b.gen_y = std::make_shared<Generator>(gcfg, rng);
  }
  for (const auto& d : domains) {
    Rng rng(seed, "init/gen/" + d);
    if (share.enabled) {
      b.gens.emplace_back(gcfg, rng, b.gen_y.get(), share.gen_prefix);
    } else {
      b.gens.emplace_back(gcfg, rng);
    }
  }
  for (size_t i = 0; i < domains.size(); ++i) {
    Rng rng(seed, "init/disc/" + domains[i]);
    if (share.enabled && i > 0) {
      b.discs.emplace_back(dcfg, rng, &b.discs[0], share.disc_private);
    } else {
      b.discs.emplace_back(dcfg, rng);
    }
  }
  return b;
}

inline Var gen_forward(Generator& g, const Var& z, bool train) {
  return g.forward(z, train);
}
inline Var disc_forward(const Discriminator& d, const Var& x) {
  return d.forward(x);
}

// Evenly spaced linear interpolations between two noise vectors, as rows.
inline Tensor interpolate_noise(const Tensor& za, const Tensor& zb,
                                int64_t steps) {
  check(za.same_shape(zb) && za.rank() == 1, ErrorKind::usage,
        "interpolate_noise: endpoints must be equal-length vectors");
  check(steps >= 2, ErrorKind::usage, "interpolate_noise: need >= 2 steps");
  const int64_t d = za.dim(0);
  Tensor out({steps, d});
  for (int64_t s = 0; s < steps; ++s) {
    const Real t = static_cast<Real>(s) / static_cast<Real>(steps - 1);
    for (int64_t i = 0; i < d; ++i)
      out.at(s * d + i) = (Real(1) - t) * za.at(i) + t * zb.at(i);
  }
  return out;
}

}  // namespace igan
