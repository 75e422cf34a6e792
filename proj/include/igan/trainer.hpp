#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "igan/adam.hpp"
#include "igan/archive.hpp"
#include "igan/dataset.hpp"
#include "igan/losses.hpp"
#include "igan/nn.hpp"

namespace igan {

struct TrainConfig {
  int64_t iterations = 2000;  // must be even: the decay ramp spans the 2nd half
  int64_t batch = 32;
  Real lr0 = Real(2e-4);
  Real beta1 = Real(0.5);
  Real beta2 = Real(0.999);
  Real adam_eps = Real(1e-8);
  int64_t n_critic = 0;  // 0 = resolve from mode (5 for wgan_gp, 1 otherwise)
  GanMode mode = GanMode::wgan_gp;
  bool trio = false;  // adds the similarity term to the generator objective
  uint64_t seed = 1;
  int64_t sample_every = 0;      // 0 = never (cadence acted on by the caller)
  int64_t checkpoint_every = 0;  // 0 = final only

  int64_t resolved_n_critic() const {
    if (n_critic > 0) return n_critic;
    return mode == GanMode::wgan_gp ? 5 : 1;
  }

  void validate() const {
    check(iterations >= 0 && iterations % 2 == 0, ErrorKind::usage,
          "iterations must be even and >= 0 (the decay ramp needs a well-",
          "defined second half), got ", iterations);
    check(batch > 0, ErrorKind::usage, "batch size must be positive");
    check(lr0 > Real(0), ErrorKind::usage, "learning rate must be positive");
    check(beta1 >= Real(0) && beta1 < Real(1) && beta2 >= Real(0) &&
              beta2 < Real(1),
          ErrorKind::usage, "adam betas must lie in [0, 1)");
    check(n_critic >= 0, ErrorKind::usage, "n_critic must be >= 0");
    check(sample_every >= 0 && checkpoint_every >= 0, ErrorKind::usage,
          "cadences must be >= 0");
  }
};

// Constant for the first half of training, then a linear ramp to zero across
// the second half: lr_at(iterations / 2) == lr0, and the final iteration runs
// at lr0 / (iterations / 2).
inline Real lr_at(const TrainConfig& cfg, int64_t iter) {
  check(iter >= 0 && iter < cfg.iterations, ErrorKind::usage,
        "iteration ", iter, " outside [0, ", cfg.iterations, ")");
  const int64_t half = cfg.iterations / 2;
  if (iter < half) return cfg.lr0;
  return cfg.lr0 * (Real(1) - Real(iter - half) / Real(half));
}

// ---- JSON round-trips for every config the checkpoint must carry ---------

inline nlohmann::json to_json(const GeneratorConfig& c) {
  return {{"noise_dim", c.noise_dim},
          {"out_channels", c.out_channels},
          {"out_side", c.out_side},
          {"base_channels", c.base_channels},
          {"n_deconv", c.n_deconv}};
}

inline GeneratorConfig gen_config_from_json(const nlohmann::json& j) {
  GeneratorConfig c;
  c.noise_dim = j.at("noise_dim").get<int64_t>();
  c.out_channels = j.at("out_channels").get<int64_t>();
  c.out_side = j.at("out_side").get<int64_t>();
  c.base_channels = j.at("base_channels").get<int64_t>();
  c.n_deconv = j.at("n_deconv").get<int64_t>();
  return c;
}

inline nlohmann::json to_json(const DiscriminatorConfig& c) {
  return {{"in_channels", c.in_channels},
          {"in_side", c.in_side},
          {"base_channels", c.base_channels},
          {"n_conv", c.n_conv},
          {"head_hidden", c.head_hidden}};
}

inline DiscriminatorConfig disc_config_from_json(const nlohmann::json& j) {
  DiscriminatorConfig c;
  c.in_channels = j.at("in_channels").get<int64_t>();
  c.in_side = j.at("in_side").get<int64_t>();
  c.base_channels = j.at("base_channels").get<int64_t>();
  c.n_conv = j.at("n_conv").get<int64_t>();
  c.head_hidden = j.at("head_hidden").get<int64_t>();
  return c;
}

inline nlohmann::json to_json(const ShareConfig& c) {
  return {{"enabled", c.enabled},
          {"gen_prefix", c.gen_prefix},
          {"disc_private", c.disc_private}};
}

inline ShareConfig share_config_from_json(const nlohmann::json& j) {
  ShareConfig c;
  c.enabled = j.at("enabled").get<bool>();
  c.gen_prefix = j.at("gen_prefix").get<int64_t>();
  c.disc_private = j.at("disc_private").get<int64_t>();
  return c;
}

inline nlohmann::json to_json(const LossWeights& w) {
  return {{"alpha", w.alpha},
          {"lambda_intersect", double(w.lambda_intersect)},
          {"lambda_gp", double(w.lambda_gp)},
          {"lambda_similarity", double(w.lambda_similarity)}};
}

inline LossWeights loss_weights_from_json(const nlohmann::json& j) {
  LossWeights w;
  w.alpha = j.at("alpha").get<std::vector<Real>>();
  w.lambda_intersect = Real(j.at("lambda_intersect").get<double>());
  w.lambda_gp = Real(j.at("lambda_gp").get<double>());
  w.lambda_similarity = Real(j.at("lambda_similarity").get<double>());
  return w;
}

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"iterations", c.iterations},
          {"batch", c.batch},
          {"lr0", double(c.lr0)},
          {"beta1", double(c.beta1)},
          {"beta2", double(c.beta2)},
          {"adam_eps", double(c.adam_eps)},
          {"n_critic", c.n_critic},
          {"mode", to_string(c.mode)},
          {"trio", c.trio},
          {"seed", c.seed},
          {"sample_every", c.sample_every},
          {"checkpoint_every", c.checkpoint_every}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.iterations = j.at("iterations").get<int64_t>();
  c.batch = j.at("batch").get<int64_t>();
  c.lr0 = Real(j.at("lr0").get<double>());
  c.beta1 = Real(j.at("beta1").get<double>());
  c.beta2 = Real(j.at("beta2").get<double>());
  c.adam_eps = Real(j.at("adam_eps").get<double>());
  c.n_critic = j.at("n_critic").get<int64_t>();
  c.mode = gan_mode_from_string(j.at("mode").get<std::string>());
  c.trio = j.at("trio").get<bool>();
  c.seed = j.at("seed").get<uint64_t>();
  c.sample_every = j.at("sample_every").get<int64_t>();
  c.checkpoint_every = j.at("checkpoint_every").get<int64_t>();
  return c;
}

inline nlohmann::json report_json(const LossReport& r, int64_t iteration,
                                  double lr) {
  return {{"iteration", iteration},
          {"lr", lr},
          {"parallel", r.parallel},
          {"intersection", r.intersection},
          {"total", r.total},
          {"similarity", r.similarity},
          {"gp_parallel", r.gp_parallel},
          {"gp_intersection", r.gp_intersection},
          {"score_real", r.score_real},
          {"score_fake", r.score_fake},
          {"score_fake_y", r.score_fake_y},
          {"gen_objective", r.gen_objective}};
}

// ---- the training loop ----------------------------------------------------
//
// Stream discipline (every random draw comes from a named substream of the
// run seed, so runs are reproducible and resumable):
//   z/disc    one shared noise batch per critic iteration, used by every
//             generator in that iteration
//   z/gen     one shared noise batch per generator update
//   data/<d>  real-batch index and augmentation draws for domain <d>
//   eps/<d>   interpolation coefficients for domain <d>'s penalty; consumed
//             by the parallel term first, then by the intersection term
//   sample    reserved for preview/evaluation draws so they never disturb
//             the training streams
//
// Terms with a zero weight are skipped structurally, not just multiplied by
// zero: with lambda_intersect == 0 (and the similarity term off) the
// intersection generator is never run, so a joint run and independent
// single-domain runs see byte-identical draw sequences.
class Trainer {
 public:
  using IterFn = std::function<void(Trainer&, const LossReport&)>;

  Trainer(std::vector<ImageSet> data, const GeneratorConfig& gcfg,
          const DiscriminatorConfig& dcfg, const ShareConfig& share,
          const LossWeights& weights, const TrainConfig& tcfg)
      : data_(std::move(data)),
        gcfg_(gcfg),
        dcfg_(dcfg),
        share_(share),
        weights_(weights),
        cfg_(tcfg) {
    cfg_.validate();
    check(!data_.empty(), ErrorKind::usage, "trainer needs at least 1 domain");
    for (auto& d : data_) domains_.push_back(d.name);
    weights_.alpha = weights_.alpha_for(static_cast<int64_t>(domains_.size()));
    if (cfg_.trio)
      check(domains_.size() == 2, ErrorKind::usage,
            "the trio variant is defined for exactly 2 domains, got ",
            domains_.size());
    for (auto& d : data_) {
      check(d.images.rank() == 4, ErrorKind::data, "domain '", d.name,
            "' images must be [N,C,H,W]");
      check(d.images.dim(1) == dcfg_.in_channels &&
                d.images.dim(2) == dcfg_.in_side &&
                d.images.dim(3) == dcfg_.in_side,
            ErrorKind::data, "domain '", d.name, "' images are ",
            shape_str(d.images.shape()), " but the discriminator expects [N,",
            dcfg_.in_channels, ",", dcfg_.in_side, ",", dcfg_.in_side, "]");
    }
    check(gcfg_.out_channels == dcfg_.in_channels &&
              gcfg_.out_side == dcfg_.in_side,
          ErrorKind::usage, "generator output and discriminator input differ");
    bundle_ = build_bundle(domains_, gcfg_, dcfg_, share_, cfg_.seed);
    opt_gen_ = make_gen_optimizer(bundle_, cfg_.beta1, cfg_.beta2, cfg_.adam_eps);
    opt_disc_ =
        make_disc_optimizer(bundle_, cfg_.beta1, cfg_.beta2, cfg_.adam_eps);
    add_stream("z/disc");
    add_stream("z/gen");
    add_stream("sample");
    for (auto& d : domains_) {
      add_stream("data/" + d);
      add_stream("eps/" + d);
    }
  }

  int64_t iteration() const { return iter_; }
  const TrainConfig& config() const { return cfg_; }
  const LossWeights& weights() const { return weights_; }
  const std::vector<std::string>& domains() const { return domains_; }
  ModelBundle& bundle() { return bundle_; }
  AdamFamily& gen_optimizer() { return opt_gen_; }
  AdamFamily& disc_optimizer() { return opt_disc_; }

  Rng& stream(const std::string& name) {
    auto it = streams_.find(name);
    check(it != streams_.end(), ErrorKind::usage, "unknown stream '", name,
          "'");
    return it->second;
  }

  // One full iteration: n_critic discriminator updates, then one joint
  // update of the whole generator family.
  LossReport step() {
    const Real lr = lr_at(cfg_, iter_);
    LossReport rep;
    const int64_t nc = cfg_.resolved_n_critic();
    for (int64_t c = 0; c < nc; ++c) {
      rep = LossReport{};
      disc_step(lr, rep);
    }
    gen_step(lr, rep);
    ++iter_;
    return rep;
  }

  void run(const IterFn& after_iter = {}) {
    while (iter_ < cfg_.iterations) {
      LossReport rep = step();
      if (after_iter) after_iter(*this, rep);
    }
  }

  // Evaluation-mode samples; `which` is a domain name or the intersection
  // generator's reserved name.
  Tensor generate(const std::string& which, int64_t count, Rng& rng) {
    return generate_from(which, rng.normal_tensor({count, gcfg_.noise_dim}));
  }

  Tensor generate_from(const std::string& which, const Tensor& z) {
    return generator(which).forward(constant(z), false).val();
  }

  Generator& generator(const std::string& which) {
    if (which == kIntersectionName) return *bundle_.gen_y;
    for (size_t i = 0; i < domains_.size(); ++i)
      if (domains_[i] == which) return bundle_.gens[i];
    fail(ErrorKind::usage, "no generator named '", which, "'");
  }

  // ---- checkpointing ------------------------------------------------------

  void save_checkpoint(const std::string& path) {
    Archive a;
    a.descriptor["kind"] = "igan-checkpoint";
    a.descriptor["iteration"] = iter_;
    a.descriptor["domains"] = domains_;
    a.descriptor["gen"] = to_json(gcfg_);
    a.descriptor["disc"] = to_json(dcfg_);
    a.descriptor["share"] = to_json(share_);
    a.descriptor["weights"] = to_json(weights_);
    a.descriptor["train"] = to_json(cfg_);
    a.descriptor["adam"] = {{"gen_t", opt_gen_.step_count()},
                            {"disc_t", opt_disc_.step_count()}};
    nlohmann::json rng = nlohmann::json::object();
    for (auto& [name, s] : streams_) rng[name] = s.save_state();
    a.descriptor["rng"] = rng;

    std::unordered_set<const Node*> seen;
    bundle_.visit_params([&](const std::string& n, Var& v) {
      if (seen.insert(v.node()).second) a.put(n, v.val());
    });
    std::unordered_set<const Tensor*> seen_state;
    bundle_.visit_state([&](const std::string& n, Tensor& t) {
      if (seen_state.insert(&t).second) a.put(n, t);
    });
    for (size_t i = 0; i < opt_gen_.params().size(); ++i) {
      a.put("adam/" + opt_gen_.names()[i] + "/m", opt_gen_.moment1(i));
      a.put("adam/" + opt_gen_.names()[i] + "/v", opt_gen_.moment2(i));
    }
    for (size_t i = 0; i < opt_disc_.params().size(); ++i) {
      a.put("adam/" + opt_disc_.names()[i] + "/m", opt_disc_.moment1(i));
      a.put("adam/" + opt_disc_.names()[i] + "/v", opt_disc_.moment2(i));
    }
    a.save(path);
  }

  static Trainer load_checkpoint(const std::string& path,
                                 std::vector<ImageSet> data) {
    Archive a = Archive::load(path);
    const nlohmann::json& d = a.descriptor;
    check(d.value("kind", std::string()) == "igan-checkpoint", ErrorKind::io,
          "'", path, "' is an archive but not a training checkpoint");
    const auto domains = d.at("domains").get<std::vector<std::string>>();
    check(domains.size() == data.size(), ErrorKind::usage,
          "checkpoint has ", domains.size(), " domains but ", data.size(),
          " image sets were supplied");
    for (size_t i = 0; i < domains.size(); ++i)
      check(domains[i] == data[i].name, ErrorKind::usage,
            "domain order mismatch: checkpoint says '", domains[i],
            "', data says '", data[i].name, "'");

    Trainer t(std::move(data), gen_config_from_json(d.at("gen")),
              disc_config_from_json(d.at("disc")),
              share_config_from_json(d.at("share")),
              loss_weights_from_json(d.at("weights")),
              train_config_from_json(d.at("train")));
    t.iter_ = d.at("iteration").get<int64_t>();

    std::unordered_set<const Node*> seen;
    t.bundle_.visit_params([&](const std::string& n, Var& v) {
      if (!seen.insert(v.node()).second) return;
      Tensor stored = a.get(n);
      check_same_shape(stored, v.val(), ("checkpoint parameter " + n).c_str());
      v.mutable_val() = std::move(stored);
    });
    std::unordered_set<const Tensor*> seen_state;
    t.bundle_.visit_state([&](const std::string& n, Tensor& ten) {
      if (!seen_state.insert(&ten).second) return;
      Tensor stored = a.get(n);
      check_same_shape(stored, ten, ("checkpoint state " + n).c_str());
      ten = std::move(stored);
    });
    auto load_opt = [&](AdamFamily& opt, const char* t_key) {
      opt.set_step_count(d.at("adam").at(t_key).get<int64_t>());
      for (size_t i = 0; i < opt.params().size(); ++i) {
        opt.moment1(i) = a.get("adam/" + opt.names()[i] + "/m");
        opt.moment2(i) = a.get("adam/" + opt.names()[i] + "/v");
      }
    };
    load_opt(t.opt_gen_, "gen_t");
    load_opt(t.opt_disc_, "disc_t");
    for (auto& [name, s] : t.streams_)
      s.load_state(d.at("rng").at(name).get<std::vector<uint64_t>>());
    return t;
  }

 private:
  void add_stream(const std::string& name) {
    streams_.emplace(name, Rng(cfg_.seed, name));
  }

  void ensure_finite(const Var& obj, const char* phase) {
    check(obj.val().all_finite(), ErrorKind::numeric, phase,
          " objective became non-finite at iteration ", iter_,
          "; aborting before the update");
  }

  // Minimization-form generator value for one discriminator's scores:
  // non-saturating -mean(log sigmoid(s)) in standard mode, -mean(s) in
  // wgan mode.
  Var gen_value(const Var& scores) const {
    if (cfg_.mode == GanMode::standard)
      return mean_all(softplus(neg(scores)));
    return neg(mean_all(scores));
  }

  void disc_step(Real lr, LossReport& rep) {
    const int64_t n = bundle_.n();
    Tensor z =
        stream("z/disc").normal_tensor({cfg_.batch, gcfg_.noise_dim});
    std::vector<Tensor> reals;
    std::vector<Rng*> eps;
    reals.reserve(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
      reals.push_back(next_batch(data_[static_cast<size_t>(i)], cfg_.batch,
                                 stream("data/" + domains_[static_cast<size_t>(i)])));
      eps.push_back(&stream("eps/" + domains_[static_cast<size_t>(i)]));
    }

    std::vector<GanTerm> tpar, tint;
    std::vector<Var> par = parallel_losses(bundle_, reals, z, weights_,
                                           cfg_.mode, eps, true, &tpar);
    Var ascent;
    if (weights_.lambda_intersect != Real(0)) {
      Var inter = intersection_loss(bundle_, reals, z, weights_, cfg_.mode,
                                    eps, true, &tint);
      rep.intersection = double(inter.val().at(0));
      ascent = total_loss(par, inter, weights_);
    } else {
      ascent = par[0];
      for (size_t i = 1; i < par.size(); ++i) ascent = add(ascent, par[i]);
    }
    rep.total = double(ascent.val().at(0));
    for (int64_t i = 0; i < n; ++i) {
      const GanTerm& t = tpar[static_cast<size_t>(i)];
      rep.parallel.push_back(double(par[static_cast<size_t>(i)].val().at(0)));
      rep.score_real.push_back(t.real_mean);
      rep.score_fake.push_back(t.fake_mean);
      if (t.penalty.defined())
        rep.gp_parallel.push_back(double(t.penalty.val().at(0)));
      if (!tint.empty()) {
        rep.score_fake_y.push_back(tint[static_cast<size_t>(i)].fake_mean);
        if (tint[static_cast<size_t>(i)].penalty.defined())
          rep.gp_intersection.push_back(
              double(tint[static_cast<size_t>(i)].penalty.val().at(0)));
      }
    }

    // Discriminators ascend the GAN value, so they minimize its negation.
    Var obj = neg(ascent);
    ensure_finite(obj, "discriminator");
    GradMap g = backward(obj, opt_disc_.params());
    opt_disc_.step(lr, g);
  }

  void gen_step(Real lr, LossReport& rep) {
    const int64_t n = bundle_.n();
    const auto& alpha = weights_.alpha;
    Var zc = constant(
        stream("z/gen").normal_tensor({cfg_.batch, gcfg_.noise_dim}));

    std::vector<Var> fakes;
    fakes.reserve(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i)
      fakes.push_back(bundle_.gens[static_cast<size_t>(i)].forward(zc, true));
    const bool want_similarity =
        cfg_.trio && weights_.lambda_similarity != Real(0);
    const bool need_gy =
        weights_.lambda_intersect != Real(0) || want_similarity;
    Var fake_y;
    if (need_gy) fake_y = bundle_.gen_y->forward(zc, true);

    Var obj;
    auto fold = [&obj](const Var& term) {
      obj = obj.defined() ? add(obj, term) : term;
    };
    for (int64_t i = 0; i < n; ++i)
      fold(scale(gen_value(bundle_.discs[static_cast<size_t>(i)].forward(
                     fakes[static_cast<size_t>(i)])),
                 alpha[static_cast<size_t>(i)]));
    if (weights_.lambda_intersect != Real(0)) {
      Var iobj;
      for (int64_t i = 0; i < n; ++i) {
        Var term = scale(
            gen_value(bundle_.discs[static_cast<size_t>(i)].forward(fake_y)),
            alpha[static_cast<size_t>(i)]);
        iobj = iobj.defined() ? add(iobj, term) : term;
      }
      fold(scale(iobj, weights_.lambda_intersect));
    }
    if (want_similarity) {
      Var sim = similarity_loss(fakes[0], fakes[1], fake_y);
      rep.similarity = double(sim.val().at(0));
      fold(scale(sim, weights_.lambda_similarity));
    }

    ensure_finite(obj, "generator");
    rep.gen_objective = double(obj.val().at(0));
    GradMap g = backward(obj, opt_gen_.params());
    opt_gen_.step(lr, g);
  }

  std::vector<ImageSet> data_;
  std::vector<std::string> domains_;
  GeneratorConfig gcfg_;
  DiscriminatorConfig dcfg_;
  ShareConfig share_;
  LossWeights weights_;
  TrainConfig cfg_;
  ModelBundle bundle_;
  AdamFamily opt_gen_, opt_disc_;
  std::map<std::string, Rng> streams_;
  int64_t iter_ = 0;
};

}  // namespace igan
