#pragma once

#include <cmath>
#include <string>
#include <unordered_set>
#include <vector>

#include "igan/autodiff.hpp"
#include "igan/nn.hpp"

namespace igan {

// Adam over one family of parameters (all generators, or all
// discriminators). Parameters are deduplicated by graph-node identity, so a
// block shared between networks is stored and stepped exactly once; its
// gradient already carries every owner's contribution through fan-out
// accumulation. A parameter absent from the gradient map steps with g = 0,
// which from a zero-moment state leaves it untouched.
class AdamFamily {
 public:
  AdamFamily() = default;

  AdamFamily(Real beta1, Real beta2, Real eps)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  // Registers parameters in visitation order, skipping aliases already seen.
  void add(const std::string& name, const Var& param) {
    if (seen_.count(param.node())) return;
    seen_.insert(param.node());
    names_.push_back(name);
    params_.push_back(param);
    m_.push_back(Tensor::zeros(param.shape()));
    v_.push_back(Tensor::zeros(param.shape()));
  }

  const std::vector<Var>& params() const { return params_; }
  const std::vector<std::string>& names() const { return names_; }
  int64_t step_count() const { return t_; }
  void set_step_count(int64_t t) { t_ = t; }
  Tensor& moment1(size_t i) { return m_[i]; }
  Tensor& moment2(size_t i) { return v_[i]; }

  void step(Real lr, const GradMap& grads) {
    ++t_;
    const Real bc1 =
        Real(1) - static_cast<Real>(std::pow(static_cast<double>(beta1_), t_));
    const Real bc2 =
        Real(1) - static_cast<Real>(std::pow(static_cast<double>(beta2_), t_));
    for (size_t p = 0; p < params_.size(); ++p) {
      Var g = grad_of(grads, params_[p]);
      Tensor& theta = params_[p].mutable_val();
      Tensor& m = m_[p];
      Tensor& v = v_[p];
      for (int64_t i = 0; i < theta.numel(); ++i) {
        const Real gi = g.defined() ? g.val().at(i) : Real(0);
        m.at(i) = beta1_ * m.at(i) + (Real(1) - beta1_) * gi;
        v.at(i) = beta2_ * v.at(i) + (Real(1) - beta2_) * gi * gi;
        theta.at(i) -= lr * (m.at(i) / bc1) /
                       (std::sqrt(v.at(i) / bc2) + eps_);
      }
    }
  }

 private:
  Real beta1_ = Real(0.5), beta2_ = Real(0.999), eps_ = Real(1e-8);
  int64_t t_ = 0;
  std::vector<std::string> names_;
  std::vector<Var> params_;
  std::vector<Tensor> m_, v_;
  std::unordered_set<const Node*> seen_;
};

inline AdamFamily make_gen_optimizer(ModelBundle& b, Real beta1, Real beta2,
                                     Real eps = Real(1e-8)) {
  AdamFamily opt(beta1, beta2, eps);
  b.visit_gen_params([&](const std::string& n, Var& v) { opt.add(n, v); });
  return opt;
}

inline AdamFamily make_disc_optimizer(ModelBundle& b, Real beta1, Real beta2,
                                      Real eps = Real(1e-8)) {
  AdamFamily opt(beta1, beta2, eps);
  b.visit_disc_params([&](const std::string& n, Var& v) { opt.add(n, v); });
  return opt;
}

}  // namespace igan
