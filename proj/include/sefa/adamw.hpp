#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "sefa/errors.hpp"
#include "sefa/tensor.hpp"

namespace sefa {

// Defaults follow the diffusion-policy training recipe this pipeline reuses;
// every field can be overridden through the training config.
struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.95;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-6;
};

// Decoupled-weight-decay Adam with bias correction:
//   m <- b1 m + (1-b1) g          v <- b2 v + (1-b2) g^2
//   p <- p - lr * ( mhat / (sqrt(vhat) + eps) + wd * p )
class AdamWState {
 public:
  AdamWState(const std::vector<const TensorBuffer*>& params, AdamWConfig cfg)
      : cfg_(cfg) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const TensorBuffer* p : params) {
      m_.emplace_back(p->shape);
      v_.emplace_back(p->shape);
    }
  }

  long step_count() const { return step_; }
  const AdamWConfig& config() const { return cfg_; }

  // `names` is used only for error reporting and may be empty.
  void step(std::vector<TensorBuffer*> params,
            const std::vector<const TensorBuffer*>& grads,
            const std::vector<std::string>& names = {}) {
    if (params.size() != m_.size() || grads.size() != m_.size()) {
      throw InvalidArgumentError("adamw: parameter/gradient count mismatch");
    }
    for (std::size_t t = 0; t < grads.size(); ++t) {
      if (!grads[t]->all_finite()) {
        const std::string label =
            t < names.size() ? names[t] : "#" + std::to_string(t);
        throw TrainingDivergence("adamw: non-finite gradient for tensor " + label);
      }
      if (!same_shape(*params[t], *grads[t])) {
        throw InvalidArgumentError("adamw: gradient shape mismatch for tensor #" +
                                   std::to_string(t));
      }
    }
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (std::size_t t = 0; t < params.size(); ++t) {
      double* p = params[t]->data.data();
      const double* g = grads[t]->data.data();
      double* m = m_[t].data.data();
      double* v = v_[t].data.data();
      const std::size_t n = params[t]->data.size();
      for (std::size_t i = 0; i < n; ++i) {
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        p[i] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) +
                           cfg_.weight_decay * p[i]);
      }
    }
  }

 private:
  AdamWConfig cfg_;
  long step_ = 0;
  std::vector<TensorBuffer> m_, v_;
};

}  // namespace sefa
