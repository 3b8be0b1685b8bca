#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "idm/tape.hpp"

namespace idm::ad {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam over a fixed set of parameters.
class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamConfig cfg)
      : params_(std::move(params)), cfg_(cfg) {
    for (Parameter* p : params_) {
      m_.push_back(Tensor::zeros(p->value.shape));
      v_.push_back(Tensor::zeros(p->value.shape));
    }
  }

  void zero_grad() {
    for (Parameter* p : params_) p->zero_grad();
  }

  void step() {
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, step_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, step_);
    for (size_t pi = 0; pi < params_.size(); ++pi) {
      Parameter& p = *params_[pi];
      for (size_t i = 0; i < p.value.values.size(); ++i) {
        const double g = p.grad.values[i];
        if (!std::isfinite(g))
          throw TrainingError("non-finite gradient in parameter " + p.name);
        double& m = m_[pi].values[i];
        double& v = v_[pi].values[i];
        m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
        v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g * g;
        p.value.values[i] -=
            cfg_.lr * (m / bc1) / (std::sqrt(v / bc2) + cfg_.eps);
      }
    }
  }

  long step_count() const { return step_; }

 private:
  std::vector<Parameter*> params_;
  AdamConfig cfg_;
  std::vector<Tensor> m_, v_;
  long step_ = 0;
};

// Fan-in uniform init, biases zero.
inline void init_uniform_fan_in(Tensor& t, int fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : t.values) v = dist(rng);
}

}  // namespace idm::ad
