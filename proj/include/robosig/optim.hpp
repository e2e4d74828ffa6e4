#pragma once

#include <cmath>

#include "robosig/params.hpp"

namespace robosig {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adaptive-moment optimiser. Moments are created fresh for every run.
template <typename T>
class Adam {
 public:
  Adam(const ParamSet<T>& like, AdamConfig config)
      : config_(config), m_(like.zeros_like()), v_(like.zeros_like()) {}

  long steps_taken() const noexcept { return t_; }
  void set_lr(double lr) noexcept { config_.lr = lr; }

  void step(ParamSet<T>& params, const ParamSet<T>& grads) {
    require(params.combinable(grads) && params.combinable(m_), "Adam: parameter/gradient mismatch");
    ++t_;
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    const T b1 = static_cast<T>(config_.beta1), b2 = static_cast<T>(config_.beta2);
    const T step_size = static_cast<T>(config_.lr / bc1);
    const T inv_bc2 = static_cast<T>(1.0 / bc2);
    const T eps = static_cast<T>(config_.eps);
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& p = params.entries()[i].value;
      const auto& g = grads.entries()[i].value;
      auto& m = m_.entries()[i].value;
      auto& v = v_.entries()[i].value;
      for (std::size_t j = 0; j < p.size(); ++j) {
        m[j] = b1 * m[j] + (T(1) - b1) * g[j];
        v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
        p[j] -= step_size * m[j] / (std::sqrt(v[j] * inv_bc2) + eps);
      }
    }
  }

 private:
  AdamConfig config_;
  ParamSet<T> m_, v_;
  long t_ = 0;
};

}  // namespace robosig
