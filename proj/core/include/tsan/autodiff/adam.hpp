#pragma once

#include <span>

#include "tsan/autodiff/parameter.hpp"

namespace tsan {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One bias-corrected Adam update over every trainable parameter:
//   m <- b1 m + (1 - b1) g,  v <- b2 v + (1 - b2) g^2
//   p <- p - lr * m_hat / (sqrt(v_hat) + eps)
// Gradients are consumed: grad_ready is cleared after the step. Throws
// ContractError if a trainable parameter has no populated gradient.
template <typename T>
void adam_step(ParameterSet<T>& params, const AdamConfig& config);

// Same update restricted to the listed parameters.
template <typename T>
void adam_step(std::span<Parameter<T>* const> params, const AdamConfig& config);

}  // namespace tsan
