#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "tsan/autodiff/ops.hpp"
#include "tsan/autodiff/tape.hpp"

namespace tsan::testing {

inline TensorF64 random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  TensorF64 t(std::move(shape));
  std::uniform_real_distribution<double> dist(lo, hi);
  for (double& v : t.data()) v = dist(rng);
  return t;
}

using OpBuilder = std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)>;

struct FdResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

// Checks d/dx of sum(op(inputs) * R) for a fixed random R against central
// differences at every input element. Relative error uses
// |a - n| / max(|a|, |n|, floor).
inline FdResult finite_difference_check(const OpBuilder& build, std::vector<TensorF64> inputs, std::uint64_t seed,
                                        double step = 1e-5, double floor = 1e-6) {
  std::mt19937_64 rng(seed);
  TensorF64 weights;
  auto evaluate = [&](const std::vector<TensorF64>& xs, std::vector<TensorF64>* grads) {
    Tape<double> tape;
    std::vector<Var<double>> vars;
    for (const auto& x : xs) vars.push_back(tape.variable(x));
    const Var<double> out = build(tape, vars);
    if (weights.empty()) weights = random_tensor(out.shape(), rng, 0.5, 1.5);
    const Var<double> loss = sum(mul(out, tape.constant(weights)));
    if (grads) {
      tape.backward(loss);
      for (const auto& v : vars) grads->push_back(v.grad());
    }
    return loss.value().item();
  };

  std::vector<TensorF64> analytic;
  evaluate(inputs, &analytic);
  FdResult result;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double saved = inputs[k][i];
      inputs[k][i] = saved + step;
      const double up = evaluate(inputs, nullptr);
      inputs[k][i] = saved - step;
      const double down = evaluate(inputs, nullptr);
      inputs[k][i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[k][i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      result.max_rel_error = std::max(result.max_rel_error, rel);
      ++result.checked;
    }
  }
  return result;
}

}  // namespace tsan::testing
