#include "tsan/autodiff/adam.hpp"

#include <cmath>

namespace tsan {
namespace {

template <typename T>
void check_ready(const Parameter<T>& p) {
  if (p.trainable && !p.grad_ready) {
    throw ContractError("adam_step: gradient of '" + p.path + "' was never populated");
  }
}

template <typename T>
void update(Parameter<T>& p, const AdamConfig& config) {
  if (!p.trainable) return;
  if (p.adam_m.shape() != p.value.shape()) p.adam_m = BasicTensor<T>::zeros(p.value.shape());
  if (p.adam_v.shape() != p.value.shape()) p.adam_v = BasicTensor<T>::zeros(p.value.shape());
  ++p.step_count;
  const double step = static_cast<double>(p.step_count);
  const double c1 = 1.0 - std::pow(config.beta1, step);
  const double c2 = 1.0 - std::pow(config.beta2, step);
  const T b1 = static_cast<T>(config.beta1);
  const T b2 = static_cast<T>(config.beta2);
  const T lr_t = static_cast<T>(config.lr / c1);
  const T inv_c2 = static_cast<T>(1.0 / c2);
  const T eps = static_cast<T>(config.eps);
  T* w = p.value.raw();
  T* m = p.adam_m.raw();
  T* v = p.adam_v.raw();
  const T* g = p.grad.raw();
  for (std::size_t i = 0; i < p.value.size(); ++i) {
    m[i] = b1 * m[i] + (T{1} - b1) * g[i];
    v[i] = b2 * v[i] + (T{1} - b2) * g[i] * g[i];
    w[i] -= lr_t * m[i] / (std::sqrt(v[i] * inv_c2) + eps);
  }
  p.grad_ready = false;
}

}  // namespace

template <typename T>
void adam_step(ParameterSet<T>& params, const AdamConfig& config) {
  for (const auto& p : params) check_ready(p);
  for (auto& p : params) update(p, config);
}

template <typename T>
void adam_step(std::span<Parameter<T>* const> params, const AdamConfig& config) {
  for (const auto* p : params) check_ready(*p);
  for (auto* p : params) update(*p, config);
}

template void adam_step(ParameterSet<float>&, const AdamConfig&);
template void adam_step(ParameterSet<double>&, const AdamConfig&);
template void adam_step(std::span<Parameter<float>* const>, const AdamConfig&);
template void adam_step(std::span<Parameter<double>* const>, const AdamConfig&);

}  // namespace tsan
