#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "tsan/autodiff/ops.hpp"
#include "tsan/autodiff/parameter.hpp"
#include "tsan/autodiff/tape.hpp"
#include "tsan/model/config.hpp"

namespace tsan {

struct ForwardContext {
  Mode mode = Mode::eval;
  // Required in train mode when dropout > 0.
  std::mt19937_64* rng = nullptr;
};

template <typename T>
struct ForwardOutputs {
  Var<T> y_main;         // (B, 1) probability of DoS
  Var<T> y_traffic;      // (B, 1) unbounded
  Var<T> y_protocol;     // (B, n_protocol) distribution
  Var<T> y_consistency;  // (B, 1) probability
  Var<T> h_temp;         // (B, d_model), unbound when the temporal encoder is disabled
  Var<T> h_spat;         // (B, d_spat), unbound when the spatial encoder is disabled
  Var<T> h_combined;     // (B, d_combined)
  Var<T> temporal_attention;  // (B * heads, w, w)
  Var<T> fusion_attention;    // (B * heads, tokens, tokens); unbound for concat fusion
};

struct MultiHeadWeights {
  std::string wq, wk, wv, wo;
};

// Scaled dot-product self-attention over x (B, S, D) split into `heads`
// heads. No projection biases. Optionally returns the (B*heads, S, S)
// attention matrix.
template <typename T>
Var<T> multi_head_self_attention(const Var<T>& x, const Var<T>& wq, const Var<T>& wk,
                                 const Var<T>& wv, const Var<T>& wo, std::size_t heads,
                                 Var<T>* attention = nullptr);

// Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)); fans are taken from
// [in, out] matrices and [k, c_in, c_out] kernels.
template <typename T>
void glorot_uniform(BasicTensor<T>& tensor, std::mt19937_64& rng);

// 1 iff probability > threshold (a tie classifies as 0).
int threshold_decision(double probability, double threshold);

// The temporal-spatial attention network: transformer encoder over the
// window, CNN encoder over the last record, attention fusion of the two, and
// four output heads. Parameter paths are stable and prefixed by component
// ("temporal.", "spatial.", "fusion.", "heads.").
template <typename T>
class TsanModel {
 public:
  explicit TsanModel(ModelConfig config, std::uint64_t seed = 0);

  const ModelConfig& config() const noexcept { return config_; }
  ParameterSet<T>& params() noexcept { return params_; }
  const ParameterSet<T>& params() const noexcept { return params_; }

  // Glorot-uniform weights, zero biases, unit norm scales, running stats at
  // mean 0 / var 1. Deterministic in `seed`.
  void initialize(std::uint64_t seed);

  ForwardOutputs<T> forward(Tape<T>& tape, const BasicTensor<T>& x_temporal,
                            const BasicTensor<T>& x_spatial, const ForwardContext& ctx);

  // (B, w, f) -> (B, d_model)
  Var<T> temporal_forward(Tape<T>& tape, const BasicTensor<T>& x_temporal, const ForwardContext& ctx,
                          Var<T>* attention = nullptr);
  // (B, f) -> (B, d_spat)
  Var<T> spatial_forward(Tape<T>& tape, const BasicTensor<T>& x_spatial, const ForwardContext& ctx);
  // Either input may be unbound when its encoder is disabled.
  Var<T> fuse(Tape<T>& tape, const Var<T>& h_temp, const Var<T>& h_spat, Var<T>* attention = nullptr);
  void heads(Tape<T>& tape, const Var<T>& h_combined, ForwardOutputs<T>& out);

  static bool is_encoder_path(const std::string& path);

 private:
  Var<T> param(Tape<T>& tape, const std::string& path) { return tape.parameter(params_.at(path)); }
  void build();

  ModelConfig config_;
  ParameterSet<T> params_;
};

}  // namespace tsan
