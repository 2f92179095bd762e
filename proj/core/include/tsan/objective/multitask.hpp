#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "tsan/autodiff/tape.hpp"
#include "tsan/data/windows.hpp"
#include "tsan/model/tsan_model.hpp"

namespace tsan {

struct AuxTargets {
  Tensor y_traffic;      // (N, 1) window mean of the scaled "count" feature
  Tensor y_protocol;     // (N, n_protocol) one-hot of the last record's protocol; all zero if unseen
  Tensor y_consistency;  // (N, 1) 1 = original order, 0 = shuffled
  std::vector<bool> shuffle_mask;
  bool consistency_enabled = true;
};

// A windowed dataset whose temporal rows may have been shuffled, together
// with the auxiliary targets derived from it.
struct TaskDataset {
  data::WindowedDataset windows;
  AuxTargets aux;
  std::size_t n_protocol = 0;

  std::size_t size() const noexcept { return windows.size(); }
};

// Derives auxiliary targets. Each window is shuffled with probability
// `shuffle_fraction`: its temporal rows are permuted so that the content
// changes (windows whose rows are all identical stay intact with label 1),
// x_spatial is never touched. A window size of 1 disables the consistency
// task with a warning.
TaskDataset build_aux_targets(const data::WindowedDataset& dataset, std::size_t n_protocol,
                              double shuffle_fraction, std::mt19937_64& rng);

template <typename T>
struct TaskBatch {
  BasicTensor<T> x_temporal;     // (B, w, f)
  BasicTensor<T> x_spatial;      // (B, f)
  BasicTensor<T> y;              // (B, 1)
  BasicTensor<T> y_traffic;      // (B, 1)
  BasicTensor<T> y_protocol;     // (B, n_protocol)
  BasicTensor<T> y_consistency;  // (B, 1)

  std::size_t size() const { return y.empty() ? 0 : y.dim(0); }
};

template <typename T>
TaskBatch<T> make_batch(const TaskDataset& dataset, std::span<const std::size_t> indices);

struct LossWeights {
  double main = 1.0;
  double traffic = 0.3;
  double protocol = 0.3;
  double consistency = 0.4;

  void validate() const;
  nlohmann::json to_json() const;
  static LossWeights from_json(const nlohmann::json& j);
  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

struct LossBreakdown {
  double l_main = 0.0;
  double l_traffic = 0.0;
  double l_protocol = 0.0;
  double l_consistency = 0.0;
  double l_total = 0.0;
};

// w_main*l_main + w_traffic*l_traffic + w_protocol*l_protocol + w_consistency*l_consistency
double weighted_total(const LossBreakdown& losses, const LossWeights& weights);

template <typename T>
struct LossTerms {
  Var<T> main;
  Var<T> traffic;
  Var<T> protocol;
  Var<T> consistency;
  Var<T> total;
  LossBreakdown values;
};

// Batch-mean task losses (BCE, MSE, CCE, BCE; cross-entropies clipped at
// 1e-7) and their weighted total. Terms with zero weight are left out of the
// total's graph, so their heads receive no gradient.
template <typename T>
LossTerms<T> compute_losses(const ForwardOutputs<T>& outputs, const TaskBatch<T>& batch,
                            const LossWeights& weights);

}  // namespace tsan
