#include "tsan/objective/multitask.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tsan/autodiff/ops.hpp"
#include "tsan/errors.hpp"
#include "tsan/log.hpp"

namespace tsan {
namespace {

bool rows_equal(const float* a, const float* b, std::size_t f) { return std::equal(a, a + f, b); }

// Permutes the w rows of one window in place. Returns false when no
// permutation can change its content.
bool shuffle_window(float* x, std::size_t w, std::size_t f, std::mt19937_64& rng) {
  std::size_t a = w, b = w;
  for (std::size_t i = 0; i < w && a == w; ++i) {
    for (std::size_t j = i + 1; j < w; ++j) {
      if (!rows_equal(x + i * f, x + j * f, f)) {
        a = i;
        b = j;
        break;
      }
    }
  }
  if (a == w) return false;

  const std::vector<float> original(x, x + w * f);
  std::vector<std::size_t> perm(w);
  for (int attempt = 0; attempt < 8; ++attempt) {
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    bool changed = false;
    for (std::size_t r = 0; r < w && !changed; ++r) {
      changed = !rows_equal(original.data() + perm[r] * f, original.data() + r * f, f);
    }
    if (changed) {
      for (std::size_t r = 0; r < w; ++r) {
        std::copy_n(original.data() + perm[r] * f, f, x + r * f);
      }
      return true;
    }
  }
  std::swap_ranges(x + a * f, x + (a + 1) * f, x + b * f);
  return true;
}

}  // namespace

TaskDataset build_aux_targets(const data::WindowedDataset& dataset, std::size_t n_protocol,
                              double shuffle_fraction, std::mt19937_64& rng) {
  if (!(shuffle_fraction >= 0.0 && shuffle_fraction <= 1.0)) {
    throw ConfigError("shuffle_fraction must lie in [0, 1]");
  }
  if (n_protocol == 0) throw ConfigError("n_protocol must be >= 1");
  const std::size_t n = dataset.size();
  const std::size_t w = dataset.window, f = dataset.features;

  TaskDataset out;
  out.windows = dataset;
  out.n_protocol = n_protocol;
  AuxTargets& aux = out.aux;
  aux.y_traffic = Tensor({n, 1});
  aux.y_protocol = Tensor({n, n_protocol});
  aux.y_consistency = Tensor({n, 1}, 1.0f);
  aux.shuffle_mask.assign(n, false);
  aux.consistency_enabled = w > 1;
  if (!aux.consistency_enabled && n > 0) {
    log::warn("window size 1 admits no reordering; temporal consistency task disabled");
  }

  std::bernoulli_distribution coin(shuffle_fraction);
  float* x = out.windows.x_temporal.raw();
  for (std::size_t j = 0; j < n; ++j) {
    aux.y_traffic[j] = dataset.aux_traffic[j];
    const int p = dataset.aux_protocol[j];
    if (p >= 0) {
      if (static_cast<std::size_t>(p) >= n_protocol) {
        throw ContractError("protocol index " + std::to_string(p) + " outside vocabulary of " +
                            std::to_string(n_protocol));
      }
      aux.y_protocol[j * n_protocol + static_cast<std::size_t>(p)] = 1.0f;
    }
    if (!aux.consistency_enabled || shuffle_fraction == 0.0) continue;
    if (coin(rng) && shuffle_window(x + j * w * f, w, f, rng)) {
      aux.shuffle_mask[j] = true;
      aux.y_consistency[j] = 0.0f;
    }
  }
  return out;
}

template <typename T>
TaskBatch<T> make_batch(const TaskDataset& dataset, std::span<const std::size_t> indices) {
  const auto& ds = dataset.windows;
  const std::size_t b = indices.size(), w = ds.window, f = ds.features, p = dataset.n_protocol;
  TaskBatch<T> batch;
  batch.x_temporal = BasicTensor<T>({b, w, f});
  batch.x_spatial = BasicTensor<T>({b, f});
  batch.y = BasicTensor<T>({b, 1});
  batch.y_traffic = BasicTensor<T>({b, 1});
  batch.y_protocol = BasicTensor<T>({b, p});
  batch.y_consistency = BasicTensor<T>({b, 1});
  const float* xt = ds.x_temporal.raw();
  const float* xs = ds.x_spatial.raw();
  for (std::size_t r = 0; r < b; ++r) {
    const std::size_t j = indices[r];
    if (j >= ds.size()) throw ContractError("batch index " + std::to_string(j) + " out of range");
    std::copy_n(xt + j * w * f, w * f, batch.x_temporal.raw() + r * w * f);
    std::copy_n(xs + j * f, f, batch.x_spatial.raw() + r * f);
    batch.y[r] = static_cast<T>(ds.y[j]);
    batch.y_traffic[r] = static_cast<T>(dataset.aux.y_traffic[j]);
    std::copy_n(dataset.aux.y_protocol.raw() + j * p, p, batch.y_protocol.raw() + r * p);
    batch.y_consistency[r] = static_cast<T>(dataset.aux.y_consistency[j]);
  }
  return batch;
}

void LossWeights::validate() const {
  for (double v : {main, traffic, protocol, consistency}) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("loss weights must be finite and >= 0");
  }
}

nlohmann::json LossWeights::to_json() const {
  return {{"main", main}, {"traffic", traffic}, {"protocol", protocol}, {"consistency", consistency}};
}

LossWeights LossWeights::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("loss weights must be a JSON object");
  LossWeights w;
  for (const auto& [key, value] : j.items()) {
    if (!value.is_number()) throw ConfigError("loss weight '" + key + "' must be a number");
    const double v = value.get<double>();
    if (key == "main") w.main = v;
    else if (key == "traffic") w.traffic = v;
    else if (key == "protocol") w.protocol = v;
    else if (key == "consistency") w.consistency = v;
    else throw ConfigError("unknown loss weight key '" + key + "'");
  }
  w.validate();
  return w;
}

double weighted_total(const LossBreakdown& l, const LossWeights& w) {
  return w.main * l.l_main + w.traffic * l.l_traffic + w.protocol * l.l_protocol +
         w.consistency * l.l_consistency;
}

template <typename T>
LossTerms<T> compute_losses(const ForwardOutputs<T>& out, const TaskBatch<T>& batch, const LossWeights& weights) {
  LossTerms<T> terms;
  terms.main = binary_cross_entropy(out.y_main, batch.y);
  terms.traffic = mean_squared_error(out.y_traffic, batch.y_traffic);
  terms.protocol = categorical_cross_entropy(out.y_protocol, batch.y_protocol);
  terms.consistency = binary_cross_entropy(out.y_consistency, batch.y_consistency);

  const std::pair<const Var<T>*, double> parts[] = {{&terms.main, weights.main},
                                                    {&terms.traffic, weights.traffic},
                                                    {&terms.protocol, weights.protocol},
                                                    {&terms.consistency, weights.consistency}};
  for (const auto& [var, weight] : parts) {
    if (weight == 0.0) continue;
    const Var<T> weighted = scale(*var, static_cast<T>(weight));
    terms.total = terms.total.valid() ? add(terms.total, weighted) : weighted;
  }
  if (!terms.total.valid()) terms.total = scale(terms.main, T{0});

  LossBreakdown& v = terms.values;
  v.l_main = terms.main.value().item();
  v.l_traffic = terms.traffic.value().item();
  v.l_protocol = terms.protocol.value().item();
  v.l_consistency = terms.consistency.value().item();
  v.l_total = terms.total.value().item();
  return terms;
}

template TaskBatch<float> make_batch<float>(const TaskDataset&, std::span<const std::size_t>);
template TaskBatch<double> make_batch<double>(const TaskDataset&, std::span<const std::size_t>);
template LossTerms<float> compute_losses<float>(const ForwardOutputs<float>&, const TaskBatch<float>&,
                                                const LossWeights&);
template LossTerms<double> compute_losses<double>(const ForwardOutputs<double>&, const TaskBatch<double>&,
                                                  const LossWeights&);

}  // namespace tsan
