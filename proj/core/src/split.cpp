#include "tsan/data/split.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "tsan/errors.hpp"
#include "tsan/log.hpp"

namespace tsan::data {
namespace {

void shuffle_indices(std::vector<std::size_t>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(v[i - 1], v[pick(rng)]);
  }
}

std::size_t rounded(double fraction, std::size_t n) {
  return static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
}

}  // namespace

SplitResult stratified_split(const WindowedDataset& dataset, const SplitSpec& spec) {
  if (!(spec.validation_fraction > 0.0 && spec.validation_fraction < 1.0)) {
    throw ConfigError("validation fraction must lie in (0, 1), got " + std::to_string(spec.validation_fraction));
  }
  std::mt19937_64 rng(spec.seed);
  std::vector<std::size_t> negatives, positives;
  for (std::size_t j = 0; j < dataset.size(); ++j) {
    (dataset.y[j] > 0.5f ? positives : negatives).push_back(j);
  }
  std::vector<bool> in_validation(dataset.size(), false);
  const bool single_class = negatives.empty() || positives.empty();
  if (single_class && !dataset.empty()) {
    log::warn("stratified_split: only one class present; using a plain random split");
  }
  if (!spec.stratified || single_class) {
    std::vector<std::size_t> all(dataset.size());
    for (std::size_t j = 0; j < all.size(); ++j) all[j] = j;
    shuffle_indices(all, rng);
    const std::size_t k = rounded(spec.validation_fraction, all.size());
    for (std::size_t i = 0; i < k; ++i) in_validation[all[i]] = true;
  } else {
    for (auto* group : {&negatives, &positives}) {
      shuffle_indices(*group, rng);
      const std::size_t k = rounded(spec.validation_fraction, group->size());
      for (std::size_t i = 0; i < k; ++i) in_validation[(*group)[i]] = true;
    }
  }
  SplitResult out;
  for (std::size_t j = 0; j < dataset.size(); ++j) {
    (in_validation[j] ? out.validation_index : out.train_index).push_back(j);
  }
  out.train = dataset.subset(out.train_index);
  out.validation = dataset.subset(out.validation_index);
  return out;
}

}  // namespace tsan::data
