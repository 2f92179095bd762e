#pragma once

#include <cstdint>
#include <vector>

#include "tsan/data/windows.hpp"

namespace tsan::data {

struct SplitSpec {
  double validation_fraction = 0.20;
  bool stratified = true;
  std::uint64_t seed = 42;
};

struct SplitResult {
  WindowedDataset train;
  WindowedDataset validation;
  std::vector<std::size_t> train_index;
  std::vector<std::size_t> validation_index;
};

// Per-class seeded sampling of round(fraction * class size) windows into the
// validation part. Both parts keep the original window order. A single-class
// input (or stratified=false) falls back to a plain seeded random split.
SplitResult stratified_split(const WindowedDataset& dataset, const SplitSpec& spec);

}  // namespace tsan::data
