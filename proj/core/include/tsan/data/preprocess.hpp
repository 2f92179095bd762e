#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "tsan/data/nslkdd.hpp"
#include "tsan/data/split.hpp"
#include "tsan/data/windows.hpp"

namespace tsan::data {

struct PreprocessOptions {
  std::size_t window = 5;
  std::size_t stride = 2;
  SplitSpec split;
  // When non-zero, a seeded order-preserving random subsample of each file.
  std::size_t max_train_records = 0;
  std::size_t max_test_records = 0;
};

struct PreparedData {
  FeatureSchema schema;
  ScalerStats scaler;
  WindowedDataset train;
  WindowedDataset validation;
  WindowedDataset test;
  Tensor train_rows;  // filtered, encoded training sequence (n, f)
  nlohmann::json summary;
};

// Filter -> fit schema and scaler on the filtered training records -> encode
// -> window -> stratified train/validation split. The test file is encoded
// with the training schema and scaler.
PreparedData prepare(std::span<const RawRecord> train_raw, std::span<const RawRecord> test_raw,
                     const PreprocessOptions& options);

// Filters, encodes and windows records with an already fitted schema and
// scaler (the inference-time path).
WindowedDataset encode_windows(std::span<const RawRecord> records, const FeatureSchema& schema,
                               const ScalerStats& scaler, std::size_t window, std::size_t stride);

std::vector<RawRecord> subsample(std::span<const RawRecord> records, std::size_t max_records,
                                 std::uint64_t seed);

}  // namespace tsan::data
