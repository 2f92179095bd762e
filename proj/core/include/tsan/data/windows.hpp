#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tsan/autodiff/container.hpp"
#include "tsan/autodiff/tensor.hpp"

namespace tsan::data {

// Window end indices {s*k + w - 1 : k >= 0, s*k + w - 1 < n}, ascending.
// n < w yields an empty set; w or s of zero is a ConfigError.
std::vector<std::size_t> window_indices(std::size_t n, std::size_t w, std::size_t s);

struct WindowedDataset {
  std::size_t window = 0;
  std::size_t features = 0;
  Tensor x_temporal;  // (N, w, f)
  Tensor x_spatial;   // (N, f); equals the last temporal slice
  Tensor y;           // (N)
  std::vector<std::size_t> raw_row_index;  // window end index into the row sequence
  std::vector<int> aux_protocol;           // protocol index of the last record, -1 if unseen
  std::vector<float> aux_traffic;          // window mean of the scaled "count" feature

  std::size_t size() const noexcept { return raw_row_index.size(); }
  bool empty() const noexcept { return raw_row_index.empty(); }

  WindowedDataset subset(std::span<const std::size_t> indices) const;

  // Container entries: x_temporal, x_spatial, y, aux_protocol, aux_traffic,
  // raw_row_index.
  Container to_container() const;
  static WindowedDataset from_container(const Container& c);
};

// Builds windows over `rows` (n, f). `labels` and `protocol` are per row;
// `traffic_column` selects the feature averaged into aux_traffic.
WindowedDataset build_windows(const Tensor& rows, std::span<const int> labels,
                              std::span<const int> protocol, std::size_t traffic_column,
                              std::size_t w, std::size_t s);

}  // namespace tsan::data
