#include "tsan/data/windows.hpp"

#include <algorithm>

#include "tsan/errors.hpp"
#include "tsan/log.hpp"

namespace tsan::data {

std::vector<std::size_t> window_indices(std::size_t n, std::size_t w, std::size_t s) {
  if (w < 1 || s < 1) {
    throw ConfigError("window size and stride must be >= 1 (got w=" + std::to_string(w) +
                      ", s=" + std::to_string(s) + ")");
  }
  std::vector<std::size_t> out;
  for (std::size_t i = w - 1; i < n; i += s) out.push_back(i);
  return out;
}

WindowedDataset build_windows(const Tensor& rows, std::span<const int> labels,
                              std::span<const int> protocol, std::size_t traffic_column,
                              std::size_t w, std::size_t s) {
  if (rows.rank() != 2) throw ShapeError("build_windows: rows must be (n, f), got " + to_string(rows.shape()));
  const std::size_t n = rows.dim(0);
  const std::size_t f = rows.dim(1);
  if (labels.size() != n || protocol.size() != n) {
    throw ShapeError("build_windows: labels/protocol length does not match " + std::to_string(n) + " rows");
  }
  if (traffic_column >= f && n > 0) throw ShapeError("build_windows: traffic column outside feature width");
  const auto idx = window_indices(n, w, s);
  if (idx.empty()) {
    log::warn("build_windows: " + std::to_string(n) + " rows are fewer than window size " +
              std::to_string(w) + "; dataset is empty");
  }
  WindowedDataset ds;
  ds.window = w;
  ds.features = f;
  const std::size_t count = idx.size();
  ds.x_temporal = Tensor({count, w, f});
  ds.x_spatial = Tensor({count, f});
  ds.y = Tensor({count});
  ds.raw_row_index = idx;
  ds.aux_protocol.resize(count);
  ds.aux_traffic.resize(count);
  for (std::size_t j = 0; j < count; ++j) {
    const std::size_t end = idx[j];
    const float* first = rows.raw() + (end + 1 - w) * f;
    std::copy(first, first + w * f, ds.x_temporal.raw() + j * w * f);
    std::copy(rows.raw() + end * f, rows.raw() + (end + 1) * f, ds.x_spatial.raw() + j * f);
    ds.y[j] = static_cast<float>(labels[end]);
    ds.aux_protocol[j] = protocol[end];
    double traffic = 0.0;
    for (std::size_t r = 0; r < w; ++r) traffic += first[r * f + traffic_column];
    ds.aux_traffic[j] = static_cast<float>(traffic / static_cast<double>(w));
  }
  return ds;
}

WindowedDataset WindowedDataset::subset(std::span<const std::size_t> indices) const {
  WindowedDataset out;
  out.window = window;
  out.features = features;
  const std::size_t n = indices.size();
  const std::size_t wf = window * features;
  out.x_temporal = Tensor({n, window, features});
  out.x_spatial = Tensor({n, features});
  out.y = Tensor({n});
  out.raw_row_index.resize(n);
  out.aux_protocol.resize(n);
  out.aux_traffic.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t src = indices[j];
    if (src >= size()) throw ContractError("subset index out of range");
    std::copy(x_temporal.raw() + src * wf, x_temporal.raw() + (src + 1) * wf, out.x_temporal.raw() + j * wf);
    std::copy(x_spatial.raw() + src * features, x_spatial.raw() + (src + 1) * features,
              out.x_spatial.raw() + j * features);
    out.y[j] = y[src];
    out.raw_row_index[j] = raw_row_index[src];
    out.aux_protocol[j] = aux_protocol[src];
    out.aux_traffic[j] = aux_traffic[src];
  }
  return out;
}

Container WindowedDataset::to_container() const {
  Container c;
  c.metadata["kind"] = "windows";
  c.metadata["window"] = window;
  c.metadata["features"] = features;
  const std::size_t n = size();
  c.add("x_temporal", x_temporal);
  c.add("x_spatial", x_spatial);
  c.add("y", y);
  Tensor proto({n}), traffic({n}), raw({n});
  for (std::size_t j = 0; j < n; ++j) {
    proto[j] = static_cast<float>(aux_protocol[j]);
    traffic[j] = aux_traffic[j];
    raw[j] = static_cast<float>(raw_row_index[j]);
  }
  c.add("aux_protocol", std::move(proto));
  c.add("aux_traffic", std::move(traffic));
  c.add("raw_row_index", std::move(raw));
  return c;
}

WindowedDataset WindowedDataset::from_container(const Container& c) {
  WindowedDataset ds;
  ds.x_temporal = c.at("x_temporal");
  ds.x_spatial = c.at("x_spatial");
  ds.y = c.at("y");
  if (ds.x_temporal.rank() != 3 || ds.x_spatial.rank() != 2 || ds.y.rank() != 1) {
    throw ParseError("dataset container: unexpected tensor ranks");
  }
  const std::size_t n = ds.x_temporal.dim(0);
  ds.window = ds.x_temporal.dim(1);
  ds.features = ds.x_temporal.dim(2);
  if (ds.x_spatial.dim(0) != n || ds.x_spatial.dim(1) != ds.features || ds.y.dim(0) != n) {
    throw ParseError("dataset container: inconsistent tensor shapes");
  }
  const Tensor& proto = c.at("aux_protocol");
  const Tensor& traffic = c.at("aux_traffic");
  if (proto.size() != n || traffic.size() != n) throw ParseError("dataset container: aux length mismatch");
  ds.aux_protocol.resize(n);
  ds.aux_traffic.resize(n);
  ds.raw_row_index.resize(n);
  const Tensor* raw = c.find("raw_row_index");
  for (std::size_t j = 0; j < n; ++j) {
    ds.aux_protocol[j] = static_cast<int>(proto[j]);
    ds.aux_traffic[j] = traffic[j];
    ds.raw_row_index[j] = raw ? static_cast<std::size_t>((*raw)[j]) : j;
  }
  return ds;
}

}  // namespace tsan::data
