#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "tsan/autodiff/parameter.hpp"
#include "tsan/autodiff/tensor.hpp"

namespace tsan {

// Single-file tensor container shared by checkpoints and encoded datasets:
//
//   {"version":1,"params":[{"path":..,"shape":[..],"offset":B,"len":N},..],...}\n
//   <little-endian float32 blobs>
//
// The header is one JSON line. `offset` is the byte offset of an entry's blob
// measured from the first byte after the header newline; `len` counts
// float32 elements. Additional top-level header keys (e.g. "config") are
// carried in `metadata`.
struct ContainerEntry {
  std::string path;
  Tensor tensor;
};

struct Container {
  static constexpr int kVersion = 1;

  nlohmann::ordered_json metadata = nlohmann::ordered_json::object();
  std::vector<ContainerEntry> entries;

  const Tensor* find(std::string_view path) const;
  const Tensor& at(std::string_view path) const;
  void add(std::string path, Tensor tensor);
};

std::string encode_container(const Container& container);
Container decode_container(std::string_view bytes);

void write_container(const std::filesystem::path& path, const Container& container);
Container read_container(const std::filesystem::path& path);

// True if the file starts with a container header.
bool looks_like_container(const std::filesystem::path& path);

// Checkpoints store every entry of the set (trainable or not) at its path.
Container to_container(const ParameterSet<float>& params);
// Copies container entries into an existing set. Every parameter in the set
// must be present with an identical shape; otherwise ShapeError names the path.
void load_into(const Container& container, ParameterSet<float>& params);

}  // namespace tsan
