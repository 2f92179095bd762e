#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace tsan {

enum class FusionMode { cross_attention, concat };

std::string to_string(FusionMode mode);
FusionMode fusion_mode_from_string(const std::string& name);

struct ModelConfig {
  // Input geometry (set from the data, not user tunable).
  std::size_t window = 5;
  std::size_t features = 0;
  std::size_t n_protocol = 3;

  // Temporal encoder.
  std::size_t d_model = 128;
  std::size_t n_heads_temporal = 2;
  std::size_t n_transformer_layers = 1;
  std::size_t d_ff = 256;
  double layernorm_eps = 1e-5;

  // Spatial encoder.
  std::vector<std::size_t> conv_filters = {32, 64};
  std::size_t conv_kernel = 3;
  std::size_t pool = 2;
  double dropout = 0.3;
  double batchnorm_momentum = 0.1;
  double batchnorm_eps = 1e-5;
  std::size_t d_spat = 128;

  // Fusion and heads.
  std::size_t d_common = 64;
  std::size_t n_heads_fusion = 2;
  std::size_t d_combined = 64;
  double threshold = 0.5;

  // Ablation switches.
  bool use_temporal = true;
  bool use_spatial = true;
  FusionMode fusion = FusionMode::cross_attention;

  // Throws ConfigError naming the offending field.
  void validate() const;

  // Length of the spatial sequence after every conv + pool block.
  std::size_t spatial_length() const;
  std::size_t spatial_flat_width() const;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

}  // namespace tsan
