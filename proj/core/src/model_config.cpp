#include "tsan/model/config.hpp"

#include "tsan/errors.hpp"

namespace tsan {

std::string to_string(FusionMode mode) {
  return mode == FusionMode::cross_attention ? "cross_attention" : "concat";
}

FusionMode fusion_mode_from_string(const std::string& name) {
  if (name == "cross_attention") return FusionMode::cross_attention;
  if (name == "concat") return FusionMode::concat;
  throw ConfigError("model.fusion must be 'cross_attention' or 'concat', got '" + name + "'");
}

namespace {

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError("model config: " + message);
}

}  // namespace

void ModelConfig::validate() const {
  require(window >= 1, "window must be >= 1");
  require(features >= 1, "features must be >= 1");
  require(n_protocol >= 1, "n_protocol must be >= 1");
  require(use_temporal || use_spatial, "at least one encoder must be enabled");
  if (use_temporal) {
    require(d_model >= 1 && n_heads_temporal >= 1, "d_model and n_heads_temporal must be >= 1");
    require(d_model % n_heads_temporal == 0, "d_model must be divisible by n_heads_temporal");
    require(n_transformer_layers >= 1, "n_transformer_layers must be >= 1");
    require(d_ff >= 1, "d_ff must be >= 1");
    require(layernorm_eps > 0.0, "layernorm_eps must be > 0");
  }
  if (use_spatial) {
    require(!conv_filters.empty(), "conv_filters must not be empty");
    for (std::size_t c : conv_filters) require(c >= 1, "conv_filters entries must be >= 1");
    require(conv_kernel >= 1 && pool >= 1, "conv_kernel and pool must be >= 1");
    require(dropout >= 0.0 && dropout < 1.0, "dropout must lie in [0, 1)");
    require(batchnorm_momentum >= 0.0 && batchnorm_momentum <= 1.0, "batchnorm_momentum must lie in [0, 1]");
    require(batchnorm_eps > 0.0, "batchnorm_eps must be > 0");
    require(d_spat >= 1, "d_spat must be >= 1");
    std::size_t length = features;
    for (std::size_t i = 0; i < conv_filters.size(); ++i) {
      require(length >= conv_kernel, "features=" + std::to_string(features) +
                                         " is too short for conv block " + std::to_string(i + 1));
      length = (length - conv_kernel + 1) / pool;
      require(length >= 1, "features=" + std::to_string(features) + " vanishes after pooling in block " +
                               std::to_string(i + 1));
    }
  }
  require(d_common >= 1 && n_heads_fusion >= 1, "d_common and n_heads_fusion must be >= 1");
  require(d_common % n_heads_fusion == 0, "d_common must be divisible by n_heads_fusion");
  require(d_combined >= 1, "d_combined must be >= 1");
  require(threshold >= 0.0 && threshold <= 1.0, "threshold must lie in [0, 1]");
}

std::size_t ModelConfig::spatial_length() const {
  std::size_t length = features;
  for (std::size_t i = 0; i < conv_filters.size(); ++i) {
    if (length < conv_kernel) return 0;
    length = (length - conv_kernel + 1) / pool;
  }
  return length;
}

std::size_t ModelConfig::spatial_flat_width() const {
  return conv_filters.empty() ? features : spatial_length() * conv_filters.back();
}

nlohmann::json ModelConfig::to_json() const {
  return {{"window", window},
          {"features", features},
          {"n_protocol", n_protocol},
          {"d_model", d_model},
          {"n_heads_temporal", n_heads_temporal},
          {"n_transformer_layers", n_transformer_layers},
          {"d_ff", d_ff},
          {"layernorm_eps", layernorm_eps},
          {"conv_filters", conv_filters},
          {"conv_kernel", conv_kernel},
          {"pool", pool},
          {"dropout", dropout},
          {"batchnorm_momentum", batchnorm_momentum},
          {"batchnorm_eps", batchnorm_eps},
          {"d_spat", d_spat},
          {"d_common", d_common},
          {"n_heads_fusion", n_heads_fusion},
          {"d_combined", d_combined},
          {"threshold", threshold},
          {"use_temporal", use_temporal},
          {"use_spatial", use_spatial},
          {"fusion", to_string(fusion)}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  ModelConfig c;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "window") c.window = value.get<std::size_t>();
      else if (key == "features") c.features = value.get<std::size_t>();
      else if (key == "n_protocol") c.n_protocol = value.get<std::size_t>();
      else if (key == "d_model") c.d_model = value.get<std::size_t>();
      else if (key == "n_heads_temporal") c.n_heads_temporal = value.get<std::size_t>();
      else if (key == "n_transformer_layers") c.n_transformer_layers = value.get<std::size_t>();
      else if (key == "d_ff") c.d_ff = value.get<std::size_t>();
      else if (key == "layernorm_eps") c.layernorm_eps = value.get<double>();
      else if (key == "conv_filters") c.conv_filters = value.get<std::vector<std::size_t>>();
      else if (key == "conv_kernel") c.conv_kernel = value.get<std::size_t>();
      else if (key == "pool") c.pool = value.get<std::size_t>();
      else if (key == "dropout") c.dropout = value.get<double>();
      else if (key == "batchnorm_momentum") c.batchnorm_momentum = value.get<double>();
      else if (key == "batchnorm_eps") c.batchnorm_eps = value.get<double>();
      else if (key == "d_spat") c.d_spat = value.get<std::size_t>();
      else if (key == "d_common") c.d_common = value.get<std::size_t>();
      else if (key == "n_heads_fusion") c.n_heads_fusion = value.get<std::size_t>();
      else if (key == "d_combined") c.d_combined = value.get<std::size_t>();
      else if (key == "threshold") c.threshold = value.get<double>();
      else if (key == "use_temporal") c.use_temporal = value.get<bool>();
      else if (key == "use_spatial") c.use_spatial = value.get<bool>();
      else if (key == "fusion") c.fusion = fusion_mode_from_string(value.get<std::string>());
      else throw ConfigError("unknown model config key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("model config key '" + key + "': " + e.what());
    }
  }
  return c;
}

}  // namespace tsan
