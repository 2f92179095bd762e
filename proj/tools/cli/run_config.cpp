#include "run_config.hpp"

#include <fstream>

#include "tsan/errors.hpp"

namespace tsan::cli {
namespace {

template <typename T>
T get(const nlohmann::json& value, const std::string& where) {
  try {
    return value.get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

DataConfig data_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("\"data\" must be a JSON object");
  DataConfig d;
  for (const auto& [key, value] : j.items()) {
    const std::string where = "data." + key;
    if (key == "train_path") d.train_path = get<std::string>(value, where);
    else if (key == "test_path") d.test_path = get<std::string>(value, where);
    else if (key == "window_size") d.window_size = get<std::size_t>(value, where);
    else if (key == "stride") d.stride = get<std::size_t>(value, where);
    else if (key == "validation_fraction") d.validation_fraction = get<double>(value, where);
    else if (key == "seed") d.seed = get<std::uint64_t>(value, where);
    else if (key == "max_train_records") d.max_train_records = get<std::size_t>(value, where);
    else if (key == "max_test_records") d.max_test_records = get<std::size_t>(value, where);
    else throw ConfigError("unknown config key 'data." + key + "'");
  }
  if (d.window_size == 0) throw ConfigError("data.window_size must be >= 1");
  if (d.stride == 0) throw ConfigError("data.stride must be >= 1");
  if (!(d.validation_fraction > 0.0 && d.validation_fraction < 1.0)) {
    throw ConfigError("data.validation_fraction must lie in (0, 1)");
  }
  return d;
}

OutputConfig output_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("\"output\" must be a JSON object");
  OutputConfig o;
  for (const auto& [key, value] : j.items()) {
    if (key == "dir") o.dir = get<std::string>(value, "output.dir");
    else throw ConfigError("unknown config key 'output." + key + "'");
  }
  return o;
}

}  // namespace

data::PreprocessOptions DataConfig::preprocess_options() const {
  data::PreprocessOptions o;
  o.window = window_size;
  o.stride = stride;
  o.split.validation_fraction = validation_fraction;
  o.split.seed = seed;
  o.max_train_records = max_train_records;
  o.max_test_records = max_test_records;
  return o;
}

void RunConfig::override_seed(std::uint64_t seed) {
  data.seed = seed;
  pretrain.seed = seed;
  train.seed = seed;
}

ExperimentConfig RunConfig::experiment(std::size_t timing_repetitions) const {
  ExperimentConfig e;
  e.model = model;
  e.pretrain = pretrain;
  e.train = train;
  e.timing_repetitions = timing_repetitions;
  return e;
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json model_json = model.to_json();
  // Geometry is derived from the data, not configured.
  for (const char* key : {"window", "features", "n_protocol"}) model_json.erase(key);
  return {{"data",
           {{"train_path", data.train_path},
            {"test_path", data.test_path},
            {"window_size", data.window_size},
            {"stride", data.stride},
            {"validation_fraction", data.validation_fraction},
            {"seed", data.seed},
            {"max_train_records", data.max_train_records},
            {"max_test_records", data.max_test_records}}},
          {"model", model_json},
          {"pretrain", pretrain.to_json()},
          {"train", train.to_json()},
          {"output", {{"dir", output.dir}}}};
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
  RunConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "data") {
      c.data = data_from_json(value);
    } else if (key == "model") {
      for (const char* derived : {"window", "features", "n_protocol"}) {
        if (value.is_object() && value.contains(derived)) {
          throw ConfigError(std::string("model.") + derived + " is derived from the data and cannot be configured");
        }
      }
      c.model = ModelConfig::from_json(value);
    } else if (key == "pretrain") {
      c.pretrain = PretrainConfig::from_json(value);
    } else if (key == "train") {
      c.train = TrainConfig::from_json(value);
    } else if (key == "output") {
      c.output = output_from_json(value);
    } else {
      throw ConfigError("unknown config section '" + key + "'");
    }
  }
  c.model.window = c.data.window_size;
  const bool model_threshold = j.contains("model") && j["model"].contains("threshold");
  const bool train_threshold = j.contains("train") && j["train"].contains("threshold");
  if (model_threshold && train_threshold && c.model.threshold != c.train.threshold) {
    throw ConfigError("model.threshold and train.threshold disagree");
  }
  if (model_threshold) c.train.threshold = c.model.threshold;
  c.model.threshold = c.train.threshold;
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  if (path.empty()) return RunConfig{};
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(j);
}

}  // namespace tsan::cli
