#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "tsan/data/preprocess.hpp"
#include "tsan/model/config.hpp"
#include "tsan/pretrain/pretrain.hpp"
#include "tsan/train/experiment.hpp"
#include "tsan/train/trainer.hpp"

namespace tsan::cli {

struct DataConfig {
  std::string train_path = "data/KDDTrain+.txt";
  std::string test_path = "data/KDDTest+.txt";
  std::size_t window_size = 5;
  std::size_t stride = 2;
  double validation_fraction = 0.2;
  std::uint64_t seed = 42;
  std::size_t max_train_records = 0;  // 0 keeps every record
  std::size_t max_test_records = 0;

  data::PreprocessOptions preprocess_options() const;
};

struct OutputConfig {
  std::string dir = "runs/latest";
};

// Full run configuration. Every field has a default, so "{}" is a complete
// configuration; unknown keys are rejected with ConfigError.
struct RunConfig {
  DataConfig data;
  ModelConfig model;
  PretrainConfig pretrain;
  TrainConfig train;
  OutputConfig output;

  // Sets the data, pretraining and training seeds at once.
  void override_seed(std::uint64_t seed);
  ExperimentConfig experiment(std::size_t timing_repetitions) const;

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  // An empty path yields the defaults.
  static RunConfig load(const std::filesystem::path& path);
};

}  // namespace tsan::cli
