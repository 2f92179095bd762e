#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "run_config.hpp"
#include "tsan/data/preprocess.hpp"

namespace tsan::cli {

// File names inside an output directory.
inline constexpr const char* kTrainContainer = "train.bin";
inline constexpr const char* kValidationContainer = "validation.bin";
inline constexpr const char* kTestContainer = "test.bin";
inline constexpr const char* kRowsContainer = "train_rows.bin";
inline constexpr const char* kPreprocessingFile = "preprocessing.json";
inline constexpr const char* kPretrainedFile = "pretrained.bin";
inline constexpr const char* kCheckpointFile = "checkpoint.bin";
inline constexpr const char* kHistoryFile = "history.csv";
inline constexpr const char* kMetricsFile = "metrics.json";
inline constexpr const char* kRocFile = "roc.csv";
inline constexpr const char* kPredictionsFile = "predictions.csv";
inline constexpr const char* kSynthTrainFile = "synth_train.txt";
inline constexpr const char* kSynthTestFile = "synth_test.txt";

struct Options {
  std::filesystem::path config;
  std::filesystem::path out;  // empty: output.dir from the config
  std::optional<std::uint64_t> seed;
  std::filesystem::path from_pretrained;
  std::vector<std::string> variants;
  std::optional<double> threshold;
  std::filesystem::path data;  // preprocessed containers; empty: the output directory
  std::filesystem::path checkpoint;
  std::filesystem::path input;
  std::size_t n = 2000;
  std::optional<std::size_t> test_n;
  double dos_fraction = 0.5;
  std::size_t repetitions = 3;
  std::size_t samples = 50;
  std::size_t batch = 4;
};

// Each command writes its outputs plus a run manifest into the output
// directory and returns a JSON summary. Errors surface as tsan exceptions.
nlohmann::json synth_data(const Options& options);
nlohmann::json preprocess(const Options& options);
nlohmann::json pretrain(const Options& options);
nlohmann::json train(const Options& options);
nlohmann::json evaluate(const Options& options);
nlohmann::json ablate(const Options& options);
nlohmann::json predict(const Options& options);
nlohmann::json gradcheck(const Options& options);

// Dispatches by command name, prints the summary to `out` and errors to
// `err`. Returns 0 on success, 1 on contract/config/parse errors, 2 on I/O
// errors.
int run(const std::string& command, const Options& options, std::ostream& out, std::ostream& err);

// Containers written by `preprocess`.
data::PreparedData load_prepared(const std::filesystem::path& dir);
void save_prepared(const std::filesystem::path& dir, const data::PreparedData& prepared);

}  // namespace tsan::cli
