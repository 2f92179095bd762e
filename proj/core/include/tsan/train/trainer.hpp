#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <vector>

#include <nlohmann/json.hpp>

#include "tsan/model/tsan_model.hpp"
#include "tsan/objective/multitask.hpp"

namespace tsan {

struct TrainConfig {
  double lr = 1e-3;
  std::size_t batch = 128;
  std::size_t max_epochs = 5;
  std::size_t patience = 2;
  std::uint64_t seed = 42;
  LossWeights loss;
  double threshold = 0.5;
  double shuffle_fraction = 0.5;
  bool early_stopping = true;
  // Stop as soon as eval-mode training accuracy reaches this value.
  std::optional<double> stop_at_train_accuracy;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  LossBreakdown train;    // size-weighted means over the epoch's batches
  double val_accuracy = 0.0;
  double val_main_loss = 0.0;
  std::optional<double> train_accuracy;
  bool improved = false;
  double seconds = 0.0;

  nlohmann::json to_json() const;
};

// Tracks the best validation accuracy seen so far. An epoch improves only if
// it is strictly better than every earlier one.
class EarlyStopState {
 public:
  explicit EarlyStopState(std::size_t patience) : patience_(patience) {}

  // Returns true if `accuracy` is a new best.
  bool observe(std::size_t epoch, double accuracy);
  bool should_stop() const noexcept { return since_improvement_ >= patience_; }

  double best_accuracy() const noexcept { return best_accuracy_; }
  std::size_t best_epoch() const noexcept { return best_epoch_; }
  std::size_t epochs_since_improvement() const noexcept { return since_improvement_; }

 private:
  std::size_t patience_;
  double best_accuracy_ = -1.0;
  std::size_t best_epoch_ = 0;
  std::size_t since_improvement_ = 0;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_val_accuracy = 0.0;
  double train_seconds = 0.0;
  bool stopped_early = false;
  LossWeights effective_weights;

  nlohmann::json to_json() const;
};

// Visiting order of the n training windows for one epoch.
std::vector<std::size_t> epoch_order(std::size_t n, std::mt19937_64& rng);

// Mini-batch Adam training with per-epoch validation at the threshold and
// early stopping on main-task accuracy. On return the model holds the
// parameters of the best epoch. An empty validation set disables early
// stopping (with a warning) and keeps the last epoch.
TrainResult train(TsanModel<float>& model, const TaskDataset& train_set, const TaskDataset& validation_set,
                  const TrainConfig& config);

struct Predictions {
  std::vector<double> scores;  // y_main per window
  std::vector<int> labels;
  LossBreakdown losses;        // eval-mode, size-weighted over batches
};

// Eval-mode forward over a whole dataset in batches.
Predictions predict(TsanModel<float>& model, const TaskDataset& dataset, const LossWeights& weights,
                    std::size_t batch = 128);

double accuracy_at(const Predictions& predictions, double threshold);

// Columns: epoch,l_main,l_traffic,l_protocol,l_consistency,l_total,val_accuracy
void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history);

// Copies of parameter values, used to restore the best epoch.
std::vector<Tensor> snapshot(const ParameterSet<float>& params);
void restore(ParameterSet<float>& params, const std::vector<Tensor>& values);

}  // namespace tsan
