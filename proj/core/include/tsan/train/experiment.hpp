#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "tsan/data/preprocess.hpp"
#include "tsan/metrics/metrics.hpp"
#include "tsan/model/tsan_model.hpp"
#include "tsan/pretrain/pretrain.hpp"
#include "tsan/train/trainer.hpp"

namespace tsan {

enum class AblationVariant { full, no_temporal, no_spatial, no_cross_attention, no_multitask, no_pretrain };

std::span<const AblationVariant> all_variants();
std::string to_string(AblationVariant variant);
// Throws ConfigError for unknown names.
AblationVariant parse_variant(std::string_view name);
// Row label for the ablation table, e.g. "TSAN w/o Temporal Encoder".
std::string table_label(AblationVariant variant);

ModelConfig apply_variant(ModelConfig config, AblationVariant variant);
LossWeights apply_variant(LossWeights weights, AblationVariant variant);
bool uses_pretraining(AblationVariant variant);

struct ExperimentConfig {
  ModelConfig model;
  PretrainConfig pretrain;
  TrainConfig train;
  std::size_t timing_repetitions = 3;
};

// Fills window, features and n_protocol from the prepared data.
ModelConfig complete_model_config(ModelConfig config, const data::PreparedData& data);

// Training set with shuffled-window consistency targets, and evaluation sets
// with intact windows.
TaskDataset training_tasks(const data::WindowedDataset& windows, std::size_t n_protocol, const TrainConfig& config);
TaskDataset evaluation_tasks(const data::WindowedDataset& windows, std::size_t n_protocol);

struct RunOutcome {
  AblationVariant variant = AblationVariant::full;
  std::unique_ptr<TsanModel<float>> model;
  std::optional<PretrainResult> pretrain;
  std::vector<std::string> transferred;
  TrainResult training;
  metrics::MetricsReport test;

  nlohmann::json to_json() const;
};

// Pretrain (when the variant calls for it and pretrain.epochs > 0, unless
// `pretrained` encoders are supplied) -> fresh model -> weight transfer ->
// supervised training -> test-set evaluation with timing.
RunOutcome run_variant(AblationVariant variant, const data::PreparedData& data, const ExperimentConfig& config,
                       const ParameterSet<float>* pretrained = nullptr);

std::vector<RunOutcome> run_ablation(std::span<const AblationVariant> variants, const data::PreparedData& data,
                                     const ExperimentConfig& config);

// One row per outcome: variant, label, accuracy, precision, recall, f1, auc_roc.
nlohmann::json ablation_table(const std::vector<RunOutcome>& outcomes);

metrics::MetricsReport evaluate_model(TsanModel<float>& model, const data::WindowedDataset& dataset,
                                      std::size_t n_protocol, double threshold, std::size_t timing_repetitions = 0);

}  // namespace tsan
