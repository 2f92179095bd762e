#include "tsan/train/experiment.hpp"

#include <array>

#include "tsan/autodiff/container.hpp"
#include "tsan/errors.hpp"
#include "tsan/log.hpp"
#include "tsan/model/checkpoint.hpp"

namespace tsan {
namespace {

constexpr std::array<AblationVariant, 6> kVariants = {
    AblationVariant::full,           AblationVariant::no_temporal,  AblationVariant::no_spatial,
    AblationVariant::no_cross_attention, AblationVariant::no_multitask, AblationVariant::no_pretrain};

}  // namespace

std::span<const AblationVariant> all_variants() { return kVariants; }

std::string to_string(AblationVariant v) {
  switch (v) {
    case AblationVariant::full: return "full";
    case AblationVariant::no_temporal: return "no_temporal";
    case AblationVariant::no_spatial: return "no_spatial";
    case AblationVariant::no_cross_attention: return "no_cross_attention";
    case AblationVariant::no_multitask: return "no_multitask";
    case AblationVariant::no_pretrain: return "no_pretrain";
  }
  return "unknown";
}

AblationVariant parse_variant(std::string_view name) {
  for (AblationVariant v : kVariants) {
    if (to_string(v) == name) return v;
  }
  throw ConfigError("unknown ablation variant '" + std::string(name) +
                    "' (expected full, no_temporal, no_spatial, no_cross_attention, no_multitask, no_pretrain)");
}

std::string table_label(AblationVariant v) {
  switch (v) {
    case AblationVariant::full: return "TSAN (Full Model)";
    case AblationVariant::no_temporal: return "TSAN w/o Temporal Encoder";
    case AblationVariant::no_spatial: return "TSAN w/o Spatial Encoder";
    case AblationVariant::no_cross_attention: return "TSAN w/o Cross-Attention";
    case AblationVariant::no_multitask: return "TSAN w/o Multi-Task Learning";
    case AblationVariant::no_pretrain: return "TSAN w/o Pre-training";
  }
  return "unknown";
}

ModelConfig apply_variant(ModelConfig config, AblationVariant v) {
  if (v == AblationVariant::no_temporal) config.use_temporal = false;
  if (v == AblationVariant::no_spatial) config.use_spatial = false;
  if (v == AblationVariant::no_cross_attention) config.fusion = FusionMode::concat;
  return config;
}

LossWeights apply_variant(LossWeights weights, AblationVariant v) {
  if (v == AblationVariant::no_multitask) weights.traffic = weights.protocol = weights.consistency = 0.0;
  return weights;
}

bool uses_pretraining(AblationVariant v) { return v != AblationVariant::no_pretrain; }

ModelConfig complete_model_config(ModelConfig config, const data::PreparedData& data) {
  config.window = data.train.window;
  config.features = data.train.features;
  config.n_protocol = data.schema.protocol_vocab.size();
  return config;
}

TaskDataset training_tasks(const data::WindowedDataset& windows, std::size_t n_protocol, const TrainConfig& config) {
  std::mt19937_64 rng(config.seed ^ 0xa5a5a5a5ull);
  return build_aux_targets(windows, n_protocol, config.shuffle_fraction, rng);
}

TaskDataset evaluation_tasks(const data::WindowedDataset& windows, std::size_t n_protocol) {
  std::mt19937_64 rng(0);
  return build_aux_targets(windows, n_protocol, 0.0, rng);
}

metrics::MetricsReport evaluate_model(TsanModel<float>& model, const data::WindowedDataset& dataset,
                                      std::size_t n_protocol, double threshold, std::size_t timing_repetitions) {
  const TaskDataset tasks = evaluation_tasks(dataset, n_protocol);
  const Predictions pred = predict(model, tasks, LossWeights{});
  metrics::MetricsReport report = metrics::evaluate_scores(pred.scores, pred.labels, threshold);
  if (timing_repetitions > 0) report.timing = metrics::measure_timing(model, dataset, timing_repetitions);
  report.timing.model_size_bytes = encode_container(make_checkpoint(model)).size();
  return report;
}

RunOutcome run_variant(AblationVariant variant, const data::PreparedData& data, const ExperimentConfig& config,
                       const ParameterSet<float>* pretrained) {
  RunOutcome out;
  out.variant = variant;
  const ModelConfig model_config = apply_variant(complete_model_config(config.model, data), variant);
  TrainConfig train_config = config.train;
  train_config.loss = apply_variant(config.train.loss, variant);
  train_config.validate();
  if (data.test.empty()) throw ContractError("test set is empty");

  out.model = std::make_unique<TsanModel<float>>(model_config, train_config.seed);
  if (uses_pretraining(variant)) {
    if (pretrained) {
      out.transferred = transfer_weights(*pretrained, out.model->params());
    } else if (config.pretrain.epochs > 0) {
      out.pretrain = pretrain_encoders(model_config, data.train, data.train_rows, config.pretrain);
      out.transferred = transfer_weights(out.pretrain->encoders, out.model->params());
    }
  }

  const std::size_t n_protocol = model_config.n_protocol;
  const TaskDataset train_set = training_tasks(data.train, n_protocol, train_config);
  const TaskDataset validation_set = evaluation_tasks(data.validation, n_protocol);
  out.training = train(*out.model, train_set, validation_set, train_config);
  out.test = evaluate_model(*out.model, data.test, n_protocol, train_config.threshold, config.timing_repetitions);
  out.test.timing.train_seconds = out.training.train_seconds;
  log::info(to_string(variant) + ": test accuracy " + std::to_string(out.test.classification.accuracy));
  return out;
}

std::vector<RunOutcome> run_ablation(std::span<const AblationVariant> variants, const data::PreparedData& data,
                                     const ExperimentConfig& config) {
  std::vector<RunOutcome> outcomes;
  for (AblationVariant v : variants) outcomes.push_back(run_variant(v, data, config));
  return outcomes;
}

nlohmann::json RunOutcome::to_json() const {
  nlohmann::json j = {{"variant", to_string(variant)},
                      {"label", table_label(variant)},
                      {"model_config", model ? model->config().to_json() : nlohmann::json()},
                      {"transferred", transferred},
                      {"training", training.to_json()},
                      {"test", test.to_json()}};
  if (pretrain) j["pretrain"] = {{"temporal", pretrain->temporal.to_json()}, {"spatial", pretrain->spatial.to_json()}};
  return j;
}

nlohmann::json ablation_table(const std::vector<RunOutcome>& outcomes) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& o : outcomes) {
    const auto& c = o.test.classification;
    rows.push_back({{"variant", to_string(o.variant)},
                    {"label", table_label(o.variant)},
                    {"accuracy", c.accuracy},
                    {"precision", c.precision},
                    {"recall", c.recall},
                    {"f1", c.f1},
                    {"auc_roc", o.test.roc ? nlohmann::json(o.test.roc->auc) : nlohmann::json()}});
  }
  return rows;
}

}  // namespace tsan
