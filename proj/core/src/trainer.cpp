#include "tsan/train/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include "tsan/autodiff/adam.hpp"
#include "tsan/errors.hpp"
#include "tsan/log.hpp"

namespace tsan {
namespace {

void accumulate(LossBreakdown& acc, const LossBreakdown& l, double weight) {
  acc.l_main += l.l_main * weight;
  acc.l_traffic += l.l_traffic * weight;
  acc.l_protocol += l.l_protocol * weight;
  acc.l_consistency += l.l_consistency * weight;
  acc.l_total += l.l_total * weight;
}

void divide(LossBreakdown& acc, double n) {
  acc.l_main /= n;
  acc.l_traffic /= n;
  acc.l_protocol /= n;
  acc.l_consistency /= n;
  acc.l_total /= n;
}

nlohmann::json losses_json(const LossBreakdown& l) {
  return {{"l_main", l.l_main},
          {"l_traffic", l.l_traffic},
          {"l_protocol", l.l_protocol},
          {"l_consistency", l.l_consistency},
          {"l_total", l.l_total}};
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("train.lr must be > 0");
  if (batch == 0) throw ConfigError("train.batch must be >= 1");
  if (max_epochs == 0) throw ConfigError("train.max_epochs must be >= 1");
  if (patience == 0) throw ConfigError("train.patience must be >= 1");
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw ConfigError("train.threshold must lie in [0, 1]");
  if (!(shuffle_fraction >= 0.0 && shuffle_fraction <= 1.0)) {
    throw ConfigError("train.shuffle_fraction must lie in [0, 1]");
  }
  loss.validate();
}

nlohmann::json TrainConfig::to_json() const {
  nlohmann::json j = {{"lr", lr},
                      {"batch", batch},
                      {"max_epochs", max_epochs},
                      {"patience", patience},
                      {"seed", seed},
                      {"loss", loss.to_json()},
                      {"threshold", threshold},
                      {"shuffle_fraction", shuffle_fraction},
                      {"early_stopping", early_stopping}};
  j["stop_at_train_accuracy"] = stop_at_train_accuracy ? nlohmann::json(*stop_at_train_accuracy) : nlohmann::json();
  return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("train config must be a JSON object");
  TrainConfig c;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "lr") c.lr = value.get<double>();
      else if (key == "batch") c.batch = value.get<std::size_t>();
      else if (key == "max_epochs") c.max_epochs = value.get<std::size_t>();
      else if (key == "patience") c.patience = value.get<std::size_t>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "loss") c.loss = LossWeights::from_json(value);
      else if (key == "threshold") c.threshold = value.get<double>();
      else if (key == "shuffle_fraction") c.shuffle_fraction = value.get<double>();
      else if (key == "early_stopping") c.early_stopping = value.get<bool>();
      else if (key == "stop_at_train_accuracy") {
        if (value.is_null()) c.stop_at_train_accuracy.reset();
        else c.stop_at_train_accuracy = value.get<double>();
      } else {
        throw ConfigError("unknown train config key '" + key + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("train config key '" + key + "': " + e.what());
    }
  }
  c.validate();
  return c;
}

nlohmann::json EpochRecord::to_json() const {
  nlohmann::json j = {{"epoch", epoch},
                      {"train", losses_json(train)},
                      {"val_accuracy", val_accuracy},
                      {"val_main_loss", val_main_loss},
                      {"improved", improved},
                      {"seconds", seconds}};
  if (train_accuracy) j["train_accuracy"] = *train_accuracy;
  return j;
}

bool EarlyStopState::observe(std::size_t epoch, double accuracy) {
  if (accuracy > best_accuracy_) {
    best_accuracy_ = accuracy;
    best_epoch_ = epoch;
    since_improvement_ = 0;
    return true;
  }
  ++since_improvement_;
  return false;
}

nlohmann::json TrainResult::to_json() const {
  nlohmann::json h = nlohmann::json::array();
  for (const auto& e : history) h.push_back(e.to_json());
  return {{"history", h},
          {"best_epoch", best_epoch},
          {"best_val_accuracy", best_val_accuracy},
          {"train_seconds", train_seconds},
          {"stopped_early", stopped_early},
          {"effective_loss_weights", effective_weights.to_json()}};
}

std::vector<Tensor> snapshot(const ParameterSet<float>& params) {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(p.value);
  return out;
}

void restore(ParameterSet<float>& params, const std::vector<Tensor>& values) {
  if (values.size() != params.size()) throw ContractError("snapshot does not match the parameter set");
  std::size_t i = 0;
  for (auto& p : params) p.value = values[i++];
}

Predictions predict(TsanModel<float>& model, const TaskDataset& dataset, const LossWeights& weights,
                    std::size_t batch) {
  Predictions out;
  const std::size_t n = dataset.size();
  out.scores.reserve(n);
  out.labels.reserve(n);
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < n; start += batch) {
    idx.resize(std::min(n, start + batch) - start);
    std::iota(idx.begin(), idx.end(), start);
    const TaskBatch<float> b = make_batch<float>(dataset, idx);
    Tape<float> tape;
    const ForwardOutputs<float> fwd = model.forward(tape, b.x_temporal, b.x_spatial, ForwardContext{Mode::eval, nullptr});
    const LossTerms<float> terms = compute_losses(fwd, b, weights);
    accumulate(out.losses, terms.values, static_cast<double>(idx.size()));
    const Tensor& y = fwd.y_main.value();
    for (std::size_t r = 0; r < idx.size(); ++r) {
      out.scores.push_back(y[r]);
      out.labels.push_back(b.y[r] > 0.5f ? 1 : 0);
    }
  }
  if (n > 0) divide(out.losses, static_cast<double>(n));
  return out;
}

double accuracy_at(const Predictions& p, double threshold) {
  if (p.scores.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < p.scores.size(); ++i) {
    correct += threshold_decision(p.scores[i], threshold) == p.labels[i] ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(p.scores.size());
}

std::vector<std::size_t> epoch_order(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

TrainResult train(TsanModel<float>& model, const TaskDataset& train_set, const TaskDataset& validation_set,
                  const TrainConfig& config) {
  config.validate();
  if (train_set.size() == 0) throw ContractError("training set is empty");
  TrainResult result;
  result.effective_weights = config.loss;
  if (!train_set.aux.consistency_enabled && config.loss.consistency != 0.0) {
    log::warn("consistency task disabled for this window size; its loss weight is set to 0");
    result.effective_weights.consistency = 0.0;
  }
  const bool has_validation = validation_set.size() > 0;
  const bool early_stopping = config.early_stopping && has_validation;
  if (!has_validation) log::warn("validation set is empty; early stopping disabled");

  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(config.seed);
  const AdamConfig adam{config.lr};
  EarlyStopState stop(config.patience);
  std::vector<Tensor> best = snapshot(model.params());
  const std::size_t n = train_set.size();

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto epoch_start = std::chrono::steady_clock::now();
    const std::vector<std::size_t> order = epoch_order(n, rng);
    EpochRecord record;
    record.epoch = epoch;
    for (std::size_t b0 = 0; b0 < n; b0 += config.batch) {
      const std::span<const std::size_t> idx(order.data() + b0, std::min(n, b0 + config.batch) - b0);
      const TaskBatch<float> batch = make_batch<float>(train_set, idx);
      Tape<float> tape;
      const ForwardOutputs<float> fwd =
          model.forward(tape, batch.x_temporal, batch.x_spatial, ForwardContext{Mode::train, &rng});
      const LossTerms<float> terms = compute_losses(fwd, batch, result.effective_weights);
      backward(tape, terms.total, model.params());
      adam_step(model.params(), adam);
      accumulate(record.train, terms.values, static_cast<double>(idx.size()));
    }
    divide(record.train, static_cast<double>(n));

    if (has_validation) {
      const Predictions val = predict(model, validation_set, result.effective_weights, config.batch);
      record.val_accuracy = accuracy_at(val, config.threshold);
      record.val_main_loss = val.losses.l_main;
      record.improved = stop.observe(epoch, record.val_accuracy);
    } else {
      record.improved = true;
    }
    if (record.improved && has_validation) best = snapshot(model.params());
    if (config.stop_at_train_accuracy) {
      record.train_accuracy = accuracy_at(predict(model, train_set, result.effective_weights, config.batch),
                                          config.threshold);
    }
    record.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_start).count();
    log::info("epoch " + std::to_string(epoch) + " l_total " + std::to_string(record.train.l_total) +
              " val_accuracy " + std::to_string(record.val_accuracy));
    result.history.push_back(record);

    if (config.stop_at_train_accuracy && *record.train_accuracy >= *config.stop_at_train_accuracy) break;
    if (early_stopping && stop.should_stop() && epoch < config.max_epochs) {
      result.stopped_early = true;
      break;
    }
  }

  // The overfit mode keeps the final parameters; otherwise the best epoch wins.
  if (has_validation && !config.stop_at_train_accuracy) {
    restore(model.params(), best);
    result.best_epoch = stop.best_epoch();
    result.best_val_accuracy = stop.best_accuracy();
  } else {
    result.best_epoch = result.history.back().epoch;
    result.best_val_accuracy = result.history.back().val_accuracy;
  }
  result.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "epoch,l_main,l_traffic,l_protocol,l_consistency,l_total,val_accuracy\n";
  out.precision(9);
  for (const auto& e : history) {
    out << e.epoch << ',' << e.train.l_main << ',' << e.train.l_traffic << ',' << e.train.l_protocol << ','
        << e.train.l_consistency << ',' << e.train.l_total << ',' << e.val_accuracy << '\n';
  }
  if (!out) throw IoError("error while writing " + path.string());
}

}  // namespace tsan
