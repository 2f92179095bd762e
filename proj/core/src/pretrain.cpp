#include "tsan/pretrain/pretrain.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

#include "tsan/autodiff/adam.hpp"
#include "tsan/autodiff/ops.hpp"
#include "tsan/errors.hpp"
#include "tsan/log.hpp"

namespace tsan {
namespace {

Tensor gather(const Tensor& t, std::span<const std::size_t> idx) {
  Shape shape = t.shape();
  shape[0] = idx.size();
  const std::size_t row = numel(Shape(shape.begin() + 1, shape.end()));
  Tensor out(shape);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    std::copy_n(t.raw() + idx[r] * row, row, out.raw() + r * row);
  }
  return out;
}

struct Head {
  ParameterSet<float> params;

  Head(const std::string& name, std::size_t in, std::size_t out, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto& w = params.add(name + ".w", Tensor({in, out}));
    glorot_uniform(w.value, rng);
    params.add(name + ".b", Tensor({out}));
  }

  Var<float> apply(Tape<float>& tape, const Var<float>& h) {
    auto it = params.begin();
    const Var<float> w = tape.parameter(*it);
    const Var<float> b = tape.parameter(*++it);
    return linear(h, w, b);
  }
};

using EncodeFn = std::function<Var<float>(Tape<float>&, const Tensor&, const ForwardContext&)>;

// Shared minibatch loop for both pretraining objectives.
PretrainCurve fit(TsanModel<float>& model, const std::string& prefix, Head& head, const EncodeFn& encode,
                  const Tensor& inputs, const Tensor& targets, const PretrainConfig& config) {
  config.validate();
  const std::size_t n = inputs.dim(0);
  std::vector<Parameter<float>*> trainable;
  for (auto& p : model.params()) {
    if (p.trainable && p.path.starts_with(prefix)) trainable.push_back(&p);
  }
  for (auto& p : head.params) trainable.push_back(&p);

  auto evaluate = [&] {
    double acc = 0.0;
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < n; start += config.batch) {
      const std::size_t end = std::min(n, start + config.batch);
      idx.resize(end - start);
      std::iota(idx.begin(), idx.end(), start);
      Tape<float> tape;
      const Var<float> pred = head.apply(tape, encode(tape, gather(inputs, idx), ForwardContext{Mode::eval, nullptr}));
      acc += static_cast<double>(mean_squared_error(pred, gather(targets, idx)).value().item()) *
             static_cast<double>(idx.size());
    }
    return acc / static_cast<double>(n);
  };

  PretrainCurve curve;
  curve.initial_loss = evaluate();
  std::mt19937_64 rng(config.seed);
  const AdamConfig adam{config.lr};
  std::vector<std::size_t> order(n);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    double acc = 0.0;
    for (std::size_t start = 0; start < n; start += config.batch) {
      const std::span<const std::size_t> idx(order.data() + start, std::min(n, start + config.batch) - start);
      Tape<float> tape;
      const Var<float> pred = head.apply(tape, encode(tape, gather(inputs, idx), ForwardContext{Mode::train, &rng}));
      const Var<float> loss = mean_squared_error(pred, gather(targets, idx));
      for (auto* p : trainable) {
        p->grad.fill(0.0f);
        p->grad_ready = true;
      }
      tape.backward(loss);
      adam_step<float>(trainable, adam);
      acc += static_cast<double>(loss.value().item()) * static_cast<double>(idx.size());
    }
    curve.epoch_loss.push_back(acc / static_cast<double>(n));
    log::debug(prefix + " pretraining epoch " + std::to_string(epoch + 1) + " loss " +
               std::to_string(curve.epoch_loss.back()));
  }
  curve.final_loss = config.epochs == 0 ? curve.initial_loss : evaluate();
  return curve;
}

}  // namespace

void PretrainConfig::validate() const {
  if (batch == 0) throw ConfigError("pretrain.batch must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("pretrain.lr must be > 0");
}

nlohmann::json PretrainConfig::to_json() const {
  return {{"epochs", epochs}, {"batch", batch}, {"lr", lr}, {"seed", seed}};
}

PretrainConfig PretrainConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("pretrain config must be a JSON object");
  PretrainConfig c;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "epochs") c.epochs = value.get<std::size_t>();
      else if (key == "batch") c.batch = value.get<std::size_t>();
      else if (key == "lr") c.lr = value.get<double>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else throw ConfigError("unknown pretrain config key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("pretrain config key '" + key + "': " + e.what());
    }
  }
  c.validate();
  return c;
}

nlohmann::json PretrainCurve::to_json() const {
  return {{"initial_loss", initial_loss}, {"final_loss", final_loss}, {"epoch_loss", epoch_loss}};
}

NextStepPairs next_step_pairs(const data::WindowedDataset& windows, const Tensor& rows) {
  if (rows.rank() != 2 || rows.dim(1) != windows.features) {
    throw ShapeError("rows must be (n, " + std::to_string(windows.features) + "), got " + to_string(rows.shape()));
  }
  const std::size_t n_rows = rows.dim(0), f = windows.features, w = windows.window;
  NextStepPairs out;
  for (std::size_t j = 0; j < windows.size(); ++j) {
    if (windows.raw_row_index[j] + 1 < n_rows) {
      out.window_index.push_back(j);
      out.target_row.push_back(windows.raw_row_index[j] + 1);
    }
  }
  const std::size_t m = out.size();
  out.x_temporal = gather(windows.x_temporal, out.window_index);
  out.target = gather(rows, out.target_row);
  if (m == 0) {
    out.x_temporal = Tensor({0, w, f});
    out.target = Tensor({0, f});
  }
  return out;
}

PretrainCurve pretrain_temporal(TsanModel<float>& model, const NextStepPairs& pairs, const PretrainConfig& config) {
  if (pairs.size() == 0) throw ContractError("no window has a following row to predict");
  const ModelConfig& c = model.config();
  Head head("pretrain.next_step", c.d_model, c.features, config.seed ^ 0x5eedull);
  const EncodeFn encode = [&](Tape<float>& tape, const Tensor& x, const ForwardContext& ctx) {
    return model.temporal_forward(tape, x, ctx);
  };
  return fit(model, "temporal.", head, encode, pairs.x_temporal, pairs.target, config);
}

PretrainCurve pretrain_spatial(TsanModel<float>& model, const Tensor& rows, const PretrainConfig& config) {
  if (rows.rank() != 2 || rows.dim(0) == 0) throw ContractError("spatial pretraining needs a non-empty (N, f) table");
  const ModelConfig& c = model.config();
  Head head("pretrain.reconstruction", c.d_spat, c.features, config.seed ^ 0xfaceull);
  const EncodeFn encode = [&](Tape<float>& tape, const Tensor& x, const ForwardContext& ctx) {
    return model.spatial_forward(tape, x, ctx);
  };
  return fit(model, "spatial.", head, encode, rows, rows, config);
}

ParameterSet<float> encoder_parameters(const ParameterSet<float>& params) {
  ParameterSet<float> out;
  for (const auto& p : params) {
    if (TsanModel<float>::is_encoder_path(p.path)) out.add(p.path, p.value, p.trainable);
  }
  return out;
}

std::vector<std::string> transfer_weights(const ParameterSet<float>& pretrained, ParameterSet<float>& target) {
  for (const auto& src : pretrained) {
    if (!TsanModel<float>::is_encoder_path(src.path)) continue;
    const auto* dst = target.find(src.path);
    if (dst && dst->value.shape() != src.value.shape()) {
      throw ShapeError("pretrained '" + src.path + "' has shape " + to_string(src.value.shape()) +
                       ", model expects " + to_string(dst->value.shape()));
    }
  }
  std::vector<std::string> manifest;
  for (const auto& src : pretrained) {
    if (!TsanModel<float>::is_encoder_path(src.path)) continue;
    if (auto* dst = target.find(src.path)) {
      dst->value = src.value;
      manifest.push_back(src.path);
    }
  }
  return manifest;
}

PretrainResult pretrain_encoders(const ModelConfig& config, const data::WindowedDataset& train,
                                 const Tensor& train_rows, const PretrainConfig& pretrain) {
  pretrain.validate();
  TsanModel<float> model(config, pretrain.seed);
  PretrainResult result;
  if (pretrain.epochs > 0 && config.use_temporal) {
    const NextStepPairs pairs = next_step_pairs(train, train_rows);
    if (pairs.size() < train.size()) {
      log::info(std::to_string(train.size() - pairs.size()) + " window(s) without a next row left out of pretraining");
    }
    result.temporal = pretrain_temporal(model, pairs, pretrain);
  }
  if (pretrain.epochs > 0 && config.use_spatial) {
    result.spatial = pretrain_spatial(model, train.x_spatial, pretrain);
  }
  result.encoders = encoder_parameters(model.params());
  return result;
}

}  // namespace tsan
