#include "tsan/model/tsan_model.hpp"

#include <cmath>

#include "tsan/errors.hpp"

namespace tsan {
namespace {

// Stable per-path stream so that models which share a parameter path (for
// example ablation variants) draw identical initial values for it.
std::uint64_t path_seed(std::uint64_t seed, const std::string& path) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : path) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h ^ (seed + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2));
}

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

template <typename T>
void glorot_uniform(BasicTensor<T>& t, std::mt19937_64& rng) {
  const Shape& s = t.shape();
  double fan_in = 1.0, fan_out = 1.0;
  if (s.size() == 2) {
    fan_in = static_cast<double>(s[0]);
    fan_out = static_cast<double>(s[1]);
  } else if (s.size() == 3) {
    fan_in = static_cast<double>(s[0] * s[1]);
    fan_out = static_cast<double>(s[0] * s[2]);
  } else if (s.size() == 1) {
    fan_in = fan_out = static_cast<double>(s[0]);
  }
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (T& v : t.data()) v = static_cast<T>(dist(rng));
}

namespace {

template <typename T>
Var<T> split_heads(const Var<T>& v, std::size_t batch, std::size_t seq, std::size_t heads, std::size_t dh) {
  if (heads == 1) return v;
  return reshape(permute(reshape(v, {batch, seq, heads, dh}), {0, 2, 1, 3}), {batch * heads, seq, dh});
}

template <typename T>
Var<T> merge_heads(const Var<T>& v, std::size_t batch, std::size_t seq, std::size_t heads, std::size_t dh) {
  if (heads == 1) return v;
  return reshape(permute(reshape(v, {batch, heads, seq, dh}), {0, 2, 1, 3}), {batch, seq, heads * dh});
}

}  // namespace

int threshold_decision(double probability, double threshold) { return probability > threshold ? 1 : 0; }

template <typename T>
Var<T> multi_head_self_attention(const Var<T>& x, const Var<T>& wq, const Var<T>& wk, const Var<T>& wv,
                                 const Var<T>& wo, std::size_t heads, Var<T>* attention) {
  const Shape& s = x.shape();
  if (s.size() != 3) throw ShapeError("attention input must be (B, S, D), got " + to_string(s));
  const std::size_t batch = s[0], seq = s[1], d = s[2];
  if (heads == 0 || d % heads != 0) {
    throw ShapeError("attention width " + std::to_string(d) + " not divisible by " + std::to_string(heads) +
                     " heads");
  }
  const std::size_t dh = d / heads;
  const Var<T> q = split_heads(linear(x, wq), batch, seq, heads, dh);
  const Var<T> k = split_heads(linear(x, wk), batch, seq, heads, dh);
  const Var<T> v = split_heads(linear(x, wv), batch, seq, heads, dh);
  const Var<T> weights = softmax(scale(bmm(q, k, true), static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)))));
  if (attention) *attention = weights;
  return linear(merge_heads(bmm(weights, v), batch, seq, heads, dh), wo);
}

template <typename T>
TsanModel<T>::TsanModel(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  build();
  initialize(seed);
}

template <typename T>
void TsanModel<T>::build() {
  const ModelConfig& c = config_;
  auto dense = [&](const std::string& prefix, std::size_t in, std::size_t out) {
    params_.add(prefix + ".w", BasicTensor<T>({in, out}));
    params_.add(prefix + ".b", BasicTensor<T>({out}));
  };
  auto attention = [&](const std::string& prefix, std::size_t d) {
    for (const char* name : {".wq", ".wk", ".wv", ".wo"}) params_.add(prefix + name, BasicTensor<T>({d, d}));
  };
  auto norm = [&](const std::string& prefix, std::size_t d) {
    params_.add(prefix + ".gamma", BasicTensor<T>({d}));
    params_.add(prefix + ".beta", BasicTensor<T>({d}));
  };

  if (c.use_temporal) {
    dense("temporal.input_proj", c.features, c.d_model);
    params_.add("temporal.pos", BasicTensor<T>({c.window, c.d_model}));
    for (std::size_t layer = 0; layer < c.n_transformer_layers; ++layer) {
      const std::string p = layer == 0 ? "temporal." : "temporal.block" + std::to_string(layer) + ".";
      attention(p + "attn", c.d_model);
      norm(p + "ln1", c.d_model);
      params_.add(p + "ffn.w1", BasicTensor<T>({c.d_model, c.d_ff}));
      params_.add(p + "ffn.b1", BasicTensor<T>({c.d_ff}));
      params_.add(p + "ffn.w2", BasicTensor<T>({c.d_ff, c.d_model}));
      params_.add(p + "ffn.b2", BasicTensor<T>({c.d_model}));
      norm(p + "ln2", c.d_model);
    }
  }
  if (c.use_spatial) {
    std::size_t channels = 1;
    for (std::size_t i = 0; i < c.conv_filters.size(); ++i) {
      const std::string n = std::to_string(i + 1);
      const std::size_t out = c.conv_filters[i];
      params_.add("spatial.conv" + n + ".w", BasicTensor<T>({c.conv_kernel, channels, out}));
      params_.add("spatial.conv" + n + ".b", BasicTensor<T>({out}));
      norm("spatial.bn" + n, out);
      params_.add("spatial.bn" + n + ".running_mean", BasicTensor<T>({out}), false);
      params_.add("spatial.bn" + n + ".running_var", BasicTensor<T>({out}), false);
      channels = out;
    }
    dense("spatial.dense", c.spatial_flat_width(), c.d_spat);
  }

  std::size_t tokens = 0;
  if (c.use_temporal) {
    dense("fusion.temporal_proj", c.d_model, c.d_common);
    ++tokens;
  }
  if (c.use_spatial) {
    dense("fusion.spatial_proj", c.d_spat, c.d_common);
    ++tokens;
  }
  if (c.fusion == FusionMode::cross_attention) {
    attention("fusion.attn", c.d_common);
    dense("fusion.combined", c.d_common, c.d_combined);
  } else {
    dense("fusion.combined", tokens * c.d_common, c.d_combined);
  }

  dense("heads.main", c.d_combined, 1);
  dense("heads.traffic", c.d_combined, 1);
  dense("heads.protocol", c.d_combined, c.n_protocol);
  dense("heads.consistency", c.d_combined, 1);
}

template <typename T>
void TsanModel<T>::initialize(std::uint64_t seed) {
  for (Parameter<T>& p : params_) {
    const std::string& path = p.path;
    if (ends_with(path, ".gamma") || ends_with(path, ".running_var")) {
      p.value.fill(T{1});
    } else if (ends_with(path, ".b") || ends_with(path, ".b1") || ends_with(path, ".b2") ||
               ends_with(path, ".beta") || ends_with(path, ".running_mean")) {
      p.value.fill(T{0});
    } else {
      std::mt19937_64 rng(path_seed(seed, path));
      glorot_uniform(p.value, rng);
    }
    p.grad.fill(T{0});
    p.adam_m.fill(T{0});
    p.adam_v.fill(T{0});
    p.step_count = 0;
    p.grad_ready = false;
  }
}

template <typename T>
Var<T> TsanModel<T>::temporal_forward(Tape<T>& tape, const BasicTensor<T>& x_temporal, const ForwardContext& ctx,
                                      Var<T>* attention) {
  (void)ctx;
  const ModelConfig& c = config_;
  if (!c.use_temporal) throw ContractError("temporal encoder is disabled in this model");
  const Shape& s = x_temporal.shape();
  if (s.size() != 3 || s[1] != c.window || s[2] != c.features) {
    throw ShapeError("temporal input must be (B, " + std::to_string(c.window) + ", " +
                     std::to_string(c.features) + "), got " + to_string(s));
  }
  const T eps = static_cast<T>(c.layernorm_eps);
  Var<T> h = linear(tape.constant(x_temporal), param(tape, "temporal.input_proj.w"),
                    param(tape, "temporal.input_proj.b"));
  h = add(h, param(tape, "temporal.pos"));
  for (std::size_t layer = 0; layer < c.n_transformer_layers; ++layer) {
    const std::string p = layer == 0 ? "temporal." : "temporal.block" + std::to_string(layer) + ".";
    const Var<T> attended =
        multi_head_self_attention(h, param(tape, p + "attn.wq"), param(tape, p + "attn.wk"),
                                  param(tape, p + "attn.wv"), param(tape, p + "attn.wo"), c.n_heads_temporal,
                                  attention);
    h = layernorm(add(h, attended), param(tape, p + "ln1.gamma"), param(tape, p + "ln1.beta"), eps);
    const Var<T> hidden = relu(linear(h, param(tape, p + "ffn.w1"), param(tape, p + "ffn.b1")));
    const Var<T> ff = linear(hidden, param(tape, p + "ffn.w2"), param(tape, p + "ffn.b2"));
    h = layernorm(add(h, ff), param(tape, p + "ln2.gamma"), param(tape, p + "ln2.beta"), eps);
  }
  return mean_axis(h, 1);
}

template <typename T>
Var<T> TsanModel<T>::spatial_forward(Tape<T>& tape, const BasicTensor<T>& x_spatial, const ForwardContext& ctx) {
  const ModelConfig& c = config_;
  if (!c.use_spatial) throw ContractError("spatial encoder is disabled in this model");
  const Shape& s = x_spatial.shape();
  if (s.size() != 2 || s[1] != c.features) {
    throw ShapeError("spatial input must be (B, " + std::to_string(c.features) + "), got " + to_string(s));
  }
  const bool stochastic = ctx.mode == Mode::train && c.dropout > 0.0;
  if (stochastic && ctx.rng == nullptr) throw ContractError("train-mode forward needs a dropout generator");
  std::mt19937_64 unused;
  std::mt19937_64& rng = ctx.rng ? *ctx.rng : unused;
  const BatchNormOptions bn{ctx.mode, c.batchnorm_momentum, c.batchnorm_eps};

  const std::size_t batch = s[0];
  Var<T> h = reshape(tape.constant(x_spatial), {batch, c.features, 1});
  for (std::size_t i = 0; i < c.conv_filters.size(); ++i) {
    const std::string n = std::to_string(i + 1);
    h = conv1d(h, param(tape, "spatial.conv" + n + ".w"), param(tape, "spatial.conv" + n + ".b"));
    h = maxpool1d(h, c.pool);
    h = batchnorm1d(h, param(tape, "spatial.bn" + n + ".gamma"), param(tape, "spatial.bn" + n + ".beta"),
                    params_.at("spatial.bn" + n + ".running_mean").value,
                    params_.at("spatial.bn" + n + ".running_var").value, bn);
    h = dropout(h, c.dropout, ctx.mode, rng);
  }
  h = reshape(h, {batch, c.spatial_flat_width()});
  return relu(linear(h, param(tape, "spatial.dense.w"), param(tape, "spatial.dense.b")));
}

template <typename T>
Var<T> TsanModel<T>::fuse(Tape<T>& tape, const Var<T>& h_temp, const Var<T>& h_spat, Var<T>* attention) {
  const ModelConfig& c = config_;
  std::vector<Var<T>> projected;
  if (c.use_temporal) {
    projected.push_back(linear(h_temp, param(tape, "fusion.temporal_proj.w"), param(tape, "fusion.temporal_proj.b")));
  }
  if (c.use_spatial) {
    projected.push_back(linear(h_spat, param(tape, "fusion.spatial_proj.w"), param(tape, "fusion.spatial_proj.b")));
  }
  const std::size_t batch = projected.front().shape()[0];
  Var<T> pooled;
  if (c.fusion == FusionMode::cross_attention) {
    std::vector<Var<T>> tokens;
    for (const auto& p : projected) tokens.push_back(reshape(p, {batch, 1, c.d_common}));
    const Var<T> seq = tokens.size() == 1 ? tokens.front() : concat(tokens, 1);
    const Var<T> attended =
        multi_head_self_attention(seq, param(tape, "fusion.attn.wq"), param(tape, "fusion.attn.wk"),
                                  param(tape, "fusion.attn.wv"), param(tape, "fusion.attn.wo"), c.n_heads_fusion,
                                  attention);
    pooled = mean_axis(attended, 1);
  } else {
    pooled = projected.size() == 1 ? projected.front() : concat(projected, 1);
  }
  return relu(linear(pooled, param(tape, "fusion.combined.w"), param(tape, "fusion.combined.b")));
}

template <typename T>
void TsanModel<T>::heads(Tape<T>& tape, const Var<T>& h, ForwardOutputs<T>& out) {
  out.y_main = sigmoid(linear(h, param(tape, "heads.main.w"), param(tape, "heads.main.b")));
  out.y_traffic = linear(h, param(tape, "heads.traffic.w"), param(tape, "heads.traffic.b"));
  out.y_protocol = softmax(linear(h, param(tape, "heads.protocol.w"), param(tape, "heads.protocol.b")));
  out.y_consistency = sigmoid(linear(h, param(tape, "heads.consistency.w"), param(tape, "heads.consistency.b")));
}

template <typename T>
ForwardOutputs<T> TsanModel<T>::forward(Tape<T>& tape, const BasicTensor<T>& x_temporal,
                                        const BasicTensor<T>& x_spatial, const ForwardContext& ctx) {
  if (x_temporal.rank() >= 1 && x_spatial.rank() >= 1 && x_temporal.dim(0) != x_spatial.dim(0)) {
    throw ShapeError("temporal and spatial batch sizes differ: " + to_string(x_temporal.shape()) + " vs " +
                     to_string(x_spatial.shape()));
  }
  ForwardOutputs<T> out;
  if (config_.use_temporal) out.h_temp = temporal_forward(tape, x_temporal, ctx, &out.temporal_attention);
  if (config_.use_spatial) out.h_spat = spatial_forward(tape, x_spatial, ctx);
  out.h_combined = fuse(tape, out.h_temp, out.h_spat, &out.fusion_attention);
  heads(tape, out.h_combined, out);
  return out;
}

template <typename T>
bool TsanModel<T>::is_encoder_path(const std::string& path) {
  return path.starts_with("temporal.") || path.starts_with("spatial.");
}

#define TSAN_INSTANTIATE(T)                                                                                   \
  template Var<T> multi_head_self_attention<T>(const Var<T>&, const Var<T>&, const Var<T>&, const Var<T>&, \
                                               const Var<T>&, std::size_t, Var<T>*);                        \
  template class TsanModel<T>;                                                                                \
  template void glorot_uniform<T>(BasicTensor<T>&, std::mt19937_64&);

TSAN_INSTANTIATE(float)
TSAN_INSTANTIATE(double)

}  // namespace tsan
