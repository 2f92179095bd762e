#include <benchmark/benchmark.h>

#include <random>

#include "tsan/autodiff/adam.hpp"
#include "tsan/autodiff/ops.hpp"
#include "tsan/data/preprocess.hpp"
#include "tsan/data/synth.hpp"
#include "tsan/metrics/metrics.hpp"
#include "tsan/model/tsan_model.hpp"
#include "tsan/objective/multitask.hpp"
#include "tsan/train/experiment.hpp"
#include "tsan/train/trainer.hpp"

using namespace tsan;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<float> d(0.f, 1.f);
  for (float& x : t.data()) x = d(rng);
  return t;
}

const data::PreparedData& prepared() {
  static const data::PreparedData p =
      data::prepare(data::synth_generate(1000, 0.5, 1), data::synth_generate(400, 0.5, 2), {});
  return p;
}

}  // namespace

static void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(0);
  const Tensor a = random_tensor({n, n}, rng), b = random_tensor({n, n}, rng);
  for (auto _ : state) {
    Tape<float> tape;
    auto c = matmul(tape.constant(a), tape.constant(b));
    benchmark::DoNotOptimize(c.value().data().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(64)->Arg(128)->Arg(256);

static void BM_ModelForwardEval(benchmark::State& state) {
  const auto b = static_cast<std::size_t>(state.range(0));
  const data::PreparedData& p = prepared();
  TsanModel<float> model(complete_model_config(ModelConfig{}, p), 1);
  std::vector<std::size_t> idx(b);
  for (std::size_t i = 0; i < b; ++i) idx[i] = i % p.test.size();
  const data::WindowedDataset batch = p.test.subset(idx);
  for (auto _ : state) {
    Tape<float> tape;
    auto out = model.forward(tape, batch.x_temporal, batch.x_spatial, {});
    benchmark::DoNotOptimize(out.y_main.value().data().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(b));
}
BENCHMARK(BM_ModelForwardEval)->Arg(1)->Arg(32)->Arg(128);

static void BM_TrainStep(benchmark::State& state) {
  const auto b = static_cast<std::size_t>(state.range(0));
  const data::PreparedData& p = prepared();
  const ModelConfig mc = complete_model_config(ModelConfig{}, p);
  TsanModel<float> model(mc, 1);
  const TrainConfig tc;
  const TaskDataset tasks = training_tasks(p.train, mc.n_protocol, tc);
  std::vector<std::size_t> idx(b);
  for (std::size_t i = 0; i < b; ++i) idx[i] = i % tasks.size();
  const TaskBatch<float> batch = make_batch<float>(tasks, idx);
  std::mt19937_64 rng(1);
  for (auto _ : state) {
    Tape<float> tape;
    const auto fwd = model.forward(tape, batch.x_temporal, batch.x_spatial, ForwardContext{Mode::train, &rng});
    const auto terms = compute_losses(fwd, batch, tc.loss);
    backward(tape, terms.total, model.params());
    adam_step(model.params(), AdamConfig{tc.lr});
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(b));
}
BENCHMARK(BM_TrainStep)->Arg(32)->Arg(64);

static void BM_AucRoc(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> s(n);
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    s[i] = u(rng);
    y[i] = static_cast<int>(i % 2);
  }
  for (auto _ : state) benchmark::DoNotOptimize(metrics::auc_roc(s, y).auc);
}
BENCHMARK(BM_AucRoc)->Arg(1000)->Arg(100000);

BENCHMARK_MAIN();
