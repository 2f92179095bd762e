#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "tsan/data/preprocess.hpp"
#include "tsan/data/synth.hpp"
#include "tsan/errors.hpp"
#include "tsan/train/gradcheck.hpp"
#include "tsan/train/trainer.hpp"

using namespace tsan;

namespace {

struct Fixture {
  data::PreparedData prepared;
  TaskDataset train;
  TaskDataset validation;
  ModelConfig config;
};

Fixture make_fixture(std::size_t records, std::uint64_t seed) {
  Fixture fx;
  data::PreprocessOptions opt;
  opt.split.seed = seed;
  fx.prepared = data::prepare(data::synth_generate(records, 0.5, seed), data::synth_generate(200, 0.5, seed + 1), opt);
  const std::size_t n_protocol = fx.prepared.schema.protocol_vocab.size();
  std::mt19937_64 rng(seed);
  fx.train = build_aux_targets(fx.prepared.train, n_protocol, 0.5, rng);
  fx.validation = build_aux_targets(fx.prepared.validation, n_protocol, 0.0, rng);
  fx.config.features = fx.prepared.schema.width();
  fx.config.n_protocol = n_protocol;
  return fx;
}

const Fixture& shared_fixture() {
  static const Fixture fx = make_fixture(600, 1);
  return fx;
}

TaskBatch<double> first_batch(const TaskDataset& ds, std::size_t b) {
  std::vector<std::size_t> idx(b);
  std::iota(idx.begin(), idx.end(), 0);
  return make_batch<double>(ds, idx);
}

}  // namespace

TEST(EarlyStop, PatienceExample) {
  EarlyStopState s(2);
  const std::vector<double> acc{0.8, 0.9, 0.85, 0.85};
  std::size_t stopped_after = 0;
  for (std::size_t e = 0; e < acc.size(); ++e) {
    s.observe(e + 1, acc[e]);
    if (s.should_stop()) {
      stopped_after = e + 1;
      break;
    }
  }
  EXPECT_EQ(stopped_after, 4u);
  EXPECT_EQ(s.best_epoch(), 2u);
  EXPECT_DOUBLE_EQ(s.best_accuracy(), 0.9);
}

TEST(EarlyStop, EqualAccuracyIsNotAnImprovement) {
  EarlyStopState s(3);
  EXPECT_TRUE(s.observe(1, 0.5));
  EXPECT_FALSE(s.observe(2, 0.5));
  EXPECT_EQ(s.epochs_since_improvement(), 1u);
  EXPECT_TRUE(s.observe(3, 0.6));
  EXPECT_EQ(s.epochs_since_improvement(), 0u);
}

TEST(EpochOrder, IsAPermutation) {
  std::mt19937_64 rng(3);
  for (std::size_t n : {0u, 1u, 17u, 500u}) {
    auto order = epoch_order(n, rng);
    std::sort(order.begin(), order.end());
    std::vector<std::size_t> expected(n);
    std::iota(expected.begin(), expected.end(), 0);
    EXPECT_EQ(order, expected);
  }
}

TEST(TrainConfig, DefaultsAndValidation) {
  const TrainConfig c;
  EXPECT_DOUBLE_EQ(c.lr, 1e-3);
  EXPECT_EQ(c.batch, 128u);
  EXPECT_EQ(c.patience, 2u);
  EXPECT_DOUBLE_EQ(c.threshold, 0.5);
  const TrainConfig back = TrainConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  TrainConfig bad;
  bad.lr = 0.0;
  EXPECT_THROW(bad.validate(), ConfigError);
  EXPECT_THROW(TrainConfig::from_json({{"unknown", 1}}), ConfigError);
}

TEST(Train, EmptyTrainingSetIsAnError) {
  const Fixture& fx = shared_fixture();
  TsanModel<float> model(fx.config, 1);
  TaskDataset empty = fx.train;
  const std::vector<std::size_t> none;
  empty.windows = fx.train.windows.subset(none);
  EXPECT_THROW(train(model, empty, fx.validation, TrainConfig{}), ContractError);
}

TEST(Train, DeterministicHistoryAndBestCheckpoint) {
  const Fixture& fx = shared_fixture();
  TrainConfig cfg;
  cfg.max_epochs = 2;
  auto run = [&] {
    TsanModel<float> model(fx.config, 5);
    TrainResult r = train(model, fx.train, fx.validation, cfg);
    return std::make_pair(std::move(r), model.params().at("heads.main.w").value);
  };
  const auto [a, wa] = run();
  const auto [b, wb] = run();
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t e = 0; e < a.history.size(); ++e) {
    EXPECT_EQ(a.history[e].train.l_total, b.history[e].train.l_total);
    EXPECT_EQ(a.history[e].val_accuracy, b.history[e].val_accuracy);
  }
  EXPECT_EQ(wa, wb);
}

TEST(Train, RestoredModelMatchesBestValidationAccuracy) {
  const Fixture& fx = shared_fixture();
  TsanModel<float> model(fx.config, 6);
  TrainConfig cfg;
  cfg.max_epochs = 4;
  const TrainResult r = train(model, fx.train, fx.validation, cfg);
  double best = 0.0;
  for (const auto& e : r.history) best = std::max(best, e.val_accuracy);
  EXPECT_DOUBLE_EQ(r.best_val_accuracy, best);
  const Predictions p = predict(model, fx.validation, cfg.loss);
  EXPECT_DOUBLE_EQ(accuracy_at(p, cfg.threshold), best);
  EXPECT_EQ(r.history[r.best_epoch - 1].val_accuracy, best);
}

TEST(Train, LossDecreasesOverFirstEpochsForMostSeeds) {
  const Fixture& fx = shared_fixture();
  int decreasing = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    TsanModel<float> model(fx.config, seed);
    TrainConfig cfg;
    cfg.max_epochs = 3;
    cfg.seed = seed;
    cfg.early_stopping = false;
    const TrainResult r = train(model, fx.train, fx.validation, cfg);
    ASSERT_EQ(r.history.size(), 3u);
    decreasing += r.history[1].train.l_total < r.history[0].train.l_total &&
                  r.history[2].train.l_total < r.history[1].train.l_total;
  }
  EXPECT_GE(decreasing, 4);
}

TEST(Train, EmptyValidationKeepsLastEpoch) {
  const Fixture& fx = shared_fixture();
  TsanModel<float> model(fx.config, 7);
  TaskDataset none = fx.validation;
  const std::vector<std::size_t> empty;
  none.windows = fx.validation.windows.subset(empty);
  TrainConfig cfg;
  cfg.max_epochs = 1;
  const TrainResult r = train(model, fx.train, none, cfg);
  EXPECT_EQ(r.history.size(), 1u);
  EXPECT_EQ(r.best_epoch, 1u);
}

TEST(Train, HistoryCsvLayout) {
  EpochRecord e;
  e.epoch = 1;
  e.val_accuracy = 0.5;
  const auto path = std::filesystem::temp_directory_path() / "tsan_history_test.csv";
  write_history_csv(path, {e, e});
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "epoch,l_main,l_traffic,l_protocol,l_consistency,l_total,val_accuracy");
  std::size_t lines = 0;
  for (std::string l; std::getline(in, l);) ++lines;
  EXPECT_EQ(lines, 2u);
  std::filesystem::remove(path);
}

TEST(Gradcheck, FreshDefaultModelPasses) {
  const Fixture& fx = shared_fixture();
  TsanModel<double> model(fx.config, 8);
  GradcheckOptions opt;
  opt.seed = 8;
  const GradcheckReport r = gradcheck(model, first_batch(fx.train, 4), opt);
  EXPECT_EQ(r.entries.size(), 50u);
  EXPECT_TRUE(r.passed()) << r.to_json().dump();
  EXPECT_LT(r.max_rel_error, 1e-3);
}

TEST(Gradcheck, ZeroSamplesTriviallyPass) {
  const Fixture& fx = shared_fixture();
  TsanModel<double> model(fx.config, 9);
  GradcheckOptions opt;
  opt.sample_count = 0;
  const GradcheckReport r = gradcheck(model, first_batch(fx.train, 2), opt);
  EXPECT_TRUE(r.entries.empty());
  EXPECT_TRUE(r.passed());
}

TEST(Gradcheck, CorruptedGradientIsNamed) {
  const Fixture& fx = shared_fixture();
  TsanModel<double> model(fx.config, 10);
  GradcheckOptions opt;
  opt.sample_count = 5;
  opt.include_paths = {"fusion.combined.w"};
  opt.after_backward = [](ParameterSet<double>& params) {
    for (double& g : params.at("fusion.combined.w").grad.data()) g = -g + 1.0;
  };
  const GradcheckReport r = gradcheck(model, first_batch(fx.train, 4), opt);
  EXPECT_FALSE(r.passed());
  EXPECT_NE(std::find(r.failing_paths.begin(), r.failing_paths.end(), "fusion.combined.w"), r.failing_paths.end());
}

TEST(Gradcheck, RelativeErrorFloor) {
  EXPECT_DOUBLE_EQ(relative_error(1.0, 1.0, 1e-6), 0.0);
  EXPECT_DOUBLE_EQ(relative_error(2.0, 1.0, 1e-6), 0.5);
  EXPECT_DOUBLE_EQ(relative_error(1e-9, 0.0, 1e-6), 1e-3);
}

TEST(Gradcheck, DoubleCopyMatchesFloatModel) {
  const Fixture& fx = shared_fixture();
  TsanModel<float> model(fx.config, 11);
  const TsanModel<double> copy = to_double(model);
  for (const auto& p : model.params()) {
    const auto& d = copy.params().at(p.path).value;
    for (std::size_t i = 0; i < p.value.size(); ++i) ASSERT_EQ(static_cast<float>(d[i]), p.value[i]) << p.path;
  }
}
