#include <random>

#include <gtest/gtest.h>

#include "finite_difference.hpp"
#include "tsan/data/preprocess.hpp"
#include "tsan/data/synth.hpp"
#include "tsan/data/windows.hpp"
#include "tsan/errors.hpp"
#include "tsan/pretrain/pretrain.hpp"

using namespace tsan;

namespace {

constexpr std::size_t kF = 20;

ModelConfig small_config() {
  ModelConfig c;
  c.features = kF;
  return c;
}

Tensor random_rows(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return tsan::testing::random_tensor({n, kF}, rng).cast<float>();
}

data::WindowedDataset windows_over(const Tensor& rows, std::size_t w, std::size_t s) {
  const std::size_t n = rows.dim(0);
  const std::vector<int> labels(n, 0), proto(n, 0);
  return data::build_windows(rows, labels, proto, 0, w, s);
}

}  // namespace

TEST(NextStepPairs, TargetAlignment) {
  const Tensor rows = random_rows(10, 1);
  const auto ds = windows_over(rows, 5, 2);
  const NextStepPairs pairs = next_step_pairs(ds, rows);
  ASSERT_EQ(pairs.size(), 3u);
  EXPECT_EQ(pairs.target_row, (std::vector<std::size_t>{5, 7, 9}));
  for (std::size_t m = 0; m < pairs.size(); ++m) {
    EXPECT_EQ(pairs.target_row[m], ds.raw_row_index[pairs.window_index[m]] + 1);
    for (std::size_t c = 0; c < kF; ++c) EXPECT_EQ(pairs.target[m * kF + c], rows[pairs.target_row[m] * kF + c]);
  }

  // The last window has no following row when it ends at n - 1.
  const auto tight = windows_over(rows, 5, 1);
  const NextStepPairs dropped = next_step_pairs(tight, rows);
  EXPECT_EQ(dropped.size(), tight.size() - 1);
}

TEST(Pretrain, ZeroEpochsLeaveParametersUnchanged) {
  TsanModel<float> model(small_config(), 1);
  const ParameterSet<float> before = encoder_parameters(model.params());
  const Tensor rows = random_rows(30, 2);
  PretrainConfig cfg;
  cfg.epochs = 0;
  pretrain_temporal(model, next_step_pairs(windows_over(rows, 5, 2), rows), cfg);
  pretrain_spatial(model, rows, cfg);
  for (const auto& p : before) EXPECT_EQ(model.params().at(p.path).value, p.value) << p.path;
}

TEST(Pretrain, EmptyPairsAreRejected) {
  TsanModel<float> model(small_config(), 1);
  EXPECT_THROW(pretrain_temporal(model, NextStepPairs{}, PretrainConfig{}), ContractError);
}

TEST(Pretrain, ConstantSequenceIsLearned) {
  TsanModel<float> model(small_config(), 2);
  Tensor rows({40, kF});
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = 0.25f * static_cast<float>(i % kF) - 2.0f;
  PretrainConfig cfg;
  cfg.epochs = 50;
  cfg.batch = 16;
  const PretrainCurve curve = pretrain_temporal(model, next_step_pairs(windows_over(rows, 5, 1), rows), cfg);
  EXPECT_EQ(curve.epoch_loss.size(), 50u);
  EXPECT_LT(curve.final_loss, 1e-3);
}

TEST(Pretrain, ReconstructionLossDecreases) {
  const auto records = data::synth_generate(300, 0.5, 3);
  const data::PreparedData p = data::prepare(records, records, data::PreprocessOptions{});
  ModelConfig c = small_config();
  c.features = p.schema.width();
  TsanModel<float> model(c, 3);
  const Tensor rows = p.train_rows.reshaped({300, c.features});
  Tensor first({256, c.features});
  std::copy_n(rows.raw(), first.size(), first.raw());
  const PretrainCurve curve = pretrain_spatial(model, first, PretrainConfig{});
  EXPECT_LT(curve.final_loss, curve.initial_loss);
}

TEST(Pretrain, NeverTouchesFusionOrHeads) {
  TsanModel<float> model(small_config(), 4);
  std::vector<std::pair<std::string, Tensor>> before;
  for (const auto& p : model.params()) {
    if (!TsanModel<float>::is_encoder_path(p.path)) before.emplace_back(p.path, p.value);
  }
  const Tensor rows = random_rows(40, 4);
  PretrainConfig cfg;
  cfg.epochs = 2;
  pretrain_temporal(model, next_step_pairs(windows_over(rows, 5, 2), rows), cfg);
  pretrain_spatial(model, rows, cfg);
  for (const auto& [path, value] : before) EXPECT_EQ(model.params().at(path).value, value) << path;
  for (const auto& p : model.params()) EXPECT_FALSE(p.path.starts_with("pretrain.")) << p.path;
}

TEST(Pretrain, DeterministicUnderSeed) {
  const Tensor rows = random_rows(60, 5);
  const auto ds = windows_over(rows, 5, 2);
  auto run = [&] {
    PretrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch = 8;
    return pretrain_encoders(small_config(), ds, rows, cfg);
  };
  const PretrainResult a = run(), b = run();
  ASSERT_EQ(a.encoders.size(), b.encoders.size());
  for (const auto& p : a.encoders) EXPECT_EQ(b.encoders.at(p.path).value, p.value) << p.path;
  EXPECT_EQ(a.temporal.epoch_loss, b.temporal.epoch_loss);
}

TEST(TransferWeights, CopiesEncoderPathsOnly) {
  TsanModel<float> source(small_config(), 6), target(small_config(), 7);
  const ParameterSet<float> pretrained = encoder_parameters(source.params());
  EXPECT_EQ(pretrained.size(), 29u);
  const Tensor fusion = target.params().at("fusion.combined.w").value;
  const auto manifest = transfer_weights(pretrained, target.params());
  EXPECT_EQ(manifest.size(), 29u);
  for (const auto& p : pretrained) EXPECT_EQ(target.params().at(p.path).value, p.value) << p.path;
  EXPECT_EQ(target.params().at("fusion.combined.w").value, fusion);

  TsanModel<float> untouched(small_config(), 8);
  const Tensor w = untouched.params().at("temporal.pos").value;
  EXPECT_TRUE(transfer_weights(ParameterSet<float>{}, untouched.params()).empty());
  EXPECT_EQ(untouched.params().at("temporal.pos").value, w);
}

TEST(TransferWeights, ShapeMismatchNamesPath) {
  ModelConfig wide = small_config();
  wide.d_model = 64;
  TsanModel<float> source(wide, 1), target(small_config(), 1);
  try {
    transfer_weights(encoder_parameters(source.params()), target.params());
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("temporal."), std::string::npos) << e.what();
  }
}

TEST(TransferWeights, PartialModelsReceiveMatchingEncoder) {
  ModelConfig spatial_only = small_config();
  spatial_only.use_temporal = false;
  TsanModel<float> source(small_config(), 1), target(spatial_only, 2);
  const auto manifest = transfer_weights(encoder_parameters(source.params()), target.params());
  EXPECT_EQ(manifest.size(), 14u);
  for (const auto& path : manifest) EXPECT_TRUE(path.starts_with("spatial.")) << path;
}
