#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "finite_difference.hpp"
#include "tsan/data/windows.hpp"
#include "tsan/errors.hpp"
#include "tsan/model/tsan_model.hpp"
#include "tsan/objective/multitask.hpp"

using namespace tsan;
using tsan::testing::random_tensor;

namespace {

// n windows of width w over distinct random rows.
data::WindowedDataset random_windows(std::size_t n_rows, std::size_t w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::size_t f = 4;
  Tensor rows = random_tensor({n_rows, f}, rng).cast<float>();
  std::vector<int> labels(n_rows), proto(n_rows);
  for (std::size_t i = 0; i < n_rows; ++i) {
    labels[i] = static_cast<int>(i % 2);
    proto[i] = static_cast<int>(i % 3);
  }
  return data::build_windows(rows, labels, proto, 0, w, 1);
}

ForwardOutputs<double> outputs_from(const std::vector<Var<double>>& logits) {
  ForwardOutputs<double> out;
  out.y_main = sigmoid(logits[0]);
  out.y_traffic = logits[1];
  out.y_protocol = softmax(logits[2]);
  out.y_consistency = sigmoid(logits[3]);
  return out;
}

TaskBatch<double> random_batch(std::size_t b, std::mt19937_64& rng) {
  TaskBatch<double> batch;
  batch.y = TensorF64({b, 1});
  batch.y_consistency = TensorF64({b, 1});
  batch.y_protocol = TensorF64({b, 3});
  for (std::size_t i = 0; i < b; ++i) {
    batch.y[i] = static_cast<double>(i % 2);
    batch.y_consistency[i] = static_cast<double>((i / 2) % 2);
    batch.y_protocol[i * 3 + i % 3] = 1.0;
  }
  batch.y_traffic = random_tensor({b, 1}, rng);
  return batch;
}

}  // namespace

TEST(AuxTargets, TrafficAndProtocolExamples) {
  Tensor rows({5, 2});
  for (std::size_t i = 0; i < 5; ++i) rows[i * 2] = 1.0f;
  const std::vector<int> labels(5, 0), proto{0, 0, 0, 0, 1};
  const auto ds = data::build_windows(rows, labels, proto, 0, 5, 1);
  std::mt19937_64 rng(1);
  const TaskDataset t = build_aux_targets(ds, 3, 0.0, rng);
  EXPECT_EQ(t.aux.y_traffic[0], 1.0f);
  EXPECT_EQ(t.aux.y_protocol.storage(), (std::vector<float>{0, 1, 0}));

  std::vector<int> unseen = proto;
  unseen[4] = -1;
  const TaskDataset u = build_aux_targets(data::build_windows(rows, labels, unseen, 0, 5, 1), 3, 0.0, rng);
  EXPECT_EQ(u.aux.y_protocol.storage(), (std::vector<float>{0, 0, 0}));
  EXPECT_THROW(build_aux_targets(ds, 1, 0.0, rng), ContractError);
  EXPECT_THROW(build_aux_targets(ds, 3, 1.5, rng), ConfigError);
}

TEST(AuxTargets, ZeroShuffleFractionKeepsEverythingIntact) {
  const auto ds = random_windows(40, 5, 2);
  std::mt19937_64 rng(2);
  const TaskDataset t = build_aux_targets(ds, 3, 0.0, rng);
  EXPECT_EQ(t.windows.x_temporal, ds.x_temporal);
  for (float v : t.aux.y_consistency.data()) EXPECT_EQ(v, 1.0f);
}

TEST(AuxTargets, ShuffleIntegrity) {
  const auto ds = random_windows(400, 5, 3);
  std::mt19937_64 rng(3);
  const TaskDataset t = build_aux_targets(ds, 3, 0.5, rng);
  const std::size_t w = 5, f = 4;
  std::size_t shuffled = 0;
  EXPECT_EQ(t.windows.x_spatial, ds.x_spatial);
  for (std::size_t j = 0; j < ds.size(); ++j) {
    const float* a = ds.x_temporal.raw() + j * w * f;
    const float* b = t.windows.x_temporal.raw() + j * w * f;
    const bool differs = !std::equal(a, a + w * f, b);
    EXPECT_EQ(t.aux.y_consistency[j] == 0.0f, t.aux.shuffle_mask[j]);
    EXPECT_EQ(differs, t.aux.shuffle_mask[j]) << "window " << j;
    // Same multiset of rows.
    std::vector<std::vector<float>> ra, rb;
    for (std::size_t r = 0; r < w; ++r) {
      ra.emplace_back(a + r * f, a + (r + 1) * f);
      rb.emplace_back(b + r * f, b + (r + 1) * f);
    }
    std::sort(ra.begin(), ra.end());
    std::sort(rb.begin(), rb.end());
    EXPECT_EQ(ra, rb);
    shuffled += t.aux.shuffle_mask[j];
  }
  const double fraction = static_cast<double>(shuffled) / static_cast<double>(ds.size());
  EXPECT_NEAR(fraction, 0.5, 0.1);
}

TEST(AuxTargets, IdenticalRowWindowsStayIntact) {
  Tensor rows({6, 3}, 2.0f);
  const std::vector<int> labels(6, 1), proto(6, 0);
  std::mt19937_64 rng(4);
  const TaskDataset t = build_aux_targets(data::build_windows(rows, labels, proto, 0, 3, 1), 3, 1.0, rng);
  for (float v : t.aux.y_consistency.data()) EXPECT_EQ(v, 1.0f);
}

TEST(AuxTargets, WindowOfOneDisablesConsistency) {
  const auto ds = random_windows(10, 1, 5);
  std::mt19937_64 rng(5);
  const TaskDataset t = build_aux_targets(ds, 3, 0.5, rng);
  EXPECT_FALSE(t.aux.consistency_enabled);
  EXPECT_EQ(t.windows.x_temporal, ds.x_temporal);
}

TEST(MakeBatch, GathersRows) {
  const auto ds = random_windows(12, 3, 6);
  std::mt19937_64 rng(6);
  const TaskDataset t = build_aux_targets(ds, 3, 0.5, rng);
  const std::vector<std::size_t> idx{3, 0, 7};
  const auto batch = make_batch<double>(t, idx);
  EXPECT_EQ(batch.x_temporal.shape(), (Shape{3, 3, 4}));
  EXPECT_EQ(batch.y_protocol.shape(), (Shape{3, 3}));
  for (std::size_t r = 0; r < 3; ++r) {
    EXPECT_EQ(batch.y[r], static_cast<double>(t.windows.y[idx[r]]));
    EXPECT_EQ(batch.x_spatial[r * 4], static_cast<double>(t.windows.x_spatial[idx[r] * 4]));
  }
  const std::vector<std::size_t> bad{99};
  EXPECT_THROW(make_batch<float>(t, bad), ContractError);
}

TEST(LossWeights, WeightedTotalArithmetic) {
  const LossBreakdown l{0.5, 0.2, 0.3, 0.1, 0.0};
  EXPECT_NEAR(weighted_total(l, LossWeights{}), 0.69, 1e-12);
  LossWeights w;
  w.traffic = 0.0;
  EXPECT_NEAR(weighted_total(l, w), 0.5 + 0.09 + 0.04, 1e-12);
  EXPECT_EQ(LossWeights::from_json(LossWeights{}.to_json()), LossWeights{});
  w.main = -1.0;
  EXPECT_THROW(w.validate(), ConfigError);
  EXPECT_THROW(LossWeights::from_json({{"bogus", 1.0}}), ConfigError);
}

TEST(Losses, HalfProbabilityGivesLn2) {
  Tape<double> tape;
  ForwardOutputs<double> out;
  out.y_main = tape.constant(TensorF64({1, 1}, 0.5));
  out.y_traffic = tape.constant(TensorF64({1, 1}));
  out.y_protocol = tape.constant(TensorF64({1, 3}, std::vector<double>{1, 0, 0}));
  out.y_consistency = tape.constant(TensorF64({1, 1}, 1.0));
  TaskBatch<double> batch;
  batch.y = TensorF64({1, 1}, 1.0);
  batch.y_traffic = TensorF64({1, 1});
  batch.y_protocol = TensorF64({1, 3}, std::vector<double>{1, 0, 0});
  batch.y_consistency = TensorF64({1, 1}, 1.0);
  const auto terms = compute_losses(out, batch, LossWeights{});
  EXPECT_NEAR(terms.values.l_main, std::log(2.0), 1e-12);
  EXPECT_NEAR(terms.values.l_traffic, 0.0, 1e-12);
  EXPECT_LE(terms.values.l_protocol, 1.2e-7);
  EXPECT_LE(terms.values.l_consistency, 1.2e-7);
  EXPECT_NEAR(terms.values.l_total, std::log(2.0) + 0.3 * terms.values.l_protocol + 0.4 * terms.values.l_consistency,
              1e-12);
}

TEST(Losses, PerfectPredictionsAreNearZero) {
  std::mt19937_64 rng(7);
  const auto batch = random_batch(6, rng);
  Tape<double> tape;
  ForwardOutputs<double> out;
  out.y_main = tape.constant(batch.y);
  out.y_traffic = tape.constant(batch.y_traffic);
  out.y_protocol = tape.constant(batch.y_protocol);
  out.y_consistency = tape.constant(batch.y_consistency);
  const auto terms = compute_losses(out, batch, LossWeights{});
  EXPECT_LE(terms.values.l_main, 1.2e-7);
  EXPECT_LE(terms.values.l_traffic, 1e-15);
  EXPECT_LE(terms.values.l_protocol, 1.2e-7);
  EXPECT_LE(terms.values.l_consistency, 1.2e-7);
}

TEST(Losses, NonNegativeForRandomInputs) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const auto batch = random_batch(5, rng);
    Tape<double> tape;
    const auto out = outputs_from({tape.constant(random_tensor({5, 1}, rng, -20, 20)),
                                         tape.constant(random_tensor({5, 1}, rng, -5, 5)),
                                         tape.constant(random_tensor({5, 3}, rng, -20, 20)),
                                         tape.constant(random_tensor({5, 1}, rng, -20, 20))});
    const auto v = compute_losses(out, batch, LossWeights{}).values;
    EXPECT_GE(v.l_main, 0.0);
    EXPECT_GE(v.l_traffic, 0.0);
    EXPECT_GE(v.l_protocol, 0.0);
    EXPECT_GE(v.l_consistency, 0.0);
    EXPECT_NEAR(v.l_total, weighted_total(v, LossWeights{}), 1e-12);
  }
}

TEST(Losses, MatchFiniteDifferences) {
  std::mt19937_64 rng(9);
  const auto batch = random_batch(4, rng);
  for (int which = 0; which < 5; ++which) {
    const auto r = tsan::testing::finite_difference_check(
        [&](Tape<double>& tape, const std::vector<Var<double>>& v) {
          const auto terms = compute_losses(outputs_from(v), batch, LossWeights{});
          switch (which) {
            case 0: return terms.main;
            case 1: return terms.traffic;
            case 2: return terms.protocol;
            case 3: return terms.consistency;
            default: return terms.total;
          }
        },
        {random_tensor({4, 1}, rng, -3, 3), random_tensor({4, 1}, rng), random_tensor({4, 3}, rng, -3, 3),
         random_tensor({4, 1}, rng, -3, 3)},
        static_cast<std::uint64_t>(which));
    EXPECT_LT(r.max_rel_error, 1e-3) << "loss " << which;
  }
}

TEST(Losses, ZeroWeightHeadsReceiveNoGradient) {
  ModelConfig c;
  c.features = 20;
  TsanModel<double> model(c, 3);
  std::mt19937_64 rng(10);
  auto batch = random_batch(4, rng);
  batch.x_temporal = random_tensor({4, 5, 20}, rng);
  batch.x_spatial = random_tensor({4, 20}, rng);
  LossWeights w;
  w.traffic = 0.0;
  w.consistency = 0.0;
  Tape<double> tape;
  const auto out = model.forward(tape, batch.x_temporal, batch.x_spatial, {});
  const auto terms = compute_losses(out, batch, w);
  EXPECT_DOUBLE_EQ(terms.values.l_total, terms.values.l_main + 0.3 * terms.values.l_protocol);
  backward(tape, terms.total, model.params());
  for (const char* path : {"heads.traffic.w", "heads.traffic.b", "heads.consistency.w", "heads.consistency.b"}) {
    for (double g : model.params().at(path).grad.data()) EXPECT_EQ(g, 0.0) << path;
  }
  double protocol_norm = 0.0;
  for (double g : model.params().at("heads.protocol.w").grad.data()) protocol_norm += std::abs(g);
  EXPECT_GT(protocol_norm, 0.0);
}
