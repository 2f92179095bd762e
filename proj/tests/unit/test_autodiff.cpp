#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "finite_difference.hpp"
#include "tsan/autodiff/adam.hpp"
#include "tsan/autodiff/ops.hpp"
#include "tsan/autodiff/parameter.hpp"
#include "tsan/autodiff/tape.hpp"
#include "tsan/errors.hpp"

using namespace tsan;
using tsan::testing::finite_difference_check;
using tsan::testing::random_tensor;

namespace {

Tensor t2(std::size_t r, std::size_t c, std::vector<float> v) { return Tensor({r, c}, std::move(v)); }

void expect_near(const Tensor& a, const std::vector<float>& b, float tol = 1e-4f) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < b.size(); ++i) EXPECT_NEAR(a[i], b[i], tol) << "element " << i;
}

}  // namespace

TEST(Tensor, ShapeAndSizeAgree) {
  Tensor t({2, 3, 4});
  EXPECT_EQ(t.size(), 24u);
  EXPECT_EQ(t.rank(), 3u);
  EXPECT_THROW(Tensor({2, 2}, std::vector<float>{1, 2, 3}), ShapeError);
}

TEST(Matmul, Examples) {
  Tape<float> tape;
  const auto id = tape.constant(t2(2, 2, {1, 0, 0, 1}));
  expect_near(matmul(id, tape.constant(t2(2, 2, {1, 2, 3, 4}))).value(), {1, 2, 3, 4});
  expect_near(matmul(id, tape.constant(Tensor({2, 3}))).value(), {0, 0, 0, 0, 0, 0});
  expect_near(matmul(tape.constant(t2(2, 2, {1, 2, 3, 4})), tape.constant(t2(2, 2, {5, 6, 7, 8}))).value(),
              {19, 22, 43, 50});
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  Tape<float> tape;
  try {
    matmul(tape.constant(Tensor({2, 3})), tape.constant(Tensor({2, 3})));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("(2, 3)"), std::string::npos) << msg;
  }
}

TEST(Conv1d, Examples) {
  Tape<float> tape;
  const auto ones = tape.constant(Tensor({5, 1}, 1.0f));
  expect_near(conv1d(ones, tape.constant(Tensor({3, 1, 1}, 1.0f)), tape.constant(Tensor({1}))).value(), {3, 3, 3});

  const auto x = tape.constant(Tensor({4, 2}, std::vector<float>{1, -2, 3, 0.5f, 7, 1, -1, 4}));
  expect_near(conv1d(x, tape.constant(Tensor({2, 2, 1})), tape.constant(Tensor({1}, 2.5f))).value(), {2.5f, 2.5f, 2.5f});

  const auto ramp = tape.constant(Tensor({4, 1}, std::vector<float>{1, 2, 3, 4}));
  const auto kernel = tape.constant(Tensor({2, 1, 1}, std::vector<float>{1, -1}));
  expect_near(conv1d(ramp, kernel, tape.constant(Tensor({1}))).value(), {-1, -1, -1});
}

TEST(Conv1d, OutputLengthExhaustive) {
  for (std::size_t k = 1; k <= 8; ++k) {
    for (std::size_t len = k; len <= 12; ++len) {
      Tape<float> tape;
      const auto y = conv1d(tape.constant(Tensor({len, 2}, 1.0f)), tape.constant(Tensor({k, 2, 3}, 1.0f)),
                            tape.constant(Tensor({3})));
      EXPECT_EQ(y.shape(), (Shape{len - k + 1, 3}));
    }
  }
  Tape<float> tape;
  EXPECT_THROW(conv1d(tape.constant(Tensor({2, 1})), tape.constant(Tensor({3, 1, 1})), tape.constant(Tensor({1}))),
               ShapeError);
}

TEST(Maxpool1d, Examples) {
  Tape<float> tape;
  expect_near(maxpool1d(tape.constant(Tensor({4, 1}, std::vector<float>{1, 2, 3, 4})), 2).value(), {2, 4});
  expect_near(maxpool1d(tape.constant(Tensor({6, 1}, 7.0f)), 3).value(), {7, 7});
  expect_near(maxpool1d(tape.constant(Tensor({5, 1}, std::vector<float>{3, 1, 2, 2, 5})), 2).value(), {3, 2});
  EXPECT_THROW(maxpool1d(tape.constant(Tensor({2, 1})), 3), ShapeError);
  EXPECT_THROW(maxpool1d(tape.constant(Tensor({2, 1})), 0), ConfigError);
}

TEST(Maxpool1d, TiesRouteGradientToFirstMaximum) {
  Tape<float> tape;
  const auto x = tape.variable(Tensor({4, 1}, std::vector<float>{2, 2, 1, 1}));
  tape.backward(sum(maxpool1d(x, 2)));
  expect_near(x.grad(), {1, 0, 1, 0});
}

TEST(Layernorm, Examples) {
  Tape<float> tape;
  const auto g3 = tape.constant(Tensor({3}, 1.0f));
  const auto b3 = tape.constant(Tensor({3}));
  expect_near(layernorm(tape.constant(Tensor({1, 3}, 1.0f)), g3, b3, 1e-5f).value(), {0, 0, 0});
  expect_near(layernorm(tape.constant(Tensor({1, 2}, std::vector<float>{-1, 1})), tape.constant(Tensor({2}, 1.0f)),
                        tape.constant(Tensor({2})), 1e-12f)
                  .value(),
              {-1, 1});
  expect_near(layernorm(tape.constant(Tensor({1, 3}, std::vector<float>{0, 2, 4})), g3, b3, 1e-5f).value(),
              {-1.2247f, 0, 1.2247f});
  EXPECT_THROW(layernorm(tape.constant(Tensor({2, 1})), tape.constant(Tensor({1}, 1.0f)), tape.constant(Tensor({1})),
                         0.0f),
               ContractError);
}

TEST(Batchnorm1d, TrainAndEvalModes) {
  Tape<float> tape;
  const auto gamma = tape.constant(Tensor({1}, 1.0f));
  const auto beta = tape.constant(Tensor({1}));
  Tensor mean, var;
  BatchNormOptions opt{Mode::train, 0.1, 0.0};
  expect_near(batchnorm1d(tape.constant(Tensor({3, 1}, std::vector<float>{2, 4, 6})), gamma, beta, mean, var, opt).value(),
              {-1.2247f, 0, 1.2247f});
  // running = 0.9 * init + 0.1 * batch, starting from mean 0 / var 1.
  EXPECT_NEAR(mean[0], 0.4f, 1e-6f);
  EXPECT_NEAR(var[0], 0.9f + 0.1f * 8.0f / 3.0f, 1e-6f);

  const Tensor mean_before = mean, var_before = var;
  opt.mode = Mode::eval;
  opt.eps = 1e-5;
  const auto y = batchnorm1d(tape.constant(Tensor({2, 1}, std::vector<float>{0.4f, 1.4f})), gamma, beta, mean, var, opt);
  EXPECT_EQ(mean, mean_before);
  EXPECT_EQ(var, var_before);
  EXPECT_NEAR(y.value()[0], 0.0f, 1e-6f);

  Tensor empty_mean, empty_var;
  EXPECT_THROW(batchnorm1d(tape.constant(Tensor({2, 1})), gamma, beta, empty_mean, empty_var, opt), ContractError);
}

TEST(Batchnorm1d, ZeroGammaYieldsBeta) {
  Tape<float> tape;
  Tensor mean, var;
  const auto y = batchnorm1d(tape.constant(Tensor({4, 2}, std::vector<float>{1, 5, 2, 3, 9, 1, 4, 4})),
                             tape.constant(Tensor({2})), tape.constant(Tensor({2}, std::vector<float>{0.5f, -2})),
                             mean, var, BatchNormOptions{});
  expect_near(y.value(), {0.5f, -2, 0.5f, -2, 0.5f, -2, 0.5f, -2});
}

TEST(Activations, Examples) {
  Tape<float> tape;
  expect_near(relu(tape.constant(Tensor({3}, std::vector<float>{-1, 0, 2}))).value(), {0, 0, 2});
  expect_near(sigmoid(tape.constant(Tensor::scalar(0.0f))).value(), {0.5f});
  expect_near(softmax(tape.constant(Tensor({1, 3}))).value(), {1 / 3.0f, 1 / 3.0f, 1 / 3.0f}, 1e-7f);
}

TEST(Activations, SoftmaxRowsAreStochastic) {
  std::mt19937_64 rng(3);
  Tape<double> tape;
  const auto y = softmax(tape.constant(random_tensor({17, 9}, rng, -30.0, 30.0)));
  for (std::size_t r = 0; r < 17; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 9; ++c) {
      EXPECT_GE(y.value()[r * 9 + c], 0.0);
      s += y.value()[r * 9 + c];
    }
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
}

TEST(Dropout, EvalAndZeroRateAreIdentity) {
  std::mt19937_64 rng(1);
  Tape<float> tape;
  const auto x = tape.constant(Tensor({3, 4}, 2.5f));
  EXPECT_EQ(dropout(x, 0.7, Mode::eval, rng).value(), x.value());
  EXPECT_EQ(dropout(x, 0.0, Mode::train, rng).value(), x.value());
  EXPECT_THROW(dropout(x, 1.0, Mode::train, rng), ConfigError);
  EXPECT_THROW(dropout(x, -0.1, Mode::train, rng), ConfigError);
}

TEST(Dropout, InvertedScalingPreservesMean) {
  std::mt19937_64 rng(2024);
  Tape<float> tape;
  const auto x = tape.constant(Tensor({10000}, 1.0f));
  const auto y = dropout(x, 0.5, Mode::train, rng);
  double mean = 0.0;
  for (float v : y.value().data()) {
    EXPECT_TRUE(v == 0.0f || v == 2.0f);
    mean += v;
  }
  mean /= 10000.0;
  EXPECT_NEAR(mean, 1.0, 0.02);
}

TEST(Tape, BackwardExamples) {
  ParameterSet<float> params;
  auto& p = params.add("p", Tensor({2}, std::vector<float>{1, 2}));
  {
    Tape<float> tape;
    backward(tape, sum(tape.parameter(p)), params);
    expect_near(p.grad, {1, 1});
  }
  {
    Tape<float> tape;
    const auto v = tape.parameter(p);
    backward(tape, scale(sum(mul(v, v)), 0.5f), params);
    expect_near(p.grad, {1, 2});
  }
}

TEST(Tape, UnreachableParametersHaveZeroGradient) {
  ParameterSet<float> params;
  auto& a = params.add("a", Tensor({2}, 1.0f));
  auto& b = params.add("b", Tensor({2}, 1.0f));
  b.grad.fill(5.0f);
  Tape<float> tape;
  tape.parameter(b);
  backward(tape, sum(tape.parameter(a)), params);
  expect_near(b.grad, {0, 0});
  EXPECT_TRUE(b.grad_ready);
}

TEST(Tape, FanOutAccumulates) {
  Tape<double> tape;
  const auto x = tape.variable(TensorF64({1}, 3.0));
  tape.backward(sum(add(mul(x, x), x)));
  EXPECT_DOUBLE_EQ(x.grad()[0], 7.0);
}

TEST(Tape, EachOpVisitedOnce) {
  Tape<double> tape;
  const auto x = tape.variable(TensorF64({3}, 1.0));
  const auto y = relu(scale(x, 2.0));
  const auto loss = sum(add(y, y));
  tape.backward(loss);
  // scale, relu, add, sum.
  EXPECT_EQ(tape.backward_visits(), 4u);
}

TEST(Tape, Contracts) {
  Tape<float> tape;
  const auto x = tape.variable(Tensor({2}, 1.0f));
  EXPECT_THROW(tape.backward(x), ContractError);
  Tape<float> other;
  EXPECT_THROW(add(x, other.constant(Tensor({2}))), ContractError);
  EXPECT_THROW(scale(scale(x, std::numeric_limits<float>::max()), 2.0f), NumericError);
}

TEST(Tape, DeterministicGradients) {
  auto run = [] {
    std::mt19937_64 rng(9);
    Tape<double> tape;
    const auto a = tape.variable(random_tensor({4, 5}, rng));
    const auto b = tape.variable(random_tensor({5, 3}, rng));
    tape.backward(sum(softmax(matmul(a, b))));
    return std::make_pair(a.grad(), b.grad());
  };
  EXPECT_EQ(run(), run());
}

// Every primitive against central finite differences in double precision
// over 20 random small shapes.
class PrimitiveGradients : public ::testing::TestWithParam<int> {};

TEST_P(PrimitiveGradients, MatchFiniteDifferences) {
  const auto seed = static_cast<std::uint64_t>(GetParam());
  std::mt19937_64 rng(seed);
  auto dim = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
  const std::size_t m = dim(1, 4), k = dim(1, 5), n = dim(1, 4), bsz = dim(1, 3), len = dim(4, 9), c = dim(1, 3);
  constexpr double kTol = 1e-5;
  auto check = [&](const char* name, const tsan::testing::OpBuilder& op, std::vector<TensorF64> inputs) {
    const auto r = finite_difference_check(op, std::move(inputs), seed);
    EXPECT_LT(r.max_rel_error, kTol) << name << " (seed " << seed << ")";
  };
  using V = std::vector<Var<double>>;
  using T = Tape<double>;

  check("matmul", [](T&, const V& v) { return matmul(v[0], v[1]); },
        {random_tensor({m, k}, rng), random_tensor({k, n}, rng)});
  check("bmm", [](T&, const V& v) { return bmm(v[0], v[1]); },
        {random_tensor({bsz, m, k}, rng), random_tensor({bsz, k, n}, rng)});
  check("bmm_t", [](T&, const V& v) { return bmm(v[0], v[1], true); },
        {random_tensor({bsz, m, k}, rng), random_tensor({bsz, n, k}, rng)});
  check("linear", [](T&, const V& v) { return linear(v[0], v[1], v[2]); },
        {random_tensor({bsz, m, k}, rng), random_tensor({k, n}, rng), random_tensor({n}, rng)});
  check("add_broadcast", [](T&, const V& v) { return add(v[0], v[1]); },
        {random_tensor({m, k}, rng), random_tensor({k}, rng)});
  check("sub", [](T&, const V& v) { return sub(v[0], v[1]); }, {random_tensor({m, k}, rng), random_tensor({m, k}, rng)});
  check("mul", [](T&, const V& v) { return mul(v[0], v[1]); }, {random_tensor({m, k}, rng), random_tensor({m, k}, rng)});
  check("scale", [](T&, const V& v) { return scale(v[0], -1.7); }, {random_tensor({m, k}, rng)});
  check("mean", [](T&, const V& v) { return mean(v[0]); }, {random_tensor({m, k}, rng)});
  check("mean_axis", [](T&, const V& v) { return mean_axis(v[0], 1); }, {random_tensor({bsz, m, k}, rng)});
  check("reshape", [&](T&, const V& v) { return reshape(v[0], {k, m}); }, {random_tensor({m, k}, rng)});
  check("permute", [](T&, const V& v) { return permute(v[0], {2, 0, 1}); }, {random_tensor({bsz, m, k}, rng)});
  check("concat", [](T&, const V& v) { return concat<double>({v[0], v[1]}, 1); },
        {random_tensor({m, k}, rng), random_tensor({m, n}, rng)});
  // Keep relu inputs away from the kink.
  TensorF64 r = random_tensor({m, k}, rng);
  for (double& x : r.data()) x += x >= 0 ? 0.1 : -0.1;
  check("relu", [](T&, const V& v) { return relu(v[0]); }, {r});
  check("sigmoid", [](T&, const V& v) { return sigmoid(v[0]); }, {random_tensor({m, k}, rng, -4, 4)});
  check("softmax", [](T&, const V& v) { return softmax(v[0]); }, {random_tensor({m, k}, rng, -3, 3)});
  check("layernorm", [](T&, const V& v) { return layernorm(v[0], v[1], v[2], 1e-5); },
        {random_tensor({m, k + 1}, rng), random_tensor({k + 1}, rng), random_tensor({k + 1}, rng)});
  check("conv1d", [](T&, const V& v) { return conv1d(v[0], v[1], v[2]); },
        {random_tensor({bsz, len, c}, rng), random_tensor({3, c, n}, rng), random_tensor({n}, rng)});
  check("maxpool1d", [](T&, const V& v) { return maxpool1d(v[0], 2); }, {random_tensor({bsz, len, c}, rng)});
  {
    TensorF64 mean_state, var_state;
    check("batchnorm_train",
          [&](T&, const V& v) {
            TensorF64 rm, rv;
            return batchnorm1d(v[0], v[1], v[2], rm, rv, BatchNormOptions{Mode::train, 0.1, 1e-5});
          },
          {random_tensor({bsz + 2, len, c}, rng), random_tensor({c}, rng), random_tensor({c}, rng)});
    TensorF64 rm = random_tensor({c}, rng), rv = random_tensor({c}, rng, 0.5, 2.0);
    check("batchnorm_eval",
          [&](T&, const V& v) { return batchnorm1d(v[0], v[1], v[2], rm, rv, BatchNormOptions{Mode::eval, 0.1, 1e-5}); },
          {random_tensor({bsz, len, c}, rng), random_tensor({c}, rng), random_tensor({c}, rng)});
  }
  {
    std::mt19937_64 drop_rng(seed);
    const std::uint64_t state_seed = seed * 31 + 7;
    check("dropout",
          [&](T&, const V& v) {
            std::mt19937_64 fixed(state_seed);
            return dropout(v[0], 0.3, Mode::train, fixed);
          },
          {random_tensor({m, k}, rng)});
  }
  const TensorF64 target = random_tensor({m, 1}, rng, 0.0, 1.0);
  check("binary_cross_entropy", [&](T&, const V& v) { return binary_cross_entropy(v[0], target); },
        {random_tensor({m, 1}, rng, 0.05, 0.95)});
  const TensorF64 reg = random_tensor({m, n}, rng);
  check("mean_squared_error", [&](T&, const V& v) { return mean_squared_error(v[0], reg); },
        {random_tensor({m, n}, rng)});
  TensorF64 onehot({m, n});
  for (std::size_t i = 0; i < m; ++i) onehot[i * n + (i % n)] = 1.0;
  check("categorical_cross_entropy", [&](T&, const V& v) { return categorical_cross_entropy(softmax(v[0]), onehot); },
        {random_tensor({m, n}, rng)});
}

INSTANTIATE_TEST_SUITE_P(RandomShapes, PrimitiveGradients, ::testing::Range(0, 20));

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  ParameterSet<float> params;
  auto& p = params.add("p", Tensor({3}, std::vector<float>{1, -2, 3}));
  params.zero_grad();
  adam_step(params, AdamConfig{});
  expect_near(p.value, {1, -2, 3}, 0.0f);
  EXPECT_EQ(p.step_count, 1);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ParameterSet<double> params;
  auto& p = params.add("p", TensorF64({1}, 0.0));
  params.zero_grad();
  p.grad[0] = 1.0;
  adam_step(params, AdamConfig{});
  EXPECT_NEAR(p.value[0], -1e-3, 1e-9);
}

TEST(Adam, MatchesReferenceRecurrence) {
  // Hand-rolled Adam on f(p) = p^2 as an independent oracle.
  ParameterSet<double> params;
  auto& p = params.add("p", TensorF64({1}, 1.0));
  double ref = 1.0, m = 0.0, v = 0.0;
  const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double previous = 1.0;
  for (int t = 1; t <= 10; ++t) {
    params.zero_grad();
    p.grad[0] = 2.0 * p.value[0];
    adam_step(params, AdamConfig{lr, b1, b2, eps});
    const double g = 2.0 * ref;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    ref -= lr * (m / (1 - std::pow(b1, t))) / (std::sqrt(v / (1 - std::pow(b2, t))) + eps);
    EXPECT_NEAR(p.value[0], ref, 1e-12);
    EXPECT_LT(std::abs(p.value[0]), std::abs(previous));
    previous = p.value[0];
  }
}

TEST(Adam, UnpopulatedGradientIsContractError) {
  ParameterSet<float> params;
  params.add("p", Tensor({1}));
  EXPECT_THROW(adam_step(params, AdamConfig{}), ContractError);
  params.zero_grad();
  adam_step(params, AdamConfig{});
  EXPECT_THROW(adam_step(params, AdamConfig{}), ContractError);
}

TEST(ParameterSet, PathsAreUnique) {
  ParameterSet<float> params;
  params.add("a.w", Tensor({1}));
  EXPECT_THROW(params.add("a.w", Tensor({2})), ContractError);
  EXPECT_THROW(params.at("missing"), ContractError);
}
