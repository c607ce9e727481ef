#include "tfmask/lstm.h"

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "tfmask/error.h"

namespace tfmask {
namespace {

NetworkShape Shape(std::size_t in, std::vector<std::size_t> layers, MergeMode merge,
                   OutputActivation act, std::size_t out) {
  NetworkShape s;
  s.input_dim = in;
  s.layer_sizes = std::move(layers);
  s.merge = merge;
  s.activation = act;
  s.output_dim = out;
  return s;
}

double Sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Textbook single-direction LSTM over columns of x in the given order.
Eigen::MatrixXd NaiveDirection(const Eigen::MatrixXd& w_in, const Eigen::MatrixXd& w_rec,
                               const Eigen::MatrixXd& bias, const Eigen::MatrixXd& x,
                               bool reverse) {
  const Eigen::Index h = w_rec.cols(), n = x.cols();
  Eigen::MatrixXd out(h, n);
  Eigen::VectorXd hs = Eigen::VectorXd::Zero(h), cs = Eigen::VectorXd::Zero(h);
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::Index t = reverse ? n - 1 - k : k;
    Eigen::VectorXd z = w_in * x.col(t) + w_rec * hs + bias.col(0);
    for (Eigen::Index j = 0; j < h; ++j) {
      double i = Sig(z(j)), f = Sig(z(h + j)), g = std::tanh(z(2 * h + j)), o = Sig(z(3 * h + j));
      cs(j) = f * cs(j) + i * g;
      hs(j) = o * std::tanh(cs(j));
    }
    out.col(t) = hs;
  }
  return out;
}

TEST(Lstm, ForwardMatchesNaiveOracle) {
  for (MergeMode merge : {MergeMode::kSum, MergeMode::kMultiply, MergeMode::kAverage, MergeMode::kConcat}) {
    BiLstmNetwork net(Shape(5, {4}, merge, OutputActivation::kSigmoid, 3));
    net.InitRandom(3);
    for (auto& t : net.tensors()) t += 0.3 * Eigen::MatrixXd::Random(t.rows(), t.cols());
    Eigen::MatrixXd x = Eigen::MatrixXd::Random(5, 7);
    const auto& p = net.tensors();
    Eigen::MatrixXd fwd = NaiveDirection(p[0], p[1], p[2], x, false);
    Eigen::MatrixXd bwd = NaiveDirection(p[3], p[4], p[5], x, true);
    Eigen::MatrixXd merged;
    switch (merge) {
      case MergeMode::kSum: merged = fwd + bwd; break;
      case MergeMode::kMultiply: merged = fwd.cwiseProduct(bwd); break;
      case MergeMode::kAverage: merged = 0.5 * (fwd + bwd); break;
      case MergeMode::kConcat:
        merged.resize(8, 7);
        merged << fwd, bwd;
        break;
    }
    Eigen::MatrixXd z = (p[6] * merged).colwise() + p[7].col(0);
    Eigen::MatrixXd want = z.unaryExpr([](double v) { return Sig(v); });
    EXPECT_LT((net.Forward(x) - want).cwiseAbs().maxCoeff(), 1e-12) << MergeName(merge);
  }
}

TEST(Lstm, TensorLayoutAndInit) {
  BiLstmNetwork net(Shape(10, {6, 4}, MergeMode::kConcat, OutputActivation::kSigmoid, 3));
  net.InitRandom(1);
  auto names = net.TensorNames();
  ASSERT_EQ(names.size(), 14u);
  ASSERT_EQ(net.tensors().size(), 14u);
  EXPECT_EQ(net.tensors()[0].rows(), 24);
  EXPECT_EQ(net.tensors()[0].cols(), 10);
  EXPECT_EQ(net.tensors()[6].cols(), 12);  // second layer sees the concatenation
  EXPECT_EQ(net.tensors()[12].cols(), 8);
  const Eigen::MatrixXd& bias = net.tensors()[2];
  EXPECT_EQ(bias.middleRows(6, 6), Eigen::MatrixXd::Ones(6, 1));
  EXPECT_EQ(bias.topRows(6).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_LE(net.tensors()[0].cwiseAbs().maxCoeff(), 1.0 / std::sqrt(10.0));
  std::size_t count = 0;
  for (const auto& t : net.tensors()) count += t.size();
  EXPECT_EQ(net.NumParameters(), count);
}

TEST(Lstm, ZeroWeightsGiveHalf) {
  BiLstmNetwork net(Shape(4, {3}, MergeMode::kAverage, OutputActivation::kSigmoid, 5));
  net.SetZero();
  Eigen::MatrixXd y = net.Forward(Eigen::MatrixXd::Random(4, 6));
  EXPECT_EQ((y.array() - 0.5).abs().maxCoeff(), 0.0);
}

TEST(Lstm, HardSigmoidPoints) {
  EXPECT_EQ(HardSigmoid(0.0), 0.5);
  EXPECT_EQ(HardSigmoid(2.5), 1.0);
  EXPECT_EQ(HardSigmoid(-2.5), 0.0);
  EXPECT_EQ(HardSigmoid(1.0), 0.7);
  EXPECT_EQ(HardSigmoid(100.0), 1.0);
}

// Property: outputs stay in [0,1] for arbitrary weights and inputs.
TEST(Lstm, OutputRange) {
  for (int trial = 0; trial < 20; ++trial) {
    auto act = trial % 2 ? OutputActivation::kHardSigmoid : OutputActivation::kSigmoid;
    BiLstmNetwork net(Shape(6, {5, 3}, static_cast<MergeMode>(trial % 4), act, 4));
    net.InitRandom(trial);
    for (auto& t : net.tensors()) t *= 1.0 + trial;
    Eigen::MatrixXd y = net.Forward(50.0 * Eigen::MatrixXd::Random(6, 9));
    EXPECT_TRUE(y.allFinite());
    EXPECT_GE(y.minCoeff(), 0.0);
    EXPECT_LE(y.maxCoeff(), 1.0);
  }
}

TEST(Lstm, ReversedInputWithSwappedDirectionsReversesOutput) {
  for (MergeMode merge : {MergeMode::kSum, MergeMode::kMultiply, MergeMode::kAverage}) {
    for (std::vector<std::size_t> layers : {std::vector<std::size_t>{5}, {5, 4}}) {
      BiLstmNetwork net(Shape(3, layers, merge, OutputActivation::kSigmoid, 2));
      net.InitRandom(9);
      Eigen::MatrixXd x = Eigen::MatrixXd::Random(3, 11);
      Eigen::MatrixXd y = net.Forward(x);
      Eigen::MatrixXd y_rev = net.WithDirectionsSwapped().Forward(x.rowwise().reverse());
      EXPECT_LT((y_rev - y.rowwise().reverse()).cwiseAbs().maxCoeff(), 1e-14) << MergeName(merge);
    }
  }
}

double SquaredLoss(const Eigen::MatrixXd& y, const Eigen::MatrixXd& t) {
  return 0.5 * (y - t).squaredNorm();
}

// Property: BPTT gradients match central differences for every merge mode,
// depth and activation.
TEST(Lstm, BackwardMatchesFiniteDifferences) {
  std::mt19937 rng(4);
  for (int config = 0; config < 16; ++config) {
    MergeMode merge = static_cast<MergeMode>(config % 4);
    std::vector<std::size_t> layers = config / 4 % 2 ? std::vector<std::size_t>{4, 3}
                                                     : std::vector<std::size_t>{4};
    auto act = config / 8 ? OutputActivation::kHardSigmoid : OutputActivation::kSigmoid;
    BiLstmNetwork net(Shape(3, layers, merge, act, 2));
    net.InitRandom(100 + config);
    Eigen::MatrixXd x = Eigen::MatrixXd::Random(3, 6);
    Eigen::MatrixXd target = Eigen::MatrixXd::Random(2, 6);

    BiLstmNetwork::Cache cache;
    Eigen::MatrixXd y = net.Forward(x, &cache);
    if (act == OutputActivation::kHardSigmoid) {
      ASSERT_GT(y.minCoeff(), 0.0);  // stay off the flat clamp region
      ASSERT_LT(y.maxCoeff(), 1.0);
    }
    auto grads = net.ZeroGradients();
    net.Backward(cache, y - target, grads);

    const double h = 1e-6;
    for (std::size_t ti = 0; ti < net.tensors().size(); ++ti) {
      Eigen::MatrixXd& w = net.tensors()[ti];
      std::uniform_int_distribution<Eigen::Index> pick(0, w.size() - 1);
      for (int k = 0; k < 4; ++k) {
        Eigen::Index i = pick(rng);
        const double orig = w.data()[i];
        w.data()[i] = orig + h;
        double lp = SquaredLoss(net.Forward(x), target);
        w.data()[i] = orig - h;
        double lm = SquaredLoss(net.Forward(x), target);
        w.data()[i] = orig;
        double numeric = (lp - lm) / (2 * h);
        EXPECT_NEAR(grads[ti].data()[i], numeric, 1e-6 * std::max(1.0, std::abs(numeric)))
            << "config " << config << " tensor " << net.TensorNames()[ti];
      }
    }
  }
}

TEST(Lstm, BackwardAccumulates) {
  BiLstmNetwork net(Shape(3, {4}, MergeMode::kAverage, OutputActivation::kSigmoid, 2));
  net.InitRandom(5);
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(3, 5);
  BiLstmNetwork::Cache cache;
  Eigen::MatrixXd y = net.Forward(x, &cache);
  auto once = net.ZeroGradients();
  net.Backward(cache, y, once);
  auto twice = net.ZeroGradients();
  net.Backward(cache, y, twice);
  net.Backward(cache, y, twice);
  for (std::size_t i = 0; i < once.size(); ++i)
    EXPECT_LT((twice[i] - 2.0 * once[i]).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Adam, ZeroLearningRateKeepsWeightsBitIdentical) {
  BiLstmNetwork net(Shape(3, {4}, MergeMode::kAverage, OutputActivation::kSigmoid, 2));
  net.InitRandom(6);
  const auto before = net.tensors();
  AdamOptimizer::Options o;
  o.learning_rate = 0.0;
  AdamOptimizer adam(net.tensors(), o);
  for (int s = 0; s < 25; ++s) {
    auto grads = net.ZeroGradients();
    for (auto& g : grads) g.setRandom();
    adam.Step(net.tensors(), grads);
  }
  EXPECT_EQ(adam.steps(), 25u);
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_EQ(net.tensors()[i], before[i]);
}

TEST(Adam, FirstStepMovesByLearningRateAgainstTheGradientSign) {
  std::vector<Eigen::MatrixXd> params = {Eigen::MatrixXd::Zero(2, 2)};
  std::vector<Eigen::MatrixXd> grads = {Eigen::MatrixXd(2, 2)};
  grads[0] << 3.0, -0.5, 1e-3, -40.0;
  AdamOptimizer adam(params, {});
  adam.Step(params, grads);
  for (Eigen::Index i = 0; i < 4; ++i) {
    double g = grads[0].data()[i];
    EXPECT_NEAR(params[0].data()[i], -1e-3 * g / (std::abs(g) + 1e-8), 1e-15);
  }
}

TEST(Lstm, ShapeErrors) {
  EXPECT_THROW(BiLstmNetwork(Shape(3, {}, MergeMode::kSum, OutputActivation::kSigmoid, 2)), ConfigError);
  EXPECT_THROW(BiLstmNetwork(Shape(3, {2, 2, 2}, MergeMode::kSum, OutputActivation::kSigmoid, 2)),
               ConfigError);
  EXPECT_THROW(BiLstmNetwork(Shape(3, {0}, MergeMode::kSum, OutputActivation::kSigmoid, 2)), ConfigError);
  BiLstmNetwork net(Shape(3, {2}, MergeMode::kSum, OutputActivation::kSigmoid, 2));
  EXPECT_THROW(net.Forward(Eigen::MatrixXd::Zero(4, 3)), DataError);
  EXPECT_THROW(ParseMerge("max"), ConfigError);
  EXPECT_THROW(ParseActivation("relu"), ConfigError);
  EXPECT_EQ(ParseMerge(MergeName(MergeMode::kConcat)), MergeMode::kConcat);
  EXPECT_EQ(ParseActivation(ActivationName(OutputActivation::kHardSigmoid)),
            OutputActivation::kHardSigmoid);
}

}  // namespace
}  // namespace tfmask
