#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "xrda/errors.hpp"
#include "xrda/regularizer.hpp"

namespace xrda {
namespace {

ParamGroup group_with(const Eigen::VectorXd& avg, const Eigen::VectorXd& values) {
  ParamGroup g;
  g.name = "w";
  g.shape = {static_cast<std::size_t>(avg.size())};
  g.values = values;
  g.avg_magnitude = avg;
  g.half_step = values;
  g.regularized = true;
  return g;
}

TEST(AdaptiveWeights, Endpoints) {
  const RegularizerConfig cfg{0.3, 0.05, Weighting::Adaptive};
  Eigen::VectorXd avg(3);
  avg << 0.8, 0.0, 0.4;
  const auto w = adaptive_weights(group_with(avg, avg), cfg);
  EXPECT_EQ(w[0], cfg.lambda);
  EXPECT_EQ(w[1], cfg.weight_cap());
  EXPECT_DOUBLE_EQ(cfg.weight_cap(), 0.3 * (1.0 + 1.0 / 0.05));
  EXPECT_GT(w[2], w[0]);
  EXPECT_LT(w[2], w[1]);
}

TEST(AdaptiveWeights, DefaultHyperparameters) {
  const RegularizerConfig cfg{1e-6, 2e-3, Weighting::Adaptive};
  EXPECT_NEAR(adaptive_weight(0.5, 1.0, cfg), 1e-6 * 1.002 / 0.502, 1e-20);
}

TEST(AdaptiveWeights, AllZeroGroupGetsCap) {
  const RegularizerConfig cfg{2.0, 0.5, Weighting::Adaptive};
  const auto w = adaptive_weights(group_with(Eigen::VectorXd::Zero(4), Eigen::VectorXd::Zero(4)), cfg);
  for (Eigen::Index j = 0; j < 4; ++j) EXPECT_EQ(w[j], cfg.weight_cap());
}

TEST(AdaptiveWeights, RequiresRegularizedGroup) {
  auto g = group_with(Eigen::VectorXd::Ones(2), Eigen::VectorXd::Ones(2));
  g.regularized = false;
  EXPECT_THROW(adaptive_weights(g, RegularizerConfig{}), ArgumentError);
}

TEST(AdaptiveWeights, MonotoneAndInRange) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const RegularizerConfig cfg{1e-3 + u(rng), 1e-3 + u(rng), Weighting::Adaptive};
    const double m = 0.1 + u(rng);
    double prev = cfg.weight_cap();
    for (int i = 0; i <= 50; ++i) {
      const double w = adaptive_weight(m * i / 50.0, m, cfg);
      ASSERT_LE(w, prev);
      ASSERT_GE(w, cfg.lambda * (1 - 1e-15));
      ASSERT_LE(w, cfg.weight_cap());
      prev = w;
    }
  }
}

TEST(LogRegularizer, Examples) {
  const RegularizerConfig cfg{0.7, 0.1, Weighting::Adaptive};
  // All-zero values with M frozen at m.
  const double m = 0.4;
  EXPECT_NEAR(log_regularizer_term(Eigen::VectorXd::Zero(5), m, cfg), 0.7 * 1.1 * 5 * m * std::log(0.1), 1e-14);
  // Single entry: M = |theta|.
  Eigen::VectorXd one(1);
  one << -0.3;
  const auto g = group_with(one.cwiseAbs(), one);
  ParamStore store;
  store.add_group(g);
  EXPECT_NEAR(log_regularizer_value(store, cfg), 0.7 * 1.1 * 0.3 * std::log(1.1), 1e-15);
  // M = 0 contributes nothing.
  EXPECT_EQ(log_regularizer_term(Eigen::VectorXd::Zero(3), 0.0, cfg), 0.0);
}

TEST(LogRegularizer, SkipsUnregularizedGroups) {
  Eigen::VectorXd v(2);
  v << 1.0, 0.5;
  auto g = group_with(v, v);
  g.regularized = false;
  ParamStore store;
  store.add_group(g);
  EXPECT_EQ(log_regularizer_value(store, RegularizerConfig{}), 0.0);
}

// The adaptive weight is the derivative of the log regularizer in |theta|
// with M held fixed.
TEST(LogRegularizer, FiniteDifferenceMatchesWeights) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const RegularizerConfig cfg{1e-3 + u(rng), 1e-3 + 0.5 * u(rng), Weighting::Adaptive};
    Eigen::VectorXd mags(12);
    for (Eigen::Index j = 0; j < mags.size(); ++j) mags[j] = 0.05 + u(rng);
    const double m = mags.maxCoeff();
    const auto w = adaptive_weights(mags, m, cfg);
    for (Eigen::Index j = 0; j < mags.size(); ++j) {
      const double h = 1e-6 * m;
      Eigen::VectorXd plus = mags, minus = mags;
      plus[j] += h;
      minus[j] -= h;
      const double fd = (log_regularizer_term(plus, m, cfg) - log_regularizer_term(minus, m, cfg)) / (2 * h);
      EXPECT_LT(std::abs(fd - w[j]) / w[j], 1e-4);
    }
  }
}

TEST(SoftThreshold, Examples) {
  EXPECT_DOUBLE_EQ(soft_threshold(1.0, 0.3), 0.7);
  EXPECT_EQ(soft_threshold(-0.2, 0.3), 0.0);
  EXPECT_EQ(soft_threshold(0.5, 0.5), 0.0);
  EXPECT_FALSE(std::signbit(soft_threshold(-0.5, 0.5)));
  EXPECT_DOUBLE_EQ(soft_threshold(-1.0, 0.25), -0.75);
  EXPECT_THROW(soft_threshold(1.0, -0.1), ArgumentError);
}

TEST(SoftThreshold, MatchesGridOracle) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> ux(-1.0, 1.0);
  std::uniform_real_distribution<double> ut(0.0, 0.8);
  for (int i = 0; i < 100; ++i) {
    const double x = ux(rng), t = ut(rng);
    EXPECT_NEAR(soft_threshold(x, t), testing::grid_prox(x, t), 2e-5) << x << " " << t;
  }
}

TEST(SoftThreshold, NonExpansiveAndSignPreserving) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int i = 0; i < 2000; ++i) {
    const double x = u(rng), y = u(rng), t = std::abs(u(rng));
    ASSERT_LE(std::abs(soft_threshold(x, t) - soft_threshold(y, t)), std::abs(x - y) + 1e-15);
    ASSERT_GE(soft_threshold(x, t) * x, 0.0);
  }
}

TEST(ProxWeightedL1, ZeroStepIsIdentity) {
  Eigen::VectorXd v(4);
  v << 1.0, -2.0, 0.0, 3e-9;
  Eigen::VectorXd out = v;
  prox_weighted_l1(out, Eigen::VectorXd::Constant(4, 5.0), 0.0);
  EXPECT_EQ(out, v);
}

TEST(ProxWeightedL1, UniformReducesToSoftThreshold) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::VectorXd v(30);
  for (auto& x : v) x = n(rng);
  Eigen::VectorXd out = v;
  prox_weighted_l1(out, Eigen::VectorXd::Constant(30, 0.4), 1.5);
  for (Eigen::Index j = 0; j < v.size(); ++j) EXPECT_EQ(out[j], soft_threshold(v[j], 1.5 * 0.4));
}

TEST(ProxWeightedL1, SeparableGridOracleAndShrinkage) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::VectorXd v(25), w(25);
  for (Eigen::Index j = 0; j < 25; ++j) {
    v[j] = u(rng);
    w[j] = std::abs(u(rng));
  }
  const double step = 0.6;
  Eigen::VectorXd out = v;
  prox_weighted_l1(out, w, step);
  for (Eigen::Index j = 0; j < 25; ++j) {
    EXPECT_NEAR(out[j], testing::grid_prox(v[j], step * w[j]), 2e-5);
    EXPECT_LE(std::abs(out[j]), std::abs(v[j]));
  }
}

TEST(ProxWeightedL1, LengthMismatch) {
  Eigen::VectorXd v = Eigen::VectorXd::Ones(3);
  EXPECT_THROW(prox_weighted_l1(v, Eigen::VectorXd::Ones(2), 1.0), ArgumentError);
}

TEST(RegularizerConfig, Validation) {
  EXPECT_NO_THROW((RegularizerConfig{0.0, 1.0, Weighting::Uniform}.validate()));
  EXPECT_THROW((RegularizerConfig{-1.0, 1.0, Weighting::Uniform}.validate()), ArgumentError);
  EXPECT_THROW((RegularizerConfig{1.0, 0.0, Weighting::Uniform}.validate()), ArgumentError);
}

}  // namespace
}  // namespace xrda
