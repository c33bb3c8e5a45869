#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "xrda/bench.hpp"
#include "xrda/errors.hpp"
#include "xrda/optimizer.hpp"

namespace xrda {
namespace {

LeastSquaresProblem random_least_squares(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd a(rows, cols);
  Eigen::VectorXd y(rows);
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) a(i, j) = n(rng) / std::sqrt(static_cast<double>(rows));
    y[i] = n(rng);
  }
  return LeastSquaresProblem(a, y);
}

Schedules constant_schedules(double s, double alpha, double mu) {
  return {StepSchedule(schedule::Constant{s}), AlphaSchedule(schedule::Constant{alpha}),
          MomentumRule(schedule::FixedMomentum{mu})};
}

std::vector<std::size_t> all_rows(const Problem& p) {
  std::vector<std::size_t> r(p.data().rows());
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = i;
  return r;
}

TEST(Schedules, Cosine) {
  const StepSchedule s(schedule::Cosine{2.0, 100});
  EXPECT_EQ(s.at(0), 2.0);
  EXPECT_NEAR(s.at(50), 1.0, 1e-15);
  EXPECT_NEAR(s.at(25), 2.0 * 0.5 * (1 + std::cos(std::numbers::pi / 4)), 1e-15);
  for (std::uint64_t n = 0; n < 100; ++n) EXPECT_GT(s.at(n), 0.0);
  EXPECT_EQ(s.at(100), s.at(99));
  EXPECT_EQ(s.at(1000), s.at(99));
}

TEST(Schedules, StepDecayAndConstant) {
  const StepSchedule d(schedule::StepDecay{1.0, 0.5, 10});
  EXPECT_EQ(d.at(9), 1.0);
  EXPECT_EQ(d.at(10), 0.5);
  EXPECT_EQ(d.at(35), 0.125);
  EXPECT_EQ(StepSchedule(schedule::Constant{0.3}).at(12345), 0.3);
  EXPECT_THROW(StepSchedule(schedule::Constant{0.0}), ArgumentError);
  EXPECT_THROW(StepSchedule(schedule::Cosine{1.0, 0}), ArgumentError);
  EXPECT_THROW(StepSchedule(schedule::StepDecay{1.0, 1.5, 3}), ArgumentError);
}

TEST(Schedules, AlphaRamp) {
  const AlphaSchedule a(schedule::LinearRamp{0.1, 0.9, 8});
  EXPECT_EQ(a.at(0), 0.1);
  EXPECT_NEAR(a.at(4), 0.5, 1e-15);
  EXPECT_EQ(a.at(8), 0.9);
  EXPECT_EQ(a.at(80), 0.9);
  double prev = 0.0;
  for (std::uint64_t n = 0; n < 20; ++n) {
    EXPECT_GE(a.at(n), prev);
    EXPECT_LE(a.at(n), 1.0);
    prev = a.at(n);
  }
  EXPECT_THROW(AlphaSchedule(schedule::Constant{1.1}), ArgumentError);
  EXPECT_THROW(AlphaSchedule(schedule::LinearRamp{0.8, 0.2, 4}), ArgumentError);
}

TEST(Schedules, MomentumTimescale) {
  const MomentumRule m(schedule::Timescale{9.5});
  EXPECT_EQ(m.at(0.1), std::exp(-0.1 / 9.5));
  EXPECT_GT(m.at(5.0), 0.0);
  EXPECT_LT(m.at(1e-300), 1.0);
  EXPECT_LT(m.at(0.2), m.at(0.1));
  EXPECT_THROW(MomentumRule(schedule::Timescale{0.0}), ArgumentError);
  EXPECT_THROW(MomentumRule(schedule::FixedMomentum{1.0}), ArgumentError);
}

TEST(Step, AccumulatedStepUnrolled) {
  auto p = random_least_squares(10, 4, 1);
  auto store = p.make_store(0);
  auto state = OptimizerState::for_store(store);
  const auto sched = constant_schedules(0.1, 0.5, 0.0);
  const RegularizerConfig reg{0.01, 0.1, Weighting::Uniform};
  Gradient g;
  const double expected[] = {0.1, 0.15, 0.175};
  for (double e : expected) {
    p.loss_and_grad(store, all_rows(p), g);
    step(store, g, state, sched, reg);
    EXPECT_LE(std::abs(state.accumulated_step - e), std::nextafter(e, 1.0) - e);
  }
}

TEST(Step, RdaAccumulatesAllSteps) {
  auto p = random_least_squares(10, 4, 2);
  auto store = p.make_store(0);
  auto state = OptimizerState::for_store(store);
  Schedules sched{StepSchedule(schedule::Cosine{0.5, 20}), AlphaSchedule(schedule::Constant{1.0}),
                  MomentumRule(schedule::FixedMomentum{0.0})};
  Gradient g;
  double sum = 0.0;
  for (std::uint64_t k = 0; k < 20; ++k) {
    p.loss_and_grad(store, all_rows(p), g);
    step(store, g, state, sched, RegularizerConfig{0.01, 0.1, Weighting::Uniform});
    sum += sched.step.at(k);
    EXPECT_EQ(state.accumulated_step, sum);
  }
}

// S_n -> s / (1 - alpha), with the gap shrinking by exactly alpha per step.
TEST(Step, AccumulatedStepGeometricConvergence) {
  for (double alpha : {0.3, 0.5, 0.9}) {
    auto p = random_least_squares(10, 4, 3);
    auto store = p.make_store(0);
    auto state = OptimizerState::for_store(store);
    const auto sched = constant_schedules(0.1, alpha, 0.0);
    const double limit = 0.1 / (1 - alpha);
    Gradient g;
    double gap = limit;
    for (int k = 0; k < 30; ++k) {
      p.loss_and_grad(store, all_rows(p), g);
      step(store, g, state, sched, RegularizerConfig{0.0, 0.1, Weighting::Uniform});
      const double next_gap = std::abs(state.accumulated_step - limit);
      EXPECT_NEAR(next_gap, alpha * gap, 1e-14);
      gap = next_gap;
    }
  }
}

TEST(Step, ProxSgdLimitIsBitwise) {
  auto p = random_least_squares(48, 32, 4);
  auto store = p.make_store(0);
  testing::jitter(store, 0.3, 1);
  for (auto& g : store.groups()) g.half_step = g.values;
  auto state = OptimizerState::for_store(store);
  testing::ProxSgdReference ref{store.group(0).values};
  auto ref_store = store;
  const RegularizerConfig reg{0.05, 0.1, Weighting::Uniform};
  const MinibatchSampler sampler(48, 8, 3);
  Gradient g, rg;
  int steps = 0;
  for (std::uint64_t e = 0; steps < 50; ++e) {
    for (const auto& batch : sampler.epoch_batches(e)) {
      p.loss_and_grad(store, batch, g);
      ref_store.group(0).values = ref.x;
      p.loss_and_grad(ref_store, batch, rg);
      step(store, g, state, constant_schedules(0.2, 0.0, 0.0), reg);
      ref.step(rg[0], 0.2, reg.lambda);
      ASSERT_EQ(std::memcmp(store.group(0).values.data(), ref.x.data(), 32 * sizeof(double)), 0) << steps;
      if (++steps == 50) break;
    }
  }
}

TEST(Step, RdaLimitIsBitwise) {
  auto p = random_least_squares(48, 32, 5);
  auto store = p.make_store(0);
  testing::jitter(store, 0.3, 2);
  for (auto& g : store.groups()) g.half_step = g.values;
  auto state = OptimizerState::for_store(store);
  testing::RdaReference ref{store.group(0).values, store.group(0).values};
  auto ref_store = store;
  const RegularizerConfig reg{0.05, 0.1, Weighting::Uniform};
  Gradient g, rg;
  for (int k = 0; k < 50; ++k) {
    p.loss_and_grad(store, all_rows(p), g);
    ref_store.group(0).values = ref.x;
    p.loss_and_grad(ref_store, all_rows(p), rg);
    step(store, g, state, constant_schedules(0.05, 1.0, 0.0), reg);
    ref.step(rg[0], 0.05, reg.lambda);
    ASSERT_EQ(std::memcmp(store.group(0).values.data(), ref.x.data(), 32 * sizeof(double)), 0) << k;
    ASSERT_EQ(state.accumulated_step, ref.total_step);
  }
}

// With lambda = 0 the method is momentum SGD with a normalized buffer.
TEST(Step, ZeroLambdaIsMomentumSgd) {
  auto p = random_least_squares(20, 6, 6);
  auto store = p.make_store(0);
  auto state = OptimizerState::for_store(store);
  Eigen::VectorXd x = store.group(0).values;
  Eigen::VectorXd v = Eigen::VectorXd::Zero(6);
  auto ref_store = store;
  const Schedules sched{StepSchedule(schedule::Constant{0.3}), AlphaSchedule(schedule::Constant{0.0}),
                        MomentumRule(schedule::Timescale{9.5})};
  const double mu = std::exp(-0.3 / 9.5);
  Gradient g, rg;
  for (int k = 0; k < 40; ++k) {
    p.loss_and_grad(store, all_rows(p), g);
    ref_store.group(0).values = x;
    p.loss_and_grad(ref_store, all_rows(p), rg);
    step(store, g, state, sched, RegularizerConfig{0.0, 0.1, Weighting::Adaptive});
    v = mu * v + (1 - mu) * rg[0];
    x = x - 0.3 * v;
    for (Eigen::Index j = 0; j < 6; ++j) ASSERT_EQ(store.group(0).values[j], x[j]);
  }
}

TEST(Step, MomentumBufferStaysInGradientBox) {
  ParamStore store;
  std::vector<GroupSpec> spec{{"w", GroupKind::Weight, {5}, init::Uniform{-1, 1}, {}}};
  store = init_store(spec, 1);
  auto state = OptimizerState::for_store(store);
  const Schedules sched{StepSchedule(schedule::Cosine{0.5, 200}), AlphaSchedule(schedule::Constant{0.5}),
                        MomentumRule(schedule::Timescale{2.0})};
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-0.7, 0.7);
  for (int k = 0; k < 200; ++k) {
    Gradient g{Eigen::VectorXd(5)};
    for (auto& x : g[0]) x = u(rng);
    step(store, g, state, sched, RegularizerConfig{0.01, 0.1, Weighting::Adaptive});
    ASSERT_LE(state.velocity[0].lpNorm<Eigen::Infinity>(), 0.7);
    ASSERT_GT(state.mu, 0.0);
    ASSERT_LT(state.mu, 1.0);
  }
}

TEST(Step, SubThresholdEntriesStayZero) {
  std::vector<GroupSpec> spec{{"w", GroupKind::Weight, {3}, init::Zeros{}, {}}};
  auto store = init_store(spec, 0);
  store.group(0).values << 0.0, 1.0, -1.0;
  store.group(0).half_step = store.group(0).values;
  store.group(0).avg_magnitude = store.group(0).values.cwiseAbs();
  auto state = OptimizerState::for_store(store);
  // Coordinate 0 sees a small constant gradient: its half step grows by
  // s * 0.01 per step while the threshold grows by s * lambda.
  Gradient g{Eigen::VectorXd(3)};
  g[0] << 0.01, 0.0, 0.0;
  for (int k = 0; k < 100; ++k) {
    step(store, g, state, constant_schedules(0.1, 1.0, 0.0), RegularizerConfig{0.05, 0.1, Weighting::Uniform});
    ASSERT_EQ(store.group(0).values[0], 0.0);
  }
}

TEST(Step, UnregularizedGroupsSkipProx) {
  std::vector<GroupSpec> spec{{"b", GroupKind::Bias, {2}, init::Zeros{}, {}}};
  auto store = init_store(spec, 0);
  auto state = OptimizerState::for_store(store);
  Gradient g{Eigen::VectorXd::Constant(2, 1e-3)};
  step(store, g, state, constant_schedules(1.0, 0.0, 0.0), RegularizerConfig{10.0, 0.1, Weighting::Uniform});
  EXPECT_EQ(store.group(0).values, Eigen::VectorXd::Constant(2, -1e-3));
}

TEST(Step, Errors) {
  std::vector<GroupSpec> spec{{"w", GroupKind::Weight, {3}, init::Uniform{-1, 1}, {}},
                              {"b", GroupKind::Bias, {2}, init::Zeros{}, {}}};
  auto store = init_store(spec, 0);
  auto state = OptimizerState::for_store(store);
  const auto before = store;
  const auto sched = constant_schedules(0.1, 0.0, 0.0);
  Gradient short_grad{Eigen::VectorXd::Zero(3)};
  EXPECT_THROW(step(store, short_grad, state, sched, RegularizerConfig{}), ArgumentError);
  Gradient bad_len{Eigen::VectorXd::Zero(3), Eigen::VectorXd::Zero(5)};
  EXPECT_THROW(step(store, bad_len, state, sched, RegularizerConfig{}), ArgumentError);
  Gradient nan_grad{Eigen::VectorXd::Zero(3), Eigen::VectorXd::Zero(2)};
  nan_grad[1][1] = std::numeric_limits<double>::quiet_NaN();
  try {
    step(store, nan_grad, state, sched, RegularizerConfig{});
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("'b'"), std::string::npos);
  }
  EXPECT_TRUE(store == before);
  EXPECT_EQ(state.n, 0u);
}

// A strongly convex quadratic plus l1: xRDA with alpha < 1 and decaying
// steps reaches the proximal-gradient solution.
TEST(Step, ConvergesToIstaSolution) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd a(24, 12);
  Eigen::VectorXd y(24);
  for (auto& v : a.reshaped()) v = n(rng) / std::sqrt(24.0);
  for (auto& v : y) v = n(rng);
  const double lambda_mean = 0.02;
  const auto ista =
      ista_weighted(a, y, Eigen::VectorXd::Constant(12, lambda_mean * 24), Eigen::VectorXd::Zero(12), 1000000, 1e-13);
  ASSERT_TRUE(ista.converged);

  LeastSquaresProblem p(a, y);
  auto store = p.make_store(0);
  auto state = OptimizerState::for_store(store);
  const double lip = lipschitz_constant(a) / 24.0;
  const Schedules sched{StepSchedule(schedule::StepDecay{0.8 * (1 - 0.7) / lip, 0.7, 1500}),
                        AlphaSchedule(schedule::Constant{0.7}), MomentumRule(schedule::FixedMomentum{0.0})};
  Gradient g;
  for (int k = 0; k < 12000; ++k) {
    p.loss_and_grad(store, all_rows(p), g);
    step(store, g, state, sched, RegularizerConfig{lambda_mean, 0.1, Weighting::Uniform});
  }
  EXPECT_LT((store.group(0).values - ista.x).lpNorm<Eigen::Infinity>(), 1e-6);
}

TEST(ClassicalMomentum, HeavyBall) {
  std::vector<GroupSpec> spec{{"w", GroupKind::Weight, {1}, init::Zeros{}, {}}};
  auto store = init_store(spec, 0);
  auto state = OptimizerState::for_store(store);
  Gradient g{Eigen::VectorXd::Ones(1)};
  const StepSchedule s(schedule::Constant{0.1});
  classical_momentum_step(store, g, state, s, 0.5);
  classical_momentum_step(store, g, state, s, 0.5);
  // v: 1, 1.5; theta: -0.1, -0.25
  EXPECT_DOUBLE_EQ(store.group(0).values[0], -0.25);
}

TEST(OptimizerStateFile, RoundTripAndErrors) {
  OptimizerState s;
  s.n = 17;
  s.accumulated_step = 0.123;
  s.alpha = 0.5;
  s.mu = 0.9;
  s.step_size = 1e-3;
  s.velocity = {Eigen::VectorXd::LinSpaced(4, -1, 1), Eigen::VectorXd::Constant(2, 3.25)};
  auto bytes = encode_optimizer_state(s);
  EXPECT_TRUE(decode_optimizer_state(bytes) == s);
  bytes[2] = 'x';
  EXPECT_THROW(decode_optimizer_state(bytes), FormatError);
  bytes = encode_optimizer_state(s);
  bytes.resize(bytes.size() - 3);
  EXPECT_THROW(decode_optimizer_state(bytes), FormatError);
}

// --- training loop ---------------------------------------------------------

OptimizerSpec xrda_spec(double lambda) {
  OptimizerSpec spec;
  spec.method = Method::XrdaMomentum;
  spec.schedules = {StepSchedule(schedule::Cosine{0.5, 200}), AlphaSchedule(schedule::Constant{0.5}),
                    MomentumRule(schedule::Timescale{9.5})};
  spec.reg = {lambda, 0.05, Weighting::Adaptive};
  return spec;
}

TEST(RunEpochs, ZeroEpochsIsNoop) {
  auto p = random_least_squares(20, 5, 7);
  auto store = p.make_store(1);
  const auto before = store;
  auto state = OptimizerState::for_store(store);
  const auto rep = run_epochs(p, store, state, xrda_spec(0.01), TrainOptions{0, 5, 1});
  EXPECT_TRUE(rep.rows.empty());
  EXPECT_TRUE(store == before);
}

TEST(RunEpochs, DeterministicGivenSeed) {
  auto p = random_least_squares(20, 5, 7);
  auto run = [&](std::uint64_t seed) {
    auto store = p.make_store(1);
    auto state = OptimizerState::for_store(store);
    auto rep = run_epochs(p, store, state, xrda_spec(0.01), TrainOptions{10, 4, seed});
    return std::make_pair(rep, store);
  };
  const auto [r1, s1] = run(3);
  const auto [r2, s2] = run(3);
  const auto [r3, s3] = run(4);
  ASSERT_EQ(r1.rows.size(), 10u);
  EXPECT_TRUE(s1 == s2);
  EXPECT_FALSE(s1 == s3);
  for (std::size_t i = 0; i < r1.rows.size(); ++i) {
    EXPECT_EQ(r1.rows[i].train_loss, r2.rows[i].train_loss);
    EXPECT_EQ(r1.rows[i].accumulated_step, r2.rows[i].accumulated_step);
  }
}

TEST(RunEpochs, ResumeFromCheckpointIsBitwise) {
  auto p = random_least_squares(30, 8, 8);
  const auto spec = xrda_spec(0.02);

  auto straight = p.make_store(2);
  auto st = OptimizerState::for_store(straight);
  run_epochs(p, straight, st, spec, TrainOptions{10, 6, 5});

  auto first = p.make_store(2);
  auto st1 = OptimizerState::for_store(first);
  run_epochs(p, first, st1, spec, TrainOptions{5, 6, 5});
  const auto dir = std::filesystem::temp_directory_path();
  save_checkpoint(first, dir / "xrda_resume.bin");
  save_optimizer_state(st1, dir / "xrda_resume.state");
  auto resumed = load_checkpoint(dir / "xrda_resume.bin");
  auto st2 = load_optimizer_state(dir / "xrda_resume.state");
  const auto rep = run_epochs(p, resumed, st2, spec, TrainOptions{5, 6, 5});
  EXPECT_EQ(rep.rows.front().epoch, 6u);
  EXPECT_TRUE(resumed == straight);
  EXPECT_TRUE(st2 == st);
  std::filesystem::remove(dir / "xrda_resume.bin");
  std::filesystem::remove(dir / "xrda_resume.state");
}

TEST(RunEpochs, RdaIsSparserThanProxSgd) {
  const auto inst = generate_cs_instance(256, 100, 10, 0.0, 7);
  LeastSquaresProblem p(inst.a, inst.y, inst.x_true);
  auto run = [&](Method m) {
    auto store = p.make_store(0);
    auto state = OptimizerState::for_store(store);
    OptimizerSpec spec;
    spec.method = m;
    spec.schedules.step = StepSchedule(schedule::Constant{1e-3});
    spec.reg = {0.01, 2e-3, Weighting::Uniform};
    return run_epochs(p, store, state, spec, TrainOptions{200, 10, 1}).rows.back().nonzero_fraction;
  };
  EXPECT_LT(run(Method::Rda), run(Method::SgdProx));
}

TEST(RunEpochs, DivergenceReportsLastGoodEpoch) {
  auto p = random_least_squares(20, 5, 9);
  auto store = p.make_store(0);
  auto state = OptimizerState::for_store(store);
  OptimizerSpec spec;
  spec.method = Method::SgdProx;
  spec.schedules.step = StepSchedule(schedule::Constant{1e3});
  spec.reg = {0.0, 0.1, Weighting::Uniform};
  const auto rep = run_epochs(p, store, state, spec, TrainOptions{500, 20, 0});
  EXPECT_TRUE(rep.diverged);
  EXPECT_FALSE(rep.divergence_reason.empty());
  EXPECT_EQ(rep.last_good_epoch, rep.rows.size());
  EXPECT_LT(rep.rows.size(), 500u);
}

TEST(RunEpochs, RejectsMidEpochState) {
  auto p = random_least_squares(20, 5, 9);
  auto store = p.make_store(0);
  auto state = OptimizerState::for_store(store);
  state.n = 3;
  EXPECT_THROW(run_epochs(p, store, state, xrda_spec(0.0), TrainOptions{1, 5, 0}), ArgumentError);
}

TEST(Methods, EffectiveSchedules) {
  OptimizerSpec spec;
  spec.schedules.alpha = AlphaSchedule(schedule::Constant{0.4});
  spec.method = Method::SgdProx;
  EXPECT_EQ(spec.effective_schedules().alpha.at(10), 0.0);
  EXPECT_EQ(spec.effective_schedules().momentum.at(0.5), 0.0);
  spec.method = Method::Rda;
  EXPECT_EQ(spec.effective_schedules().alpha.at(10), 1.0);
  spec.method = Method::Xrda;
  EXPECT_EQ(spec.effective_schedules().alpha.at(10), 0.4);
  EXPECT_EQ(spec.effective_schedules().momentum.at(0.5), 0.0);
  spec.method = Method::XrdaMomentum;
  EXPECT_EQ(spec.effective_schedules().momentum.at(0.5), std::exp(-0.5 / 9.5));
  for (auto m : {Method::Sgd, Method::SgdProx, Method::Rda, Method::Xrda, Method::XrdaMomentum})
    EXPECT_EQ(parse_method(to_string(m)), m);
}

}  // namespace
}  // namespace xrda
