#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "xrda/models.hpp"
#include "xrda/param_store.hpp"
#include "xrda/regularizer.hpp"

namespace xrda {

// ---------------------------------------------------------------------------
// Schedules

namespace schedule {
struct Constant {
  double value = 0.1;
};
/// s0 * (1 + cos(pi * n / total_steps)) / 2; held at its n = total_steps - 1
/// value afterwards so it never reaches zero.
struct Cosine {
  double initial = 1.0;
  std::uint64_t total_steps = 1;
};
/// s0 * factor^(n / every).
struct StepDecay {
  double initial = 0.1;
  double factor = 0.5;
  std::uint64_t every = 1;
};
/// start + (end - start) * min(n / ramp_steps, 1).
struct LinearRamp {
  double start = 0.0;
  double end = 1.0;
  std::uint64_t ramp_steps = 1;
};
/// mu = exp(-s_n / T).
struct Timescale {
  double timescale = 9.5;
};
/// mu fixed regardless of the step size.
struct FixedMomentum {
  double mu = 0.0;
};
}  // namespace schedule

class StepSchedule {
public:
  using Kind = std::variant<schedule::Constant, schedule::Cosine, schedule::StepDecay>;

  StepSchedule(Kind kind = schedule::Constant{});  // NOLINT(google-explicit-constructor)

  double at(std::uint64_t n) const;
  const Kind& kind() const { return kind_; }

private:
  Kind kind_;
};

class AlphaSchedule {
public:
  using Kind = std::variant<schedule::Constant, schedule::LinearRamp>;

  AlphaSchedule(Kind kind = schedule::Constant{0.0});  // NOLINT(google-explicit-constructor)

  double at(std::uint64_t n) const;
  const Kind& kind() const { return kind_; }

private:
  Kind kind_;
};

class MomentumRule {
public:
  using Kind = std::variant<schedule::Timescale, schedule::FixedMomentum>;

  MomentumRule(Kind kind = schedule::Timescale{});  // NOLINT(google-explicit-constructor)

  /// Momentum parameter for a step of size `step_size`; lies in [0, 1).
  double at(double step_size) const;
  const Kind& kind() const { return kind_; }

private:
  Kind kind_;
};

struct Schedules {
  StepSchedule step;
  AlphaSchedule alpha;
  MomentumRule momentum;
};

// ---------------------------------------------------------------------------
// State and stepping

struct OptimizerState {
  std::uint64_t n = 0;
  // Accumulated backward step size.
  double accumulated_step = 0.0;
  // Gradient average, one array per store group.
  std::vector<Eigen::VectorXd> velocity;
  // Values used by the most recent step.
  double alpha = 0.0;
  double mu = 0.0;
  double step_size = 0.0;

  static OptimizerState for_store(const ParamStore& store);

  friend bool operator==(const OptimizerState& a, const OptimizerState& b);
};

/// One iteration of the momentum-averaged xRDA family:
///   v     <- mu v + (1 - mu) g
///   half' <- (1 - alpha) theta + alpha half - s v
///   S     <- alpha S + s
///   theta <- prox(half', S * w)   for regularized groups, half' otherwise
/// where mu = momentum(s) also drives the magnitude average that feeds the
/// adaptive weights w. alpha = 0, mu = 0 is proximal SGD; alpha = 1, mu = 0
/// is RDA.
///
/// Throws ArgumentError on misaligned gradients and NumericError (naming
/// the group) on non-finite gradient entries; the store is untouched in
/// both cases.
void step(ParamStore& store, std::span<const Eigen::VectorXd> grad, OptimizerState& state,
          const Schedules& schedules, const RegularizerConfig& reg);

/// Classical heavy-ball SGD (v <- mu v + g, theta <- theta - s v) with no
/// penalty. Dense baseline only.
void classical_momentum_step(ParamStore& store, std::span<const Eigen::VectorXd> grad,
                             OptimizerState& state, const StepSchedule& schedule, double mu);

// Optimizer state files: "XRDAO1" | n | S | alpha | mu | s | group_count |
// per group: len | velocity | FNV-1a 64 checksum of everything after the magic.
std::vector<std::uint8_t> encode_optimizer_state(const OptimizerState& state);
OptimizerState decode_optimizer_state(std::span<const std::uint8_t> bytes);
void save_optimizer_state(const OptimizerState& state, const std::filesystem::path& path);
OptimizerState load_optimizer_state(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Methods and the training loop

enum class Method {
  Sgd,           // classical momentum, dense
  SgdProx,       // alpha = 0, no momentum
  Rda,           // alpha = 1, no momentum
  Xrda,          // configured alpha, no momentum
  XrdaMomentum,  // configured alpha and momentum rule
};

Method parse_method(std::string_view text);
std::string_view to_string(Method m);

struct OptimizerSpec {
  Method method = Method::XrdaMomentum;
  Schedules schedules;
  RegularizerConfig reg;
  // Only used by Method::Sgd.
  double sgd_momentum = 0.9;

  /// Schedules with the alpha / momentum overrides the method implies.
  Schedules effective_schedules() const;
};

/// Applies one step of `spec.method`.
void apply_step(ParamStore& store, std::span<const Eigen::VectorXd> grad, OptimizerState& state,
                const OptimizerSpec& spec);

struct EpochRecord {
  std::uint64_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double metric = 0.0;
  double nonzero_fraction = 0.0;  // percent
  double accumulated_step = 0.0;
  double step_size = 0.0;
  double alpha = 0.0;
  double mu = 0.0;
};

struct TrainingReport {
  std::vector<EpochRecord> rows;
  bool diverged = false;
  std::string divergence_reason;
  // Last epoch whose loss was finite; 0 when none completed.
  std::uint64_t last_good_epoch = 0;
};

struct TrainOptions {
  std::uint64_t epochs = 0;
  std::size_t batch_size = 1;
  std::uint64_t seed = 0;
};

using EpochCallback =
    std::function<void(const EpochRecord&, const ParamStore&, const OptimizerState&)>;

/// Runs `options.epochs` epochs of mini-batch training. The epoch counter
/// resumes from state.n (which must sit on an epoch boundary), so a run
/// restored from a checkpoint continues with the same batch order.
TrainingReport run_epochs(const Problem& problem, ParamStore& store, OptimizerState& state,
                          const OptimizerSpec& spec, const TrainOptions& options,
                          const EpochCallback& on_epoch = {});

/// Percent of entries across the store that are exactly non-zero.
double nonzero_percent(const ParamStore& store);

}  // namespace xrda
