#include "xrda/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numbers>

#include "xrda/detail/byte_io.hpp"
#include "xrda/errors.hpp"

namespace xrda {

namespace {

constexpr std::string_view kStateMagic = "XRDAO1";

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

bool in_unit_interval(double a) { return a >= 0.0 && a <= 1.0; }

void check_gradient(const ParamStore& store, std::span<const Eigen::VectorXd> grad) {
  if (grad.size() != store.group_count())
    throw ArgumentError("gradient has " + std::to_string(grad.size()) + " groups, store has " +
                        std::to_string(store.group_count()));
  for (std::size_t i = 0; i < grad.size(); ++i) {
    const auto& g = store.group(i);
    if (static_cast<std::size_t>(grad[i].size()) != g.size())
      throw ArgumentError("gradient for group '" + g.name + "' has length " + std::to_string(grad[i].size()) +
                          ", expected " + std::to_string(g.size()));
    if (!grad[i].allFinite()) throw NumericError("non-finite gradient entries in group '" + g.name + "'");
  }
}

void align_velocity(const ParamStore& store, OptimizerState& state) {
  if (state.velocity.empty()) {
    state.velocity = OptimizerState::for_store(store).velocity;
    return;
  }
  if (state.velocity.size() != store.group_count())
    throw ArgumentError("optimizer state does not match the store's group count");
  for (std::size_t i = 0; i < state.velocity.size(); ++i)
    if (static_cast<std::size_t>(state.velocity[i].size()) != store.group(i).size())
      throw ArgumentError("optimizer state for group '" + store.group(i).name + "' has the wrong length");
}

bool same_bits(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return a.size() == b.size() &&
         (a.size() == 0 ||
          std::memcmp(a.data(), b.data(), static_cast<std::size_t>(a.size()) * sizeof(double)) == 0);
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

}  // namespace

// ---------------------------------------------------------------------------
// Schedules

StepSchedule::StepSchedule(Kind kind) : kind_(kind) {
  std::visit(Overloaded{
                 [](const schedule::Constant& c) {
                   if (!(c.value > 0.0 && std::isfinite(c.value)))
                     throw ArgumentError("constant step size must be positive");
                 },
                 [](const schedule::Cosine& c) {
                   if (!(c.initial > 0.0 && std::isfinite(c.initial)))
                     throw ArgumentError("cosine initial step must be positive");
                   if (c.total_steps == 0) throw ArgumentError("cosine total_steps must be >= 1");
                 },
                 [](const schedule::StepDecay& c) {
                   if (!(c.initial > 0.0 && std::isfinite(c.initial)))
                     throw ArgumentError("step-decay initial step must be positive");
                   if (!(c.factor > 0.0 && c.factor <= 1.0))
                     throw ArgumentError("step-decay factor must lie in (0, 1]");
                   if (c.every == 0) throw ArgumentError("step-decay interval must be >= 1");
                 },
             },
             kind_);
}

double StepSchedule::at(std::uint64_t n) const {
  return std::visit(
      Overloaded{
          [](const schedule::Constant& c) { return c.value; },
          [n](const schedule::Cosine& c) {
            const std::uint64_t k = std::min(n, c.total_steps - 1);
            const double phase =
                std::numbers::pi * static_cast<double>(k) / static_cast<double>(c.total_steps);
            return c.initial * 0.5 * (1.0 + std::cos(phase));
          },
          [n](const schedule::StepDecay& c) {
            return c.initial * std::pow(c.factor, static_cast<double>(n / c.every));
          },
      },
      kind_);
}

AlphaSchedule::AlphaSchedule(Kind kind) : kind_(kind) {
  std::visit(Overloaded{
                 [](const schedule::Constant& c) {
                   if (!in_unit_interval(c.value)) throw ArgumentError("alpha must lie in [0, 1]");
                 },
                 [](const schedule::LinearRamp& r) {
                   if (!in_unit_interval(r.start) || !in_unit_interval(r.end))
                     throw ArgumentError("alpha ramp endpoints must lie in [0, 1]");
                   if (r.end < r.start) throw ArgumentError("alpha ramp must be non-decreasing");
                   if (r.ramp_steps == 0) throw ArgumentError("alpha ramp length must be >= 1");
                 },
             },
             kind_);
}

double AlphaSchedule::at(std::uint64_t n) const {
  return std::visit(Overloaded{
                        [](const schedule::Constant& c) { return c.value; },
                        [n](const schedule::LinearRamp& r) {
                          if (n >= r.ramp_steps) return r.end;
                          const double t = static_cast<double>(n) / static_cast<double>(r.ramp_steps);
                          return r.start + (r.end - r.start) * t;
                        },
                    },
                    kind_);
}

MomentumRule::MomentumRule(Kind kind) : kind_(kind) {
  std::visit(Overloaded{
                 [](const schedule::Timescale& t) {
                   if (!(t.timescale > 0.0)) throw ArgumentError("momentum timescale T must be positive");
                 },
                 [](const schedule::FixedMomentum& f) {
                   if (!(f.mu >= 0.0 && f.mu < 1.0)) throw ArgumentError("fixed momentum must lie in [0, 1)");
                 },
             },
             kind_);
}

double MomentumRule::at(double step_size) const {
  return std::visit(Overloaded{
                        [step_size](const schedule::Timescale& t) {
                          // exp rounds to 1 for vanishing steps; keep mu < 1.
                          return std::min(std::exp(-step_size / t.timescale), std::nextafter(1.0, 0.0));
                        },
                        [](const schedule::FixedMomentum& f) { return f.mu; },
                    },
                    kind_);
}

// ---------------------------------------------------------------------------
// State and stepping

OptimizerState OptimizerState::for_store(const ParamStore& store) {
  OptimizerState s;
  s.velocity.reserve(store.group_count());
  for (const auto& g : store.groups())
    s.velocity.push_back(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(g.size())));
  return s;
}

bool operator==(const OptimizerState& a, const OptimizerState& b) {
  if (a.n != b.n || !same_bits(a.accumulated_step, b.accumulated_step) || !same_bits(a.alpha, b.alpha) ||
      !same_bits(a.mu, b.mu) || !same_bits(a.step_size, b.step_size) || a.velocity.size() != b.velocity.size())
    return false;
  for (std::size_t i = 0; i < a.velocity.size(); ++i)
    if (!same_bits(a.velocity[i], b.velocity[i])) return false;
  return true;
}

void step(ParamStore& store, std::span<const Eigen::VectorXd> grad, OptimizerState& state,
          const Schedules& schedules, const RegularizerConfig& reg) {
  check_gradient(store, grad);
  align_velocity(store, state);

  const double s = schedules.step.at(state.n);
  const double alpha = schedules.alpha.at(state.n);
  const double mu = schedules.momentum.at(s);

  const double backward = alpha * state.accumulated_step + s;

  for (std::size_t i = 0; i < store.group_count(); ++i) {
    ParamGroup& g = store.group(i);
    Eigen::VectorXd& v = state.velocity[i];
    v = mu * v + (1.0 - mu) * grad[i];

    Eigen::VectorXd half = (1.0 - alpha) * g.values + alpha * g.half_step - s * v;

    if (g.regularized) {
      // Weights for step n come from |theta_n|, i.e. before the update.
      update_avg_magnitude(g, mu);
      const ThresholdField w = group_weights(g, reg);
      g.values = half;
      prox_weighted_l1(g.values, w, backward);
    } else {
      g.values = half;
    }
    g.half_step = std::move(half);
  }

  state.accumulated_step = backward;
  state.alpha = alpha;
  state.mu = mu;
  state.step_size = s;
  ++state.n;
}

void classical_momentum_step(ParamStore& store, std::span<const Eigen::VectorXd> grad,
                             OptimizerState& state, const StepSchedule& schedule, double mu) {
  check_gradient(store, grad);
  align_velocity(store, state);
  if (!(mu >= 0.0 && mu < 1.0)) throw ArgumentError("sgd momentum must lie in [0, 1)");
  const double s = schedule.at(state.n);
  for (std::size_t i = 0; i < store.group_count(); ++i) {
    ParamGroup& g = store.group(i);
    Eigen::VectorXd& v = state.velocity[i];
    v = mu * v + grad[i];
    g.values -= s * v;
    g.half_step = g.values;
    g.avg_magnitude = g.values.cwiseAbs();
  }
  state.alpha = 0.0;
  state.mu = mu;
  state.step_size = s;
  ++state.n;
}

std::vector<std::uint8_t> encode_optimizer_state(const OptimizerState& state) {
  detail::ByteWriter w;
  w.raw(kStateMagic);
  w.u64(state.n);
  w.f64(state.accumulated_step);
  w.f64(state.alpha);
  w.f64(state.mu);
  w.f64(state.step_size);
  w.u64(state.velocity.size());
  for (const auto& v : state.velocity) {
    w.u64(static_cast<std::uint64_t>(v.size()));
    w.f64s(v.data(), static_cast<std::size_t>(v.size()));
  }
  auto& bytes = w.bytes();
  const auto sum = detail::fnv1a64(std::span(bytes).subspan(kStateMagic.size()));
  w.u64(sum);
  return std::move(bytes);
}

OptimizerState decode_optimizer_state(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  r.expect_magic(kStateMagic);
  const std::size_t start = r.pos();
  OptimizerState s;
  s.n = r.u64("step counter");
  s.accumulated_step = r.f64("accumulated step");
  s.alpha = r.f64("alpha");
  s.mu = r.f64("mu");
  s.step_size = r.f64("step size");
  const std::uint64_t count = r.u64("group count");
  if (count > r.remaining() / 8) throw FormatError("invalid group count", r.pos() - 8);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint64_t len = r.u64("velocity length");
    if (len > r.remaining() / sizeof(double)) throw FormatError("truncated while reading velocity", r.pos());
    Eigen::VectorXd v(static_cast<Eigen::Index>(len));
    r.f64s(v.data(), len, "velocity");
    s.velocity.push_back(std::move(v));
  }
  r.verify_checksum(start);
  return s;
}

void save_optimizer_state(const OptimizerState& state, const std::filesystem::path& path) {
  detail::write_file(path.string(), encode_optimizer_state(state));
}

OptimizerState load_optimizer_state(const std::filesystem::path& path) {
  return decode_optimizer_state(detail::read_file(path.string()));
}

// ---------------------------------------------------------------------------
// Methods and the training loop

Method parse_method(std::string_view text) {
  if (text == "sgd") return Method::Sgd;
  if (text == "sgd-prox") return Method::SgdProx;
  if (text == "rda") return Method::Rda;
  if (text == "xrda") return Method::Xrda;
  if (text == "xrda-momentum") return Method::XrdaMomentum;
  throw ConfigError("unknown optimizer '" + std::string(text) + "'");
}

std::string_view to_string(Method m) {
  switch (m) {
    case Method::Sgd: return "sgd";
    case Method::SgdProx: return "sgd-prox";
    case Method::Rda: return "rda";
    case Method::Xrda: return "xrda";
    case Method::XrdaMomentum: return "xrda-momentum";
  }
  return "unknown";
}

Schedules OptimizerSpec::effective_schedules() const {
  Schedules s = schedules;
  switch (method) {
    case Method::SgdProx:
      s.alpha = AlphaSchedule(schedule::Constant{0.0});
      s.momentum = MomentumRule(schedule::FixedMomentum{0.0});
      break;
    case Method::Rda:
      s.alpha = AlphaSchedule(schedule::Constant{1.0});
      s.momentum = MomentumRule(schedule::FixedMomentum{0.0});
      break;
    case Method::Xrda:
      s.momentum = MomentumRule(schedule::FixedMomentum{0.0});
      break;
    case Method::Sgd:
    case Method::XrdaMomentum:
      break;
  }
  return s;
}

void apply_step(ParamStore& store, std::span<const Eigen::VectorXd> grad, OptimizerState& state,
                const OptimizerSpec& spec) {
  if (spec.method == Method::Sgd) {
    classical_momentum_step(store, grad, state, spec.schedules.step, spec.sgd_momentum);
    return;
  }
  step(store, grad, state, spec.effective_schedules(), spec.reg);
}

double nonzero_percent(const ParamStore& store) {
  const std::size_t total = store.total_size();
  if (total == 0) return 0.0;
  std::size_t nz = 0;
  for (const auto& g : store.groups())
    for (Eigen::Index j = 0; j < g.values.size(); ++j)
      if (g.values[j] != 0.0) ++nz;
  return 100.0 * static_cast<double>(nz) / static_cast<double>(total);
}

TrainingReport run_epochs(const Problem& problem, ParamStore& store, OptimizerState& state,
                          const OptimizerSpec& spec, const TrainOptions& options,
                          const EpochCallback& on_epoch) {
  spec.reg.validate();
  TrainingReport report;
  if (options.epochs == 0) return report;

  const MinibatchSampler sampler(problem.data().rows(), options.batch_size, options.seed);
  const std::uint64_t per_epoch = sampler.batches_per_epoch();
  if (state.n % per_epoch != 0)
    throw ArgumentError("optimizer state is not on an epoch boundary (n = " + std::to_string(state.n) + ")");
  const std::uint64_t first = state.n / per_epoch;
  const Schedules schedules = spec.effective_schedules();

  Gradient grad;
  for (std::uint64_t e = first; e < first + options.epochs; ++e) {
    for (const auto& batch : sampler.epoch_batches(e)) {
      const double batch_loss = problem.loss_and_grad(store, batch, grad);
      if (!std::isfinite(batch_loss)) {
        report.diverged = true;
        report.divergence_reason = "non-finite mini-batch loss in epoch " + std::to_string(e + 1);
        return report;
      }
      try {
        if (spec.method == Method::Sgd)
          classical_momentum_step(store, grad, state, spec.schedules.step, spec.sgd_momentum);
        else
          step(store, grad, state, schedules, spec.reg);
      } catch (const NumericError& err) {
        report.diverged = true;
        report.divergence_reason = err.what();
        return report;
      }
    }

    EpochRecord rec;
    rec.epoch = e + 1;
    rec.train_loss = problem.full_loss(store);
    if (!std::isfinite(rec.train_loss)) {
      report.diverged = true;
      report.divergence_reason = "non-finite training loss after epoch " + std::to_string(e + 1);
      return report;
    }
    rec.metric = problem.metric(store);
    rec.nonzero_fraction = nonzero_percent(store);
    rec.accumulated_step = state.accumulated_step;
    rec.step_size = state.step_size;
    rec.alpha = state.alpha;
    rec.mu = state.mu;
    report.rows.push_back(rec);
    report.last_good_epoch = rec.epoch;
    if (on_epoch) on_epoch(rec, store, state);
  }
  return report;
}

}  // namespace xrda
