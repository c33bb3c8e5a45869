#include "xrda/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "xrda/errors.hpp"

namespace xrda {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string format(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

template <class T>
T parse_number(std::string_view key, std::string_view text) {
  text = trim(text);
  T v{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty())
    throw ConfigError("invalid value '" + std::string(text) + "' for " + std::string(key));
  if constexpr (std::is_floating_point_v<T>)
    if (!std::isfinite(v)) throw ConfigError("non-finite value for " + std::string(key));
  return v;
}

bool parse_bool(std::string_view key, std::string_view text) {
  text = trim(text);
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError("invalid boolean '" + std::string(text) + "' for " + std::string(key));
}

std::vector<std::size_t> parse_sizes(std::string_view key, std::string_view text) {
  std::vector<std::size_t> out;
  text = trim(text);
  if (text.empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(',', start);
    out.push_back(parse_number<std::size_t>(key, text.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string format_sizes(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(v[i]);
  }
  return s;
}

struct Field {
  std::string_view key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, std::string_view, std::string_view)> set;
};

#define XRDA_FIELD_NUM(KEY, PATH, TYPE)                                                        \
  Field {                                                                                      \
    KEY, [](const ExperimentConfig& c) -> std::string {                                        \
      if constexpr (std::is_floating_point_v<TYPE>) return format(c.PATH);                     \
      else return std::to_string(c.PATH);                                                      \
    },                                                                                         \
        [](ExperimentConfig& c, std::string_view k, std::string_view v) { c.PATH = parse_number<TYPE>(k, v); } \
  }
#define XRDA_FIELD_STR(KEY, PATH)                                                   \
  Field {                                                                           \
    KEY, [](const ExperimentConfig& c) { return c.PATH; },                          \
        [](ExperimentConfig& c, std::string_view, std::string_view v) { c.PATH = std::string(trim(v)); } \
  }
#define XRDA_FIELD_BOOL(KEY, PATH)                                                                    \
  Field {                                                                                             \
    KEY, [](const ExperimentConfig& c) { return std::string(c.PATH ? "true" : "false"); },           \
        [](ExperimentConfig& c, std::string_view k, std::string_view v) { c.PATH = parse_bool(k, v); } \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      XRDA_FIELD_STR("problem.type", problem.type),
      XRDA_FIELD_NUM("problem.n", problem.n, std::size_t),
      XRDA_FIELD_NUM("problem.m", problem.m, std::size_t),
      XRDA_FIELD_NUM("problem.k", problem.k, std::size_t),
      XRDA_FIELD_NUM("problem.sigma", problem.sigma, double),
      XRDA_FIELD_NUM("problem.instance_seed", problem.instance_seed, std::uint64_t),
      XRDA_FIELD_STR("problem.dataset", problem.dataset),
      XRDA_FIELD_STR("problem.test_dataset", problem.test_dataset),
      XRDA_FIELD_NUM("problem.rows", problem.rows, std::size_t),
      XRDA_FIELD_NUM("problem.noise", problem.noise, double),
      XRDA_FIELD_NUM("problem.data_seed", problem.data_seed, std::uint64_t),
      Field{"problem.hidden", [](const ExperimentConfig& c) { return format_sizes(c.problem.hidden); },
            [](ExperimentConfig& c, std::string_view k, std::string_view v) { c.problem.hidden = parse_sizes(k, v); }},
      XRDA_FIELD_STR("problem.activation", problem.activation),
      XRDA_FIELD_NUM("problem.l2", problem.l2, double),

      XRDA_FIELD_STR("optimizer.method", optimizer.method),
      XRDA_FIELD_STR("optimizer.step", optimizer.step),
      XRDA_FIELD_NUM("optimizer.step_size", optimizer.step_size, double),
      XRDA_FIELD_NUM("optimizer.step_factor", optimizer.step_factor, double),
      XRDA_FIELD_NUM("optimizer.step_every", optimizer.step_every, std::uint64_t),
      XRDA_FIELD_NUM("optimizer.total_steps", optimizer.total_steps, std::uint64_t),
      XRDA_FIELD_STR("optimizer.alpha", optimizer.alpha),
      XRDA_FIELD_NUM("optimizer.alpha_value", optimizer.alpha_value, double),
      XRDA_FIELD_NUM("optimizer.alpha_start", optimizer.alpha_start, double),
      XRDA_FIELD_NUM("optimizer.alpha_end", optimizer.alpha_end, double),
      XRDA_FIELD_NUM("optimizer.alpha_ramp_steps", optimizer.alpha_ramp_steps, std::uint64_t),
      XRDA_FIELD_NUM("optimizer.timescale", optimizer.timescale, double),
      XRDA_FIELD_NUM("optimizer.sgd_momentum", optimizer.sgd_momentum, double),

      XRDA_FIELD_NUM("regularizer.lambda", regularizer.lambda, double),
      XRDA_FIELD_NUM("regularizer.beta", regularizer.beta, double),
      XRDA_FIELD_STR("regularizer.weighting", regularizer.weighting),
      XRDA_FIELD_BOOL("regularizer.weight", regularizer.weight),
      XRDA_FIELD_BOOL("regularizer.bias", regularizer.bias),
      XRDA_FIELD_BOOL("regularizer.norm_scale", regularizer.norm_scale),
      XRDA_FIELD_BOOL("regularizer.norm_shift", regularizer.norm_shift),

      XRDA_FIELD_NUM("run.epochs", run.epochs, std::uint64_t),
      XRDA_FIELD_NUM("run.batch_size", run.batch_size, std::size_t),
      XRDA_FIELD_NUM("run.seed", run.seed, std::uint64_t),
      XRDA_FIELD_NUM("run.checkpoint_every", run.checkpoint_every, std::uint64_t),
      XRDA_FIELD_STR("run.checkpoint_path", run.checkpoint_path),
      XRDA_FIELD_STR("run.resume_from", run.resume_from),
      XRDA_FIELD_STR("run.export_instance", run.export_instance),
      XRDA_FIELD_NUM("run.oracle_outer", run.oracle_outer, std::size_t),
      XRDA_FIELD_NUM("run.oracle_iters", run.oracle_iters, std::size_t),
      XRDA_FIELD_NUM("run.oracle_tol", run.oracle_tol, double),
  };
  return table;
}

#undef XRDA_FIELD_NUM
#undef XRDA_FIELD_STR
#undef XRDA_FIELD_BOOL

}  // namespace

void set_config_value(ExperimentConfig& cfg, std::string_view dotted_key, std::string_view value) {
  dotted_key = trim(dotted_key);
  for (const auto& f : fields()) {
    if (f.key == dotted_key) {
      f.set(cfg, dotted_key, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + std::string(dotted_key) + "'");
}

void apply_override(ExperimentConfig& cfg, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos)
    throw ConfigError("override '" + std::string(assignment) + "' is not of the form key=value");
  set_config_value(cfg, assignment.substr(0, eq), assignment.substr(eq + 1));
}

ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig cfg;
  std::string section;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = text.find('\n', start);
    std::string_view line = text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start);
    start = end == std::string_view::npos ? text.size() + 1 : end + 1;
    ++line_no;

    if (const auto hash = line.find_first_of("#;"); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(line_no) + ": malformed section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      if (section != "problem" && section != "optimizer" && section != "regularizer" && section != "run")
        throw ConfigError("line " + std::to_string(line_no) + ": unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    const auto key = trim(line.substr(0, eq));
    const auto value = line.substr(eq + 1);
    const std::string dotted =
        (section.empty() || key.find('.') != std::string_view::npos) ? std::string(key) : section + "." + std::string(key);
    set_config_value(cfg, dotted, value);
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string to_text(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) {
    out += f.key;
    out += " = ";
    out += f.get(cfg);
    out += '\n';
  }
  return out;
}

bool kind_regularized(const RegularizerSection& reg, GroupKind kind) {
  switch (kind) {
    case GroupKind::Weight: return reg.weight;
    case GroupKind::Bias: return reg.bias;
    case GroupKind::NormScale: return reg.norm_scale;
    case GroupKind::NormShift: return reg.norm_shift;
  }
  return false;
}

void validate(const ExperimentConfig& cfg) {
  const auto& p = cfg.problem;
  if (p.type != "cs-recovery" && p.type != "lasso" && p.type != "logistic" && p.type != "mlp")
    throw ConfigError("problem.type must be one of cs-recovery, lasso, logistic, mlp");
  if (p.type == "cs-recovery" && !(p.k < p.m && p.m < p.n))
    throw ConfigError("problem.k, problem.m, problem.n must satisfy k < m < n");
  if (p.sigma < 0.0) throw ConfigError("problem.sigma must be >= 0");
  if (p.type != "cs-recovery" && p.dataset.empty()) throw ConfigError("problem.dataset is required for " + p.type);
  if (p.type == "mlp") {
    if (p.hidden.empty()) throw ConfigError("problem.hidden needs at least one layer");
    parse_activation(p.activation);
  }
  if (p.l2 < 0.0) throw ConfigError("problem.l2 must be >= 0");

  const auto& o = cfg.optimizer;
  parse_method(o.method);
  if (o.step != "constant" && o.step != "cosine" && o.step != "step-decay")
    throw ConfigError("optimizer.step must be constant, cosine or step-decay");
  if (!(o.step_size > 0.0)) throw ConfigError("optimizer.step_size must be > 0");
  if (o.alpha != "constant" && o.alpha != "ramp") throw ConfigError("optimizer.alpha must be constant or ramp");
  if (!(o.timescale > 0.0)) throw ConfigError("optimizer.timescale must be > 0");
  if (!(o.sgd_momentum >= 0.0 && o.sgd_momentum < 1.0))
    throw ConfigError("optimizer.sgd_momentum must lie in [0, 1)");

  const auto& r = cfg.regularizer;
  if (!(r.lambda >= 0.0)) throw ConfigError("regularizer.lambda must be >= 0");
  if (!(r.beta > 0.0)) throw ConfigError("regularizer.beta must be > 0");
  if (r.weighting != "adaptive" && r.weighting != "uniform")
    throw ConfigError("regularizer.weighting must be adaptive or uniform");

  if (cfg.run.checkpoint_every > 0 && cfg.run.checkpoint_path.empty())
    throw ConfigError("run.checkpoint_path is required when run.checkpoint_every > 0");
  if (cfg.run.oracle_outer == 0) throw ConfigError("run.oracle_outer must be >= 1");

  // Surface schedule errors as config errors.
  try {
    make_optimizer_spec(cfg, 1);
  } catch (const ArgumentError& e) {
    throw ConfigError(std::string("optimizer: ") + e.what());
  }
}

OptimizerSpec make_optimizer_spec(const ExperimentConfig& cfg, std::uint64_t total_steps) {
  const auto& o = cfg.optimizer;
  const std::uint64_t steps = o.total_steps > 0 ? o.total_steps : std::max<std::uint64_t>(total_steps, 1);
  OptimizerSpec spec;
  spec.method = parse_method(o.method);
  if (o.step == "constant")
    spec.schedules.step = StepSchedule(schedule::Constant{o.step_size});
  else if (o.step == "cosine")
    spec.schedules.step = StepSchedule(schedule::Cosine{o.step_size, steps});
  else if (o.step == "step-decay")
    spec.schedules.step = StepSchedule(schedule::StepDecay{o.step_size, o.step_factor, o.step_every});
  else
    throw ConfigError("optimizer.step must be constant, cosine or step-decay");

  if (o.alpha == "constant")
    spec.schedules.alpha = AlphaSchedule(schedule::Constant{o.alpha_value});
  else if (o.alpha == "ramp")
    spec.schedules.alpha = AlphaSchedule(schedule::LinearRamp{
        o.alpha_start, o.alpha_end, o.alpha_ramp_steps > 0 ? o.alpha_ramp_steps : steps});
  else
    throw ConfigError("optimizer.alpha must be constant or ramp");

  spec.schedules.momentum = MomentumRule(schedule::Timescale{o.timescale});
  spec.sgd_momentum = o.sgd_momentum;
  spec.reg.lambda = cfg.regularizer.lambda;
  spec.reg.beta = cfg.regularizer.beta;
  spec.reg.weighting = cfg.regularizer.weighting == "uniform" ? Weighting::Uniform : Weighting::Adaptive;
  return spec;
}

}  // namespace xrda
