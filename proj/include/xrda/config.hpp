#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "xrda/models.hpp"
#include "xrda/optimizer.hpp"
#include "xrda/regularizer.hpp"

namespace xrda {

struct ProblemSection {
  std::string type = "cs-recovery";  // cs-recovery | lasso | logistic | mlp
  // cs-recovery instance
  std::size_t n = 256;
  std::size_t m = 100;
  std::size_t k = 10;
  double sigma = 0.0;
  std::uint64_t instance_seed = 7;
  // lasso / logistic / mlp data. "two-moons" generates the dataset from
  // rows, noise and data_seed; the test split uses data_seed + 1.
  std::string dataset;
  std::string test_dataset;
  std::size_t rows = 400;
  double noise = 0.15;
  std::uint64_t data_seed = 11;
  // mlp
  std::vector<std::size_t> hidden = {16, 16};
  std::string activation = "relu";
  // logistic
  double l2 = 0.0;

  friend bool operator==(const ProblemSection&, const ProblemSection&) = default;
};

struct OptimizerSection {
  std::string method = "xrda-momentum";
  std::string step = "cosine";  // constant | cosine | step-decay
  double step_size = 1.0;
  double step_factor = 0.5;
  std::uint64_t step_every = 1000;
  std::uint64_t total_steps = 0;  // 0: epochs x batches per epoch
  std::string alpha = "constant";  // constant | ramp
  double alpha_value = 0.0;
  double alpha_start = 0.0;
  double alpha_end = 1.0;
  std::uint64_t alpha_ramp_steps = 0;  // 0: total steps
  double timescale = 9.5;
  double sgd_momentum = 0.9;

  friend bool operator==(const OptimizerSection&, const OptimizerSection&) = default;
};

struct RegularizerSection {
  double lambda = 1e-6;
  double beta = 2e-3;
  std::string weighting = "adaptive";  // adaptive | uniform
  bool weight = true;
  bool bias = false;
  bool norm_scale = false;
  bool norm_shift = false;

  friend bool operator==(const RegularizerSection&, const RegularizerSection&) = default;
};

struct RunSection {
  std::uint64_t epochs = 200;
  std::size_t batch_size = 0;  // 0: full batch
  std::uint64_t seed = 0;
  std::uint64_t checkpoint_every = 0;
  std::string checkpoint_path;
  std::string resume_from;
  std::string export_instance;
  std::size_t oracle_outer = 4;
  std::size_t oracle_iters = 200000;
  double oracle_tol = 1e-10;

  friend bool operator==(const RunSection&, const RunSection&) = default;
};

struct ExperimentConfig {
  ProblemSection problem;
  OptimizerSection optimizer;
  RegularizerSection regularizer;
  RunSection run;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

/// Sets `section.key` from its text form. Throws ConfigError naming the key
/// when it is unknown or the value does not parse.
void set_config_value(ExperimentConfig& cfg, std::string_view dotted_key, std::string_view value);

/// Applies a `key=value` override.
void apply_override(ExperimentConfig& cfg, std::string_view assignment);

/// Parses the flat section format:
///   [problem]
///   type = cs-recovery
/// Keys may also be written fully qualified (`problem.type = ...`) outside
/// any section. `#` and `;` start comments. Unknown keys are errors.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::string& path);

/// Every field, one `section.key = value` line each, in a stable order.
/// parse_config(to_text(c)) == c.
std::string to_text(const ExperimentConfig& cfg);

/// Semantic checks that need more than one field. Throws ConfigError.
void validate(const ExperimentConfig& cfg);

/// Builds the optimizer from the config. `total_steps` resolves the
/// automatic schedule lengths.
OptimizerSpec make_optimizer_spec(const ExperimentConfig& cfg, std::uint64_t total_steps);

/// Regularized flag for a group kind under this config.
bool kind_regularized(const RegularizerSection& reg, GroupKind kind);

}  // namespace xrda
