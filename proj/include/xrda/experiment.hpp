#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "xrda/bench.hpp"
#include "xrda/config.hpp"
#include "xrda/optimizer.hpp"

namespace xrda {

// Process exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitDiverged = 3;

struct ComparisonRow {
  std::string solver;
  SparsityReport sparsity;
  double objective = 0.0;
};

struct ExperimentResult {
  ExperimentConfig config;
  std::string metric_name;
  TrainingReport training;
  SparsityReport final_sparsity;
  std::optional<double> test_metric;
  std::vector<ComparisonRow> comparisons;
  double wall_clock_s = 0.0;
  // Final parameters, kept for callers that want to inspect them.
  ParamStore store;

  int exit_code() const { return training.diverged ? kExitDiverged : kExitOk; }
};

// Report layout, one section per block:
//   [config]      to_text(config)
//   [epochs]      CSV: epoch,train_loss,metric,nonzero_fraction,S,step,alpha,mu
//   [summary]     key = value
//   [comparison]  CSV, cs-recovery only
//   [timing]      wall_clock_s = ...
// Rows are flushed as epochs finish, so an interrupted run leaves a
// readable prefix.

/// Trains on a compressed-sensing instance and compares against the lasso
/// and reweighted oracles on the same instance. `report` may be null.
ExperimentResult cmd_recover(const ExperimentConfig& cfg, std::ostream* report);

/// Trains a lasso, logistic or mlp problem from a dataset.
ExperimentResult cmd_train(const ExperimentConfig& cfg, std::ostream* report);

struct AblationResult {
  std::string axis;
  std::vector<std::string> values;
  std::vector<ExperimentResult> runs;
};

/// One run per value of `axis` (optimizer | alpha | lambda | beta), all with
/// the same seed and problem. Writes the summary table to `table`; each
/// run's full report goes to `reports[i]` when provided.
AblationResult cmd_ablate(const ExperimentConfig& cfg, std::string_view axis,
                          const std::vector<std::string>& values, std::ostream* table,
                          const std::vector<std::ostream*>& reports = {});

void write_ablation_table(const AblationResult& result, std::ostream& out);

/// Human-readable dump of a parameter checkpoint or optimizer state file.
void inspect_checkpoint(const std::string& path, std::ostream& out);

/// The [config] block of a report, parsed back into a config.
ExperimentConfig config_from_report(std::string_view report);

/// Report text without the trailing [timing] block.
std::string report_body(std::string_view report);

}  // namespace xrda
