// Command-line driver: recover | train | ablate | inspect-checkpoint.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "xrda/errors.hpp"
#include "xrda/experiment.hpp"

namespace {

struct CommonFlags {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_path;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "Experiment config file");
  cmd->add_option("--set", flags.overrides, "Override a config value, e.g. --set regularizer.lambda=1e-4");
  cmd->add_option("--out", flags.out_path, "Report output path (stdout when omitted)");
  cmd->add_option("--seed", flags.seed, "Run seed (overrides run.seed)");
}

xrda::ExperimentConfig build_config(const CommonFlags& flags) {
  xrda::ExperimentConfig cfg = flags.config_path.empty() ? xrda::ExperimentConfig{} : xrda::load_config(flags.config_path);
  for (const auto& o : flags.overrides) xrda::apply_override(cfg, o);
  if (flags.seed) cfg.run.seed = *flags.seed;
  return cfg;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto pos = text.find(',', start);
    out.push_back(text.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

class Output {
public:
  explicit Output(const std::string& path) {
    if (path.empty()) return;
    file_ = std::make_unique<std::ofstream>(path, std::ios::trunc);
    if (!*file_) throw xrda::ConfigError("cannot open output '" + path + "'");
  }
  std::ostream& stream() { return file_ ? *file_ : std::cout; }

private:
  std::unique_ptr<std::ofstream> file_;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse training with adaptively weighted l1 and extended RDA"};
  app.require_subcommand(1);

  CommonFlags recover_flags, train_flags, ablate_flags;
  auto* recover = app.add_subcommand("recover", "Compressed-sensing recovery run with oracle comparisons");
  add_common(recover, recover_flags);
  auto* train = app.add_subcommand("train", "Train a lasso, logistic or mlp problem from a dataset");
  add_common(train, train_flags);
  auto* ablate = app.add_subcommand("ablate", "Sweep one axis and tabulate the runs");
  add_common(ablate, ablate_flags);
  std::string axis, values;
  ablate->add_option("--axis", axis, "optimizer | alpha | lambda | beta")->required();
  ablate->add_option("--values", values, "Comma-separated axis values")->required();
  std::string report_prefix;
  ablate->add_option("--reports", report_prefix, "Write each run's report to <prefix><index>.txt");
  auto* inspect = app.add_subcommand("inspect-checkpoint", "Describe a checkpoint file");
  std::string checkpoint;
  inspect->add_option("path", checkpoint, "Checkpoint file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : xrda::kExitConfigError;
  }

  try {
    if (recover->parsed()) {
      const auto cfg = build_config(recover_flags);
      Output out(recover_flags.out_path);
      return xrda::cmd_recover(cfg, &out.stream()).exit_code();
    }
    if (train->parsed()) {
      const auto cfg = build_config(train_flags);
      Output out(train_flags.out_path);
      return xrda::cmd_train(cfg, &out.stream()).exit_code();
    }
    if (ablate->parsed()) {
      const auto cfg = build_config(ablate_flags);
      const auto list = split_list(values);
      std::vector<std::unique_ptr<std::ofstream>> files;
      std::vector<std::ostream*> reports;
      if (!report_prefix.empty()) {
        for (std::size_t i = 0; i < list.size(); ++i) {
          files.push_back(std::make_unique<std::ofstream>(report_prefix + std::to_string(i) + ".txt"));
          reports.push_back(files.back().get());
        }
      }
      Output out(ablate_flags.out_path);
      const auto result = xrda::cmd_ablate(cfg, axis, list, &out.stream(), reports);
      for (const auto& r : result.runs)
        if (r.exit_code() != xrda::kExitOk) return r.exit_code();
      return xrda::kExitOk;
    }
    if (inspect->parsed()) {
      xrda::inspect_checkpoint(checkpoint, std::cout);
      return xrda::kExitOk;
    }
  } catch (const xrda::NumericError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return xrda::kExitDiverged;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return xrda::kExitConfigError;
  }
  return xrda::kExitOk;
}
