#include "xrda/experiment.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <memory>
#include <ostream>
#include <sstream>

#include "xrda/detail/byte_io.hpp"
#include "xrda/errors.hpp"

namespace xrda {

namespace {

std::string num(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string opt_num(const std::optional<double>& v) { return v ? num(*v) : std::string(); }

class ReportWriter {
public:
  explicit ReportWriter(std::ostream* out) : out_(out) {}

  void begin(const ExperimentConfig& cfg) {
    if (!out_) return;
    *out_ << "[config]\n" << to_text(cfg) << "[epochs]\n"
          << "epoch,train_loss,metric,nonzero_fraction,S,step,alpha,mu\n";
    out_->flush();
  }

  void row(const EpochRecord& r) {
    if (!out_) return;
    *out_ << r.epoch << ',' << num(r.train_loss) << ',' << num(r.metric) << ',' << num(r.nonzero_fraction) << ','
          << num(r.accumulated_step) << ',' << num(r.step_size) << ',' << num(r.alpha) << ',' << num(r.mu) << '\n';
    out_->flush();
  }

  void finish(const ExperimentResult& res) {
    if (!out_) return;
    const auto& t = res.training;
    const auto& s = res.final_sparsity;
    *out_ << "[summary]\n"
          << "status = " << (t.diverged ? "diverged" : "ok") << '\n';
    if (t.diverged) *out_ << "divergence = " << t.divergence_reason << '\n';
    *out_ << "last_good_epoch = " << t.last_good_epoch << '\n'
          << "epochs_completed = " << t.rows.size() << '\n'
          << "metric_name = " << res.metric_name << '\n'
          << "final_metric = " << (t.rows.empty() ? std::string() : num(t.rows.back().metric)) << '\n';
    if (res.test_metric) *out_ << "test_metric = " << num(*res.test_metric) << '\n';
    *out_ << "total = " << s.total << '\n'
          << "nonzero_count = " << s.nonzero_count << '\n'
          << "nonzero_fraction = " << num(s.nonzero_fraction) << '\n'
          << "compression_ratio = " << num(s.compression_ratio) << '\n';
    if (s.support_precision) {
      *out_ << "support_precision = " << num(*s.support_precision) << '\n'
            << "support_recall = " << num(*s.support_recall) << '\n'
            << "rel_l2_error = " << num(*s.rel_l2_error) << '\n';
    }
    if (!res.comparisons.empty()) {
      *out_ << "[comparison]\n"
            << "solver,nonzero_fraction,support_precision,support_recall,rel_l2_error,objective\n";
      for (const auto& c : res.comparisons)
        *out_ << c.solver << ',' << num(c.sparsity.nonzero_fraction) << ',' << opt_num(c.sparsity.support_precision)
              << ',' << opt_num(c.sparsity.support_recall) << ',' << opt_num(c.sparsity.rel_l2_error) << ','
              << num(c.objective) << '\n';
    }
    *out_ << "[timing]\n"
          << "wall_clock_s = " << num(res.wall_clock_s) << '\n';
    out_->flush();
  }

private:
  std::ostream* out_;
};

void apply_kind_flags(ParamStore& store, const RegularizerSection& reg) {
  for (auto& g : store.groups()) g.regularized = kind_regularized(reg, g.kind);
}

void check_layout(const Problem& problem, const ParamStore& store) {
  const auto spec = problem.param_spec();
  bool ok = spec.size() == store.group_count();
  for (std::size_t i = 0; ok && i < spec.size(); ++i)
    ok = spec[i].name == store.group(i).name && spec[i].shape == store.group(i).shape;
  if (!ok) throw ConfigError("run.resume_from: checkpoint layout does not match the problem");
}

// Shared training driver: init or resume, run, checkpoint, report rows.
TrainingReport train_problem(const Problem& problem, const ExperimentConfig& cfg, ParamStore& store,
                             ReportWriter& writer) {
  OptimizerState state;
  if (!cfg.run.resume_from.empty()) {
    store = load_checkpoint(cfg.run.resume_from);
    check_layout(problem, store);
    state = load_optimizer_state(cfg.run.resume_from + ".state");
  } else {
    store = problem.make_store(cfg.run.seed);
    state = OptimizerState::for_store(store);
  }
  apply_kind_flags(store, cfg.regularizer);

  const std::size_t rows = problem.data().rows();
  const std::size_t batch = cfg.run.batch_size == 0 ? rows : cfg.run.batch_size;
  if (batch > rows)
    throw ConfigError("run.batch_size " + std::to_string(batch) + " exceeds the " + std::to_string(rows) +
                      " available rows");
  const std::uint64_t per_epoch = (rows + batch - 1) / batch;
  const OptimizerSpec spec = make_optimizer_spec(cfg, per_epoch * (state.n / per_epoch + cfg.run.epochs));

  TrainOptions options;
  options.epochs = cfg.run.epochs;
  options.batch_size = batch;
  options.seed = cfg.run.seed;

  auto on_epoch = [&](const EpochRecord& rec, const ParamStore& s, const OptimizerState& st) {
    writer.row(rec);
    if (cfg.run.checkpoint_every > 0 && rec.epoch % cfg.run.checkpoint_every == 0) {
      save_checkpoint(s, cfg.run.checkpoint_path);
      save_optimizer_state(st, cfg.run.checkpoint_path + ".state");
    }
  };
  return run_epochs(problem, store, state, spec, options, on_epoch);
}

Dataset load_dataset(const ProblemSection& p, bool test) {
  if (p.dataset == "two-moons") {
    if (test && !p.test_dataset.empty()) return read_dataset(p.test_dataset);
    return make_two_moons(p.rows, p.noise, test ? p.data_seed + 1 : p.data_seed);
  }
  return read_dataset(test ? p.test_dataset : p.dataset);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

ExperimentResult cmd_recover(const ExperimentConfig& cfg, std::ostream* report) {
  const auto t0 = std::chrono::steady_clock::now();
  validate(cfg);
  if (cfg.problem.type != "cs-recovery") throw ConfigError("recover requires problem.type = cs-recovery");

  const auto& p = cfg.problem;
  const CSInstance inst = generate_cs_instance(p.n, p.m, p.k, p.sigma, p.instance_seed);
  if (!cfg.run.export_instance.empty()) write_dataset(to_dataset(inst), cfg.run.export_instance);

  const LeastSquaresProblem problem(inst.a, inst.y, inst.x_true);
  ReportWriter writer(report);
  writer.begin(cfg);

  ExperimentResult res;
  res.config = cfg;
  res.metric_name = problem.metric_name();
  res.training = train_problem(problem, cfg, res.store, writer);

  const auto& x = res.store.group(0).values;
  const std::span<const double> truth(inst.x_true.data(), inst.n);
  res.final_sparsity = measure_sparsity(std::span<const double>(x.data(), inst.n), truth);

  // The oracles use the unnormalized data term; rescale lambda to match.
  const double lambda = cfg.regularizer.lambda * static_cast<double>(inst.m);
  res.comparisons.push_back({std::string(to_string(parse_method(cfg.optimizer.method))), res.final_sparsity,
                             lasso_objective(inst.a, inst.y, x, lambda)});
  const IstaResult ista = ista_oracle(inst, lambda, cfg.run.oracle_iters, cfg.run.oracle_tol);
  res.comparisons.push_back({"ista", measure_sparsity(std::span<const double>(ista.x.data(), inst.n), truth),
                             ista.objective});
  RegularizerConfig rcfg{lambda, cfg.regularizer.beta, Weighting::Adaptive};
  const ReweightedResult rw = reweighted_oracle(inst, rcfg, cfg.run.oracle_outer, cfg.run.oracle_iters, cfg.run.oracle_tol);
  res.comparisons.push_back({"reweighted", measure_sparsity(std::span<const double>(rw.x.data(), inst.n), truth),
                             rw.objective_after.back()});

  res.wall_clock_s = seconds_since(t0);
  writer.finish(res);
  return res;
}

ExperimentResult cmd_train(const ExperimentConfig& cfg, std::ostream* report) {
  const auto t0 = std::chrono::steady_clock::now();
  validate(cfg);
  const auto& p = cfg.problem;
  if (p.type == "cs-recovery") throw ConfigError("train requires problem.type = lasso, logistic or mlp");

  Dataset train_data = load_dataset(p, false);
  std::optional<Dataset> test_data;
  if (!p.test_dataset.empty() || p.dataset == "two-moons") test_data = load_dataset(p, true);

  std::unique_ptr<Problem> problem;
  if (p.type == "lasso") {
    if (train_data.num_classes != 0) throw DataError("lasso dataset must declare 0 classes");
    problem = std::make_unique<LeastSquaresProblem>(train_data.features, train_data.targets);
  } else if (p.type == "logistic") {
    problem = std::make_unique<LogisticProblem>(train_data, p.l2);
  } else {
    std::vector<std::size_t> sizes{train_data.cols()};
    sizes.insert(sizes.end(), p.hidden.begin(), p.hidden.end());
    sizes.push_back(train_data.num_classes);
    problem = std::make_unique<MlpProblem>(sizes, parse_activation(p.activation), train_data);
  }

  ReportWriter writer(report);
  writer.begin(cfg);
  ExperimentResult res;
  res.config = cfg;
  res.metric_name = problem->metric_name();
  res.training = train_problem(*problem, cfg, res.store, writer);
  res.final_sparsity = measure_sparsity(res.store);

  if (test_data) {
    if (const auto* mlp = dynamic_cast<const MlpProblem*>(problem.get()))
      res.test_metric = mlp->accuracy(res.store, *test_data);
    else if (const auto* lr = dynamic_cast<const LogisticProblem*>(problem.get()))
      res.test_metric = lr->accuracy(res.store, *test_data);
  }

  res.wall_clock_s = seconds_since(t0);
  writer.finish(res);
  return res;
}

AblationResult cmd_ablate(const ExperimentConfig& cfg, std::string_view axis,
                          const std::vector<std::string>& values, std::ostream* table,
                          const std::vector<std::ostream*>& reports) {
  std::string key;
  if (axis == "optimizer")
    key = "optimizer.method";
  else if (axis == "alpha")
    key = "optimizer.alpha_value";
  else if (axis == "lambda")
    key = "regularizer.lambda";
  else if (axis == "beta")
    key = "regularizer.beta";
  else
    throw ConfigError("ablation axis must be optimizer, alpha, lambda or beta");
  if (values.empty()) throw ConfigError("ablation needs at least one value");

  AblationResult out;
  out.axis = std::string(axis);
  for (std::size_t i = 0; i < values.size(); ++i) {
    ExperimentConfig run_cfg = cfg;
    if (axis == "alpha") run_cfg.optimizer.alpha = "constant";
    set_config_value(run_cfg, key, values[i]);
    std::ostream* rep = i < reports.size() ? reports[i] : nullptr;
    out.values.push_back(values[i]);
    out.runs.push_back(run_cfg.problem.type == "cs-recovery" ? cmd_recover(run_cfg, rep) : cmd_train(run_cfg, rep));
  }
  if (table) write_ablation_table(out, *table);
  return out;
}

void write_ablation_table(const AblationResult& result, std::ostream& out) {
  out << "axis,value,status,train_loss,metric_name,metric,test_metric,nonzero_fraction,compression_ratio,"
         "weight_cap,support_precision,support_recall,rel_l2_error\n";
  for (std::size_t i = 0; i < result.runs.size(); ++i) {
    const auto& r = result.runs[i];
    const auto& rows = r.training.rows;
    const auto& reg = r.config.regularizer;
    const double cap = reg.lambda * ((reg.beta + 1.0) / reg.beta);
    out << result.axis << ',' << result.values[i] << ',' << (r.training.diverged ? "diverged" : "ok") << ','
        << (rows.empty() ? std::string() : num(rows.back().train_loss)) << ',' << r.metric_name << ','
        << (rows.empty() ? std::string() : num(rows.back().metric)) << ',' << opt_num(r.test_metric) << ','
        << num(r.final_sparsity.nonzero_fraction) << ',' << num(r.final_sparsity.compression_ratio) << ','
        << num(cap) << ',' << opt_num(r.final_sparsity.support_precision) << ','
        << opt_num(r.final_sparsity.support_recall) << ',' << opt_num(r.final_sparsity.rel_l2_error) << '\n';
  }
  out.flush();
}

void inspect_checkpoint(const std::string& path, std::ostream& out) {
  const auto bytes = detail::read_file(path);
  if (bytes.size() >= 6 && std::string_view(reinterpret_cast<const char*>(bytes.data()), 6) == "XRDAO1") {
    const OptimizerState s = decode_optimizer_state(bytes);
    out << "optimizer state: n = " << s.n << ", S = " << num(s.accumulated_step) << ", alpha = " << num(s.alpha)
        << ", mu = " << num(s.mu) << ", step = " << num(s.step_size) << ", groups = " << s.velocity.size() << '\n';
    return;
  }
  const ParamStore store = decode_checkpoint(bytes);
  const SparsityReport total = measure_sparsity(store);
  out << "groups = " << store.group_count() << ", parameters = " << total.total
      << ", nonzero = " << total.nonzero_count << " (" << num(total.nonzero_fraction) << "%)"
      << ", compression = " << num(total.compression_ratio) << "x\n";
  out << "name,kind,shape,regularized,size,nonzero,max_abs,max_avg_magnitude\n";
  for (const auto& g : store.groups()) {
    std::string shape;
    for (std::size_t i = 0; i < g.shape.size(); ++i) shape += (i ? "x" : "") + std::to_string(g.shape[i]);
    const auto sr = measure_sparsity(std::span<const double>(g.values.data(), g.size()));
    out << g.name << ',' << to_string(g.kind) << ',' << shape << ',' << (g.regularized ? "true" : "false") << ','
        << g.size() << ',' << sr.nonzero_count << ',' << num(g.values.cwiseAbs().maxCoeff()) << ','
        << num(group_max_magnitude(g)) << '\n';
  }
}

ExperimentConfig config_from_report(std::string_view report) {
  const auto begin = report.find("[config]\n");
  if (begin == std::string_view::npos) throw ConfigError("report has no [config] block");
  const auto body_start = begin + 9;
  const auto end = report.find("\n[", body_start - 1);
  return parse_config(report.substr(body_start, end == std::string_view::npos ? end : end + 1 - body_start));
}

std::string report_body(std::string_view report) {
  const auto pos = report.find("[timing]\n");
  return std::string(report.substr(0, pos));
}

}  // namespace xrda
