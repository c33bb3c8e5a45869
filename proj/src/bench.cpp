#include "xrda/bench.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "xrda/errors.hpp"

namespace xrda {

CSInstance generate_cs_instance(std::size_t n, std::size_t m, std::size_t k, double sigma,
                                std::uint64_t seed) {
  if (!(k < m && m < n))
    throw ArgumentError("compressed sensing instance needs k < m < n (got k=" + std::to_string(k) +
                        ", m=" + std::to_string(m) + ", n=" + std::to_string(n) + ")");
  if (!(sigma >= 0.0)) throw ArgumentError("noise sigma must be >= 0");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> magnitude(0.5, 1.5);
  std::bernoulli_distribution negative(0.5);

  CSInstance inst;
  inst.n = n;
  inst.m = m;
  inst.k = k;
  inst.sigma = sigma;
  inst.seed = seed;

  const double scale = 1.0 / std::sqrt(static_cast<double>(m));
  inst.a.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < inst.a.rows(); ++i)
    for (Eigen::Index j = 0; j < inst.a.cols(); ++j) inst.a(i, j) = scale * normal(rng);

  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  inst.support.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(inst.support.begin(), inst.support.end());

  inst.x_true = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  for (std::size_t j : inst.support) {
    const double mag = magnitude(rng);
    inst.x_true[static_cast<Eigen::Index>(j)] = negative(rng) ? -mag : mag;
  }

  inst.y = inst.a * inst.x_true;
  if (sigma > 0.0)
    for (Eigen::Index i = 0; i < inst.y.size(); ++i) inst.y[i] += sigma * normal(rng);
  return inst;
}

Dataset to_dataset(const CSInstance& instance) { return Dataset{instance.a, instance.y, 0}; }

double lipschitz_constant(const Eigen::MatrixXd& a) {
  Eigen::VectorXd v = Eigen::VectorXd::Ones(a.cols());
  v.normalize();
  double estimate = 0.0;
  for (int it = 0; it < 10000; ++it) {
    Eigen::VectorXd w = a.transpose() * (a * v);
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;
    v = w / norm;
    if (std::abs(norm - estimate) <= 1e-14 * norm) {
      estimate = norm;
      break;
    }
    estimate = norm;
  }
  return estimate;
}

double lasso_objective(const Eigen::MatrixXd& a, const Eigen::VectorXd& y, const Eigen::VectorXd& x,
                       double lambda) {
  return 0.5 * (a * x - y).squaredNorm() + lambda * x.lpNorm<1>();
}

double weighted_lasso_objective(const Eigen::MatrixXd& a, const Eigen::VectorXd& y,
                                const Eigen::VectorXd& x, const Eigen::VectorXd& weights) {
  return 0.5 * (a * x - y).squaredNorm() + weights.dot(x.cwiseAbs());
}

IstaResult ista_weighted(const Eigen::MatrixXd& a, const Eigen::VectorXd& y, const Eigen::VectorXd& weights,
                         const Eigen::VectorXd& x0, std::size_t max_iters, double tol) {
  if (weights.size() != a.cols() || x0.size() != a.cols() || y.size() != a.rows())
    throw ArgumentError("ista: dimension mismatch");
  IstaResult res;
  res.x = x0;
  const double lip = lipschitz_constant(a);
  if (lip == 0.0) {
    res.x.setZero();
    res.converged = true;
    res.objective = weighted_lasso_objective(a, y, res.x, weights);
    return res;
  }
  // Slight overestimate keeps 1/L a safe step despite power-iteration error.
  const double big_l = lip * (1.0 + 1e-9);
  const double inv_l = 1.0 / big_l;
  const Eigen::VectorXd thresholds = inv_l * weights;

  Eigen::VectorXd next(res.x.size());
  for (res.iterations = 0; res.iterations < max_iters; ++res.iterations) {
    const Eigen::VectorXd grad = a.transpose() * (a * res.x - y);
    next = res.x - inv_l * grad;
    for (Eigen::Index j = 0; j < next.size(); ++j) next[j] = soft_threshold(next[j], thresholds[j]);
    const double change = (next - res.x).lpNorm<Eigen::Infinity>();
    res.x.swap(next);
    if (big_l * change <= tol) {
      res.converged = true;
      ++res.iterations;
      break;
    }
  }
  res.objective = weighted_lasso_objective(a, y, res.x, weights);
  return res;
}

IstaResult ista_oracle(const CSInstance& instance, double lambda, std::size_t max_iters, double tol) {
  if (!(lambda >= 0.0)) throw ArgumentError("ista: lambda must be >= 0");
  const Eigen::VectorXd w = Eigen::VectorXd::Constant(instance.a.cols(), lambda);
  return ista_weighted(instance.a, instance.y, w, Eigen::VectorXd::Zero(instance.a.cols()), max_iters, tol);
}

double kkt_violation(const Eigen::MatrixXd& a, const Eigen::VectorXd& y, const Eigen::VectorXd& x,
                     const Eigen::VectorXd& weights) {
  const Eigen::VectorXd g = a.transpose() * (a * x - y);
  double worst = 0.0;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    double v;
    if (x[j] == 0.0)
      v = std::max(0.0, std::abs(g[j]) - weights[j]);
    else
      v = std::abs(g[j] + weights[j] * (x[j] > 0.0 ? 1.0 : -1.0));
    worst = std::max(worst, v);
  }
  return worst;
}

ReweightedResult reweighted_oracle(const CSInstance& instance, const RegularizerConfig& cfg,
                                   std::size_t outer_iters, std::size_t inner_iters, double tol) {
  cfg.validate();
  if (outer_iters == 0) throw ArgumentError("reweighted oracle needs at least one outer iteration");
  const auto n = instance.a.cols();
  ReweightedResult res;
  res.x = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd w = Eigen::VectorXd::Constant(n, cfg.lambda);
  for (std::size_t t = 0; t < outer_iters; ++t) {
    if (t > 0) {
      const Eigen::VectorXd mags = res.x.cwiseAbs();
      w = adaptive_weights(mags, mags.maxCoeff(), cfg);
    }
    res.objective_before.push_back(weighted_lasso_objective(instance.a, instance.y, res.x, w));
    IstaResult inner = ista_weighted(instance.a, instance.y, w, res.x, inner_iters, tol);
    res.converged = res.converged && inner.converged;
    res.x = std::move(inner.x);
    res.objective_after.push_back(inner.objective);
  }
  res.last_weights = w;
  return res;
}

SparsityReport sparsity_from_counts(std::size_t total, std::size_t nonzero) {
  SparsityReport r;
  r.total = total;
  r.nonzero_count = nonzero;
  r.nonzero_fraction = total == 0 ? 0.0 : 100.0 * static_cast<double>(nonzero) / static_cast<double>(total);
  r.compression_ratio = nonzero == 0 ? std::numeric_limits<double>::infinity()
                                     : static_cast<double>(total) / static_cast<double>(nonzero);
  return r;
}

SparsityReport measure_sparsity(std::span<const double> x, std::optional<std::span<const double>> x_true) {
  const auto nonzero = static_cast<std::size_t>(std::count_if(x.begin(), x.end(), [](double v) { return v != 0.0; }));
  SparsityReport r = sparsity_from_counts(x.size(), nonzero);
  if (!x_true) return r;
  if (x_true->size() != x.size()) throw ArgumentError("measure_sparsity: reference length mismatch");

  std::size_t true_support = 0;
  std::size_t hits = 0;
  double err2 = 0.0;
  double ref2 = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double t = (*x_true)[j];
    if (t != 0.0) {
      ++true_support;
      if (x[j] != 0.0) ++hits;
    }
    err2 += (x[j] - t) * (x[j] - t);
    ref2 += t * t;
  }
  r.support_precision = nonzero == 0 ? 1.0 : static_cast<double>(hits) / static_cast<double>(nonzero);
  r.support_recall = true_support == 0 ? 1.0 : static_cast<double>(hits) / static_cast<double>(true_support);
  r.rel_l2_error = ref2 > 0.0 ? std::sqrt(err2 / ref2) : std::sqrt(err2);
  return r;
}

SparsityReport measure_sparsity(const ParamStore& store) {
  std::size_t total = 0;
  std::size_t nonzero = 0;
  for (const auto& g : store.groups()) {
    total += g.size();
    for (Eigen::Index j = 0; j < g.values.size(); ++j)
      if (g.values[j] != 0.0) ++nonzero;
  }
  return sparsity_from_counts(total, nonzero);
}

}  // namespace xrda
