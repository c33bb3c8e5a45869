#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "xrda/models.hpp"
#include "xrda/param_store.hpp"
#include "xrda/regularizer.hpp"

namespace xrda {

/// y = A x_true + noise, with A_ij ~ N(0, 1/m) and exactly k non-zeros in
/// x_true of magnitude U[0.5, 1.5] and random sign.
struct CSInstance {
  std::size_t n = 0;  // signal length
  std::size_t m = 0;  // measurements
  std::size_t k = 0;  // sparsity
  double sigma = 0.0;
  std::uint64_t seed = 0;
  Eigen::MatrixXd a;
  Eigen::VectorXd x_true;
  Eigen::VectorXd y;
  std::vector<std::size_t> support;  // sorted
};

/// Requires k < m < n; throws ArgumentError otherwise.
CSInstance generate_cs_instance(std::size_t n, std::size_t m, std::size_t k, double sigma,
                                std::uint64_t seed);

/// A rows become features, y the regression targets.
Dataset to_dataset(const CSInstance& instance);

// The oracles below minimize the unnormalized objective
//   1/2 ||A x - y||^2 + sum_j w_j |x_j|.
// LeastSquaresProblem averages over rows instead, so a penalty lambda here
// corresponds to lambda / m on that problem.

/// Largest eigenvalue of A^T A by power iteration.
double lipschitz_constant(const Eigen::MatrixXd& a);

double lasso_objective(const Eigen::MatrixXd& a, const Eigen::VectorXd& y, const Eigen::VectorXd& x,
                       double lambda);
double weighted_lasso_objective(const Eigen::MatrixXd& a, const Eigen::VectorXd& y,
                                const Eigen::VectorXd& x, const Eigen::VectorXd& weights);

struct IstaResult {
  Eigen::VectorXd x;
  std::size_t iterations = 0;
  bool converged = false;
  double objective = 0.0;
};

/// Proximal gradient descent with step 1/L, started from `x0`. Stops once
/// L * ||x_next - x||_inf <= tol, which bounds the optimality residual.
IstaResult ista_weighted(const Eigen::MatrixXd& a, const Eigen::VectorXd& y, const Eigen::VectorXd& weights,
                         const Eigen::VectorXd& x0, std::size_t max_iters, double tol);

/// Reference lasso solver with uniform weight `lambda`, started from zero.
IstaResult ista_oracle(const CSInstance& instance, double lambda, std::size_t max_iters, double tol);

/// Largest violation of the lasso optimality conditions, coordinatewise:
/// |A_j^T r| <= w_j on zero entries, A_j^T r = -w_j sign(x_j) elsewhere,
/// with r = A x - y.
double kkt_violation(const Eigen::MatrixXd& a, const Eigen::VectorXd& y, const Eigen::VectorXd& x,
                     const Eigen::VectorXd& weights);

struct ReweightedResult {
  Eigen::VectorXd x;
  // For each outer iteration t: the weighted objective under that
  // iteration's weights at the starting point and at the solution.
  std::vector<double> objective_before;
  std::vector<double> objective_after;
  Eigen::VectorXd last_weights;
  bool converged = true;
};

/// Outer-loop reweighting: solve a uniform lasso (weight cfg.lambda), then
/// repeatedly recompute the adaptive weights from |x| of the previous
/// solution and re-solve, warm-started.
ReweightedResult reweighted_oracle(const CSInstance& instance, const RegularizerConfig& cfg,
                                   std::size_t outer_iters, std::size_t inner_iters = 200000,
                                   double tol = 1e-10);

struct SparsityReport {
  std::size_t total = 0;
  std::size_t nonzero_count = 0;
  double nonzero_fraction = 0.0;  // percent
  // total / nonzero; +inf when nothing is non-zero.
  double compression_ratio = std::numeric_limits<double>::infinity();
  // Present only when a reference signal was given. Empty supports count
  // as fully precise / fully recalled.
  std::optional<double> support_precision;
  std::optional<double> support_recall;
  std::optional<double> rel_l2_error;
};

SparsityReport sparsity_from_counts(std::size_t total, std::size_t nonzero);
SparsityReport measure_sparsity(std::span<const double> x,
                                std::optional<std::span<const double>> x_true = std::nullopt);
SparsityReport measure_sparsity(const ParamStore& store);

}  // namespace xrda
