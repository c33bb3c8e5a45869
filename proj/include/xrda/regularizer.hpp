#pragma once

#include <Eigen/Core>

#include "xrda/param_store.hpp"

namespace xrda {

enum class Weighting {
  Uniform,   // every regularized entry sees lambda
  Adaptive,  // lambda * (beta + 1) / (beta + |theta|_av / M)
};

struct RegularizerConfig {
  // lambda = 0 turns the penalty off; the weight formulas stay well defined.
  double lambda = 1e-6;
  double beta = 2e-3;
  Weighting weighting = Weighting::Adaptive;

  /// Throws ArgumentError unless lambda >= 0 and beta > 0 (both finite).
  void validate() const;

  /// Penalty applied to an entry whose magnitude is zero: lambda * (1 + 1/beta).
  double weight_cap() const { return lambda * ((beta + 1.0) / beta); }
};

/// Per-entry l1 weights aligned with a ParamGroup.
using ThresholdField = Eigen::VectorXd;

/// Weight for one entry with averaged magnitude `avg` in a group whose
/// largest averaged magnitude is `max_magnitude`. An all-zero group
/// (max_magnitude == 0) gets the cap everywhere.
inline double adaptive_weight(double avg, double max_magnitude, const RegularizerConfig& cfg) {
  const double ratio = max_magnitude > 0.0 ? avg / max_magnitude : 0.0;
  return cfg.lambda * ((cfg.beta + 1.0) / (cfg.beta + ratio));
}

ThresholdField adaptive_weights(const Eigen::Ref<const Eigen::VectorXd>& avg_magnitude,
                                double max_magnitude, const RegularizerConfig& cfg);

/// Uses group.avg_magnitude and group_max_magnitude(group). The group must
/// be marked regularized.
ThresholdField adaptive_weights(const ParamGroup& group, const RegularizerConfig& cfg);

/// Weights the optimizer applies to `group` under cfg.weighting.
ThresholdField group_weights(const ParamGroup& group, const RegularizerConfig& cfg);

/// lambda (beta + 1) * sum_j M log(beta + |values_j| / M) for a single group.
/// Returns 0 when M == 0.
double log_regularizer_term(const Eigen::Ref<const Eigen::VectorXd>& values, double max_magnitude,
                            const RegularizerConfig& cfg);

/// Diagnostic value of the logarithmic regularizer over all regularized
/// groups: raw |values| enter the log, M comes from avg_magnitude.
double log_regularizer_value(const ParamStore& store, const RegularizerConfig& cfg);

/// sign(x) * max(0, |x| - t). |x| <= t yields +0.0 exactly.
double soft_threshold(double x, double t);

/// values[j] <- soft_threshold(values[j], step * thresholds[j]).
void prox_weighted_l1(Eigen::Ref<Eigen::VectorXd> values, const ThresholdField& thresholds,
                      double step);

}  // namespace xrda
