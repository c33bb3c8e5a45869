#include "xrda/regularizer.hpp"

#include <cmath>

#include "xrda/errors.hpp"

namespace xrda {

void RegularizerConfig::validate() const {
  if (!(std::isfinite(lambda) && lambda >= 0.0)) throw ArgumentError("lambda must be finite and >= 0");
  if (!(std::isfinite(beta) && beta > 0.0)) throw ArgumentError("beta must be finite and > 0");
}

ThresholdField adaptive_weights(const Eigen::Ref<const Eigen::VectorXd>& avg_magnitude,
                                double max_magnitude, const RegularizerConfig& cfg) {
  ThresholdField w(avg_magnitude.size());
  for (Eigen::Index j = 0; j < avg_magnitude.size(); ++j)
    w[j] = adaptive_weight(avg_magnitude[j], max_magnitude, cfg);
  return w;
}

ThresholdField adaptive_weights(const ParamGroup& group, const RegularizerConfig& cfg) {
  if (!group.regularized)
    throw ArgumentError("adaptive weights requested for unregularized group '" + group.name + "'");
  return adaptive_weights(group.avg_magnitude, group_max_magnitude(group), cfg);
}

ThresholdField group_weights(const ParamGroup& group, const RegularizerConfig& cfg) {
  if (cfg.weighting == Weighting::Uniform)
    return ThresholdField::Constant(static_cast<Eigen::Index>(group.size()), cfg.lambda);
  return adaptive_weights(group, cfg);
}

double log_regularizer_term(const Eigen::Ref<const Eigen::VectorXd>& values, double max_magnitude,
                            const RegularizerConfig& cfg) {
  if (!(max_magnitude > 0.0)) return 0.0;
  double sum = 0.0;
  for (Eigen::Index j = 0; j < values.size(); ++j)
    sum += max_magnitude * std::log(cfg.beta + std::abs(values[j]) / max_magnitude);
  return cfg.lambda * (cfg.beta + 1.0) * sum;
}

double log_regularizer_value(const ParamStore& store, const RegularizerConfig& cfg) {
  double total = 0.0;
  for (const auto& g : store.groups()) {
    if (!g.regularized) continue;
    total += log_regularizer_term(g.values, group_max_magnitude(g), cfg);
  }
  return total;
}

double soft_threshold(double x, double t) {
  if (!(t >= 0.0)) throw ArgumentError("soft_threshold: threshold must be >= 0");
  if (std::abs(x) <= t) return 0.0;
  return x > 0.0 ? x - t : x + t;
}

void prox_weighted_l1(Eigen::Ref<Eigen::VectorXd> values, const ThresholdField& thresholds,
                      double step) {
  if (values.size() != thresholds.size())
    throw ArgumentError("prox_weighted_l1: thresholds length " + std::to_string(thresholds.size()) +
                        " does not match values length " + std::to_string(values.size()));
  if (!(step >= 0.0)) throw ArgumentError("prox_weighted_l1: step must be >= 0");
  for (Eigen::Index j = 0; j < values.size(); ++j)
    values[j] = soft_threshold(values[j], step * thresholds[j]);
}

}  // namespace xrda
