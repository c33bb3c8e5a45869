#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "xrda/param_store.hpp"

namespace xrda {

/// Rows are examples. For classification `targets` holds class indices
/// stored as reals and `num_classes` > 0; for regression `num_classes` == 0.
struct Dataset {
  Eigen::MatrixXd features;
  Eigen::VectorXd targets;
  std::size_t num_classes = 0;

  std::size_t rows() const { return static_cast<std::size_t>(features.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(features.cols()); }

  /// Throws DataError if targets are misaligned or a class label is out of range.
  void validate() const;
};

/// Text format: a header line `n_features,n_classes`, then one example per
/// line with the features followed by the target, comma separated.
Dataset read_dataset(const std::filesystem::path& path);
void write_dataset(const Dataset& data, const std::filesystem::path& path);

/// Two interleaving half circles with Gaussian jitter, labels {0, 1},
/// classes balanced.
Dataset make_two_moons(std::size_t rows, double noise, std::uint64_t seed);

/// One gradient array per store group, same lengths.
using Gradient = std::vector<Eigen::VectorXd>;

Gradient zero_gradient(const ParamStore& store);

/// An empirical loss over a dataset with analytic mini-batch gradients.
class Problem {
public:
  virtual ~Problem() = default;

  const Dataset& data() const { return data_; }

  /// Parameter layout this problem expects.
  virtual std::vector<GroupSpec> param_spec() const = 0;

  ParamStore make_store(std::uint64_t seed) const;

  /// Mean loss over the rows in `batch`; fills `grad` (resized to match the
  /// store) with its gradient.
  virtual double loss_and_grad(const ParamStore& store, std::span<const std::size_t> batch,
                               Gradient& grad) const = 0;

  /// Mean loss over the whole dataset.
  virtual double full_loss(const ParamStore& store) const;

  virtual double metric(const ParamStore& store) const = 0;
  virtual std::string metric_name() const = 0;

protected:
  explicit Problem(Dataset data) : data_(std::move(data)) {}

  void check_store(const ParamStore& store) const;

  Dataset data_;
};

/// loss = 1/(2b) ||A_B x - y_B||^2 over batch rows B, single weight group "x".
/// The metric is relative l2 error against `reference` when given,
/// otherwise the full loss.
class LeastSquaresProblem final : public Problem {
public:
  LeastSquaresProblem(Eigen::MatrixXd a, Eigen::VectorXd y,
                      std::optional<Eigen::VectorXd> reference = std::nullopt);

  std::vector<GroupSpec> param_spec() const override;
  double loss_and_grad(const ParamStore& store, std::span<const std::size_t> batch,
                       Gradient& grad) const override;
  double metric(const ParamStore& store) const override;
  std::string metric_name() const override;

private:
  std::optional<Eigen::VectorXd> reference_;
};

/// Multinomial logistic regression (softmax + cross-entropy) with groups
/// "linear.weight" (classes x features) and "linear.bias". `l2` adds
/// l2/2 ||W||^2 to the loss.
class LogisticProblem final : public Problem {
public:
  explicit LogisticProblem(Dataset data, double l2 = 0.0);

  std::vector<GroupSpec> param_spec() const override;
  double loss_and_grad(const ParamStore& store, std::span<const std::size_t> batch,
                       Gradient& grad) const override;
  double metric(const ParamStore& store) const override;
  std::string metric_name() const override { return "accuracy"; }

  double accuracy(const ParamStore& store, const Dataset& data) const;

private:
  double l2_;
};

enum class Activation { Relu, Tanh };

Activation parse_activation(std::string_view text);
std::string_view to_string(Activation a);

/// Fully connected network with softmax cross-entropy on the last layer.
/// `layer_sizes` = {inputs, hidden..., classes}; layer i owns groups
/// "fc<i>.weight" (out x in, row-major) and "fc<i>.bias".
class MlpProblem final : public Problem {
public:
  MlpProblem(std::vector<std::size_t> layer_sizes, Activation activation, Dataset data);

  std::vector<GroupSpec> param_spec() const override;
  double loss_and_grad(const ParamStore& store, std::span<const std::size_t> batch,
                       Gradient& grad) const override;
  double metric(const ParamStore& store) const override;
  std::string metric_name() const override { return "accuracy"; }

  /// Class scores for every row of `features`.
  Eigen::MatrixXd logits(const ParamStore& store, const Eigen::MatrixXd& features) const;
  double accuracy(const ParamStore& store, const Dataset& data) const;

  const std::vector<std::size_t>& layer_sizes() const { return sizes_; }

private:
  std::vector<std::size_t> sizes_;
  Activation activation_;
};

/// Shuffled mini-batches. Each epoch is one pass over a permutation that
/// depends only on (seed, epoch); the last batch may be short.
class MinibatchSampler {
public:
  MinibatchSampler(std::size_t rows, std::size_t batch_size, std::uint64_t seed);

  std::vector<std::vector<std::size_t>> epoch_batches(std::uint64_t epoch) const;
  std::size_t batches_per_epoch() const { return (rows_ + batch_size_ - 1) / batch_size_; }
  std::size_t batch_size() const { return batch_size_; }

private:
  std::size_t rows_;
  std::size_t batch_size_;
  std::uint64_t seed_;
};

}  // namespace xrda
