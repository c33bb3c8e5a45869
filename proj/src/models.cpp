#include "xrda/models.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "xrda/errors.hpp"

namespace xrda {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstRowMap = Eigen::Map<const RowMatrix>;
using RowMap = Eigen::Map<RowMatrix>;

std::size_t label_of(double t) { return static_cast<std::size_t>(t); }

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& m, std::span<const std::size_t> rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

// Mean softmax cross-entropy over rows of `logits`; overwrites `logits`
// with d(loss)/d(logits).
double softmax_cross_entropy(Eigen::MatrixXd& logits, const Eigen::VectorXd& targets,
                             std::span<const std::size_t> rows) {
  const double inv_b = 1.0 / static_cast<double>(rows.size());
  double loss = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    auto z = logits.row(i);
    const double zmax = z.maxCoeff();
    const double sum = (z.array() - zmax).exp().sum();
    const double lse = zmax + std::log(sum);
    const std::size_t y = label_of(targets[static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)])]);
    loss += lse - z[static_cast<Eigen::Index>(y)];
    z = ((z.array() - lse).exp() * inv_b).matrix();
    z[static_cast<Eigen::Index>(y)] -= inv_b;
  }
  return loss * inv_b;
}

double argmax_accuracy(const Eigen::MatrixXd& logits, const Eigen::VectorXd& targets) {
  if (logits.rows() == 0) return 0.0;
  std::size_t hits = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index best = 0;
    logits.row(i).maxCoeff(&best);
    if (static_cast<std::size_t>(best) == label_of(targets[i])) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(logits.rows());
}

double parse_real(std::string_view text, std::size_t line) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r'))
    text.remove_suffix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw DataError("line " + std::to_string(line) + ": cannot parse number '" + std::string(text) + "'");
  return v;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string format_real(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace

// ---------------------------------------------------------------------------
// Dataset

void Dataset::validate() const {
  if (targets.size() != features.rows())
    throw DataError("dataset has " + std::to_string(features.rows()) + " rows but " +
                    std::to_string(targets.size()) + " targets");
  if (num_classes == 0) return;
  for (Eigen::Index i = 0; i < targets.size(); ++i) {
    const double t = targets[i];
    if (!(t >= 0.0) || t != std::floor(t) || t >= static_cast<double>(num_classes))
      throw DataError("row " + std::to_string(i) + ": label " + format_real(t) + " outside [0, " +
                      std::to_string(num_classes) + ")");
  }
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset '" + path.string() + "'");
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw DataError("dataset '" + path.string() + "' is empty");
  const auto header = split_commas(line);
  if (header.size() != 2) throw DataError("line 1: expected header 'n_features,n_classes'");
  const double nf = parse_real(header[0], 1);
  const double nc = parse_real(header[1], 1);
  if (!(nf >= 1.0) || nf != std::floor(nf) || !(nc >= 0.0) || nc != std::floor(nc))
    throw DataError("line 1: invalid header values");
  const auto n_features = static_cast<std::size_t>(nf);

  std::vector<double> flat;
  std::vector<double> targets;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_commas(line);
    if (fields.size() != n_features + 1)
      throw DataError("line " + std::to_string(line_no) + ": expected " + std::to_string(n_features + 1) +
                      " fields, found " + std::to_string(fields.size()));
    for (std::size_t j = 0; j < n_features; ++j) flat.push_back(parse_real(fields[j], line_no));
    targets.push_back(parse_real(fields.back(), line_no));
  }

  Dataset d;
  d.num_classes = static_cast<std::size_t>(nc);
  d.features = ConstRowMap(flat.data(), static_cast<Eigen::Index>(targets.size()),
                           static_cast<Eigen::Index>(n_features));
  d.targets = Eigen::Map<const Eigen::VectorXd>(targets.data(), static_cast<Eigen::Index>(targets.size()));
  d.validate();
  return d;
}

void write_dataset(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out << data.cols() << ',' << data.num_classes << '\n';
  for (Eigen::Index i = 0; i < data.features.rows(); ++i) {
    for (Eigen::Index j = 0; j < data.features.cols(); ++j) out << format_real(data.features(i, j)) << ',';
    out << format_real(data.targets[i]) << '\n';
  }
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

Dataset make_two_moons(std::size_t rows, double noise, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
  std::normal_distribution<double> jitter(0.0, noise);
  Dataset d;
  d.num_classes = 2;
  d.features.resize(static_cast<Eigen::Index>(rows), 2);
  d.targets.resize(static_cast<Eigen::Index>(rows));
  for (std::size_t i = 0; i < rows; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const double t = angle(rng);
    const bool upper = (i % 2) == 0;
    double x = upper ? std::cos(t) : 1.0 - std::cos(t);
    double y = upper ? std::sin(t) : 0.5 - std::sin(t);
    if (noise > 0.0) {
      x += jitter(rng);
      y += jitter(rng);
    }
    d.features(r, 0) = x;
    d.features(r, 1) = y;
    d.targets[r] = upper ? 0.0 : 1.0;
  }
  return d;
}

Gradient zero_gradient(const ParamStore& store) {
  Gradient g;
  g.reserve(store.group_count());
  for (const auto& group : store.groups())
    g.push_back(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(group.size())));
  return g;
}

// ---------------------------------------------------------------------------
// Problem

ParamStore Problem::make_store(std::uint64_t seed) const {
  const auto spec = param_spec();
  return init_store(spec, seed);
}

double Problem::full_loss(const ParamStore& store) const {
  std::vector<std::size_t> all(data_.rows());
  std::iota(all.begin(), all.end(), std::size_t{0});
  Gradient scratch;
  return loss_and_grad(store, all, scratch);
}

void Problem::check_store(const ParamStore& store) const {
  const auto spec = param_spec();
  if (spec.size() != store.group_count())
    throw ArgumentError("store has " + std::to_string(store.group_count()) + " groups, problem expects " +
                        std::to_string(spec.size()));
  for (std::size_t i = 0; i < spec.size(); ++i) {
    const auto& g = store.group(i);
    if (g.name != spec[i].name || g.shape != spec[i].shape)
      throw ArgumentError("store group " + std::to_string(i) + " ('" + g.name +
                          "') does not match expected group '" + spec[i].name + "'");
  }
}

// ---------------------------------------------------------------------------
// Least squares

LeastSquaresProblem::LeastSquaresProblem(Eigen::MatrixXd a, Eigen::VectorXd y,
                                         std::optional<Eigen::VectorXd> reference)
    : Problem(Dataset{std::move(a), std::move(y), 0}), reference_(std::move(reference)) {
  if (data_.targets.size() != data_.features.rows())
    throw ArgumentError("least squares: A has " + std::to_string(data_.features.rows()) + " rows, y has " +
                        std::to_string(data_.targets.size()));
  if (data_.features.cols() == 0) throw ArgumentError("least squares: A has no columns");
  if (reference_ && reference_->size() != data_.features.cols())
    throw ArgumentError("least squares: reference length does not match A's column count");
}

std::vector<GroupSpec> LeastSquaresProblem::param_spec() const {
  return {GroupSpec{"x", GroupKind::Weight, {data_.cols()}, init::Zeros{}, true}};
}

double LeastSquaresProblem::loss_and_grad(const ParamStore& store, std::span<const std::size_t> batch,
                                          Gradient& grad) const {
  check_store(store);
  if (batch.empty()) throw ArgumentError("least squares: empty batch");
  const auto& x = store.group(0).values;
  const Eigen::MatrixXd a = gather_rows(data_.features, batch);
  Eigen::VectorXd r = a * x;
  for (std::size_t i = 0; i < batch.size(); ++i)
    r[static_cast<Eigen::Index>(i)] -= data_.targets[static_cast<Eigen::Index>(batch[i])];
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  grad.resize(1);
  grad[0] = inv_b * (a.transpose() * r);
  return 0.5 * inv_b * r.squaredNorm();
}

double LeastSquaresProblem::metric(const ParamStore& store) const {
  if (!reference_) return full_loss(store);
  const double ref_norm = reference_->norm();
  const double err = (store.group(0).values - *reference_).norm();
  return ref_norm > 0.0 ? err / ref_norm : err;
}

std::string LeastSquaresProblem::metric_name() const { return reference_ ? "rel_l2_error" : "loss"; }

// ---------------------------------------------------------------------------
// Logistic regression

LogisticProblem::LogisticProblem(Dataset data, double l2) : Problem(std::move(data)), l2_(l2) {
  if (data_.num_classes < 2) throw DataError("logistic problem needs at least two classes");
  data_.validate();
}

std::vector<GroupSpec> LogisticProblem::param_spec() const {
  return {GroupSpec{"linear.weight", GroupKind::Weight, {data_.num_classes, data_.cols()}, init::Zeros{}, {}},
          GroupSpec{"linear.bias", GroupKind::Bias, {data_.num_classes}, init::Zeros{}, {}}};
}

double LogisticProblem::loss_and_grad(const ParamStore& store, std::span<const std::size_t> batch,
                                      Gradient& grad) const {
  check_store(store);
  if (batch.empty()) throw ArgumentError("logistic: empty batch");
  const auto c = static_cast<Eigen::Index>(data_.num_classes);
  const auto d = static_cast<Eigen::Index>(data_.cols());
  const ConstRowMap w(store.group(0).values.data(), c, d);
  const auto& b = store.group(1).values;

  const Eigen::MatrixXd x = gather_rows(data_.features, batch);
  Eigen::MatrixXd z = x * w.transpose();
  z.rowwise() += b.transpose();
  double loss = softmax_cross_entropy(z, data_.targets, batch);

  grad.resize(2);
  grad[0].resize(c * d);
  RowMap gw(grad[0].data(), c, d);
  gw = z.transpose() * x;
  grad[1] = z.colwise().sum().transpose();
  if (l2_ != 0.0) {
    loss += 0.5 * l2_ * store.group(0).values.squaredNorm();
    grad[0] += l2_ * store.group(0).values;
  }
  return loss;
}

double LogisticProblem::accuracy(const ParamStore& store, const Dataset& data) const {
  check_store(store);
  const auto c = static_cast<Eigen::Index>(data_.num_classes);
  const ConstRowMap w(store.group(0).values.data(), c, static_cast<Eigen::Index>(data_.cols()));
  Eigen::MatrixXd z = data.features * w.transpose();
  z.rowwise() += store.group(1).values.transpose();
  return argmax_accuracy(z, data.targets);
}

double LogisticProblem::metric(const ParamStore& store) const { return accuracy(store, data_); }

// ---------------------------------------------------------------------------
// MLP

Activation parse_activation(std::string_view text) {
  if (text == "relu") return Activation::Relu;
  if (text == "tanh") return Activation::Tanh;
  throw ConfigError("unknown activation '" + std::string(text) + "'");
}

std::string_view to_string(Activation a) { return a == Activation::Relu ? "relu" : "tanh"; }

MlpProblem::MlpProblem(std::vector<std::size_t> layer_sizes, Activation activation, Dataset data)
    : Problem(std::move(data)), sizes_(std::move(layer_sizes)), activation_(activation) {
  if (sizes_.size() < 3) throw ConfigError("mlp needs at least one hidden layer");
  for (std::size_t s : sizes_)
    if (s == 0) throw ConfigError("mlp layer sizes must be positive");
  if (sizes_.front() != data_.cols())
    throw ConfigError("mlp input width " + std::to_string(sizes_.front()) + " does not match " +
                      std::to_string(data_.cols()) + " dataset features");
  if (sizes_.back() != data_.num_classes)
    throw ConfigError("mlp output width " + std::to_string(sizes_.back()) + " does not match " +
                      std::to_string(data_.num_classes) + " classes");
  data_.validate();
}

std::vector<GroupSpec> MlpProblem::param_spec() const {
  std::vector<GroupSpec> spec;
  const double gain = activation_ == Activation::Relu ? std::sqrt(2.0) : 1.0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    const std::string prefix = "fc" + std::to_string(l);
    spec.push_back({prefix + ".weight", GroupKind::Weight, {sizes_[l + 1], sizes_[l]},
                    init::ScaledNormal{sizes_[l], gain}, {}});
    spec.push_back({prefix + ".bias", GroupKind::Bias, {sizes_[l + 1]}, init::Zeros{}, {}});
  }
  return spec;
}

Eigen::MatrixXd MlpProblem::logits(const ParamStore& store, const Eigen::MatrixXd& features) const {
  check_store(store);
  Eigen::MatrixXd a = features;
  const std::size_t layers = sizes_.size() - 1;
  for (std::size_t l = 0; l < layers; ++l) {
    const ConstRowMap w(store.group(2 * l).values.data(), static_cast<Eigen::Index>(sizes_[l + 1]),
                        static_cast<Eigen::Index>(sizes_[l]));
    Eigen::MatrixXd z = a * w.transpose();
    z.rowwise() += store.group(2 * l + 1).values.transpose();
    if (l + 1 < layers) {
      if (activation_ == Activation::Relu)
        a = z.cwiseMax(0.0);
      else
        a = z.array().tanh().matrix();
    } else {
      a = std::move(z);
    }
  }
  return a;
}

double MlpProblem::loss_and_grad(const ParamStore& store, std::span<const std::size_t> batch,
                                 Gradient& grad) const {
  check_store(store);
  if (batch.empty()) throw ArgumentError("mlp: empty batch");
  const std::size_t layers = sizes_.size() - 1;

  // acts[l] is the input to layer l; pre[l] its pre-activation output.
  std::vector<Eigen::MatrixXd> acts(layers);
  std::vector<Eigen::MatrixXd> pre(layers);
  acts[0] = gather_rows(data_.features, batch);
  for (std::size_t l = 0; l < layers; ++l) {
    const ConstRowMap w(store.group(2 * l).values.data(), static_cast<Eigen::Index>(sizes_[l + 1]),
                        static_cast<Eigen::Index>(sizes_[l]));
    pre[l] = acts[l] * w.transpose();
    pre[l].rowwise() += store.group(2 * l + 1).values.transpose();
    if (l + 1 < layers) {
      if (activation_ == Activation::Relu)
        acts[l + 1] = pre[l].cwiseMax(0.0);
      else
        acts[l + 1] = pre[l].array().tanh().matrix();
    }
  }

  Eigen::MatrixXd delta = pre.back();
  const double loss = softmax_cross_entropy(delta, data_.targets, batch);

  grad.resize(2 * layers);
  for (std::size_t l = layers; l-- > 0;) {
    const auto out = static_cast<Eigen::Index>(sizes_[l + 1]);
    const auto in = static_cast<Eigen::Index>(sizes_[l]);
    grad[2 * l].resize(out * in);
    RowMap gw(grad[2 * l].data(), out, in);
    gw = delta.transpose() * acts[l];
    grad[2 * l + 1] = delta.colwise().sum().transpose();
    if (l == 0) break;
    const ConstRowMap w(store.group(2 * l).values.data(), out, in);
    Eigen::MatrixXd back = delta * w;
    if (activation_ == Activation::Relu)
      delta = back.cwiseProduct((pre[l - 1].array() > 0.0).cast<double>().matrix());
    else
      delta = back.cwiseProduct((1.0 - acts[l].array().square()).matrix());
  }
  return loss;
}

double MlpProblem::accuracy(const ParamStore& store, const Dataset& data) const {
  return argmax_accuracy(logits(store, data.features), data.targets);
}

double MlpProblem::metric(const ParamStore& store) const { return accuracy(store, data_); }

// ---------------------------------------------------------------------------
// Mini-batches

MinibatchSampler::MinibatchSampler(std::size_t rows, std::size_t batch_size, std::uint64_t seed)
    : rows_(rows), batch_size_(batch_size), seed_(seed) {
  if (rows == 0) throw ArgumentError("minibatch sampler: dataset has no rows");
  if (batch_size == 0 || batch_size > rows)
    throw ArgumentError("batch size " + std::to_string(batch_size) + " must lie in [1, " +
                        std::to_string(rows) + "]");
}

std::vector<std::vector<std::size_t>> MinibatchSampler::epoch_batches(std::uint64_t epoch) const {
  std::vector<std::size_t> perm(rows_);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::seed_seq seq{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32)};
  std::mt19937_64 rng(seq);
  std::shuffle(perm.begin(), perm.end(), rng);

  std::vector<std::vector<std::size_t>> batches;
  batches.reserve(batches_per_epoch());
  for (std::size_t start = 0; start < rows_; start += batch_size_) {
    const std::size_t end = std::min(rows_, start + batch_size_);
    batches.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(start),
                         perm.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

}  // namespace xrda
