#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Core>

namespace xrda {

/// Role of a parameter group inside a layer.
enum class GroupKind : std::uint8_t { Weight = 0, Bias = 1, NormScale = 2, NormShift = 3 };

std::string_view to_string(GroupKind kind);
GroupKind parse_group_kind(std::string_view text);

/// Weight groups carry the sparsity penalty unless told otherwise.
inline bool default_regularized(GroupKind kind) { return kind == GroupKind::Weight; }

/// One named block of parameters plus the per-entry state the optimizer
/// keeps alongside it. All three arrays have `size()` entries.
struct ParamGroup {
  std::string name;
  GroupKind kind = GroupKind::Weight;
  std::vector<std::size_t> shape;
  Eigen::VectorXd values;
  // Running average of |values|, always >= 0.
  Eigen::VectorXd avg_magnitude;
  // The intermediate (pre-prox) iterate from the previous step.
  Eigen::VectorXd half_step;
  bool regularized = true;

  std::size_t size() const { return static_cast<std::size_t>(values.size()); }
};

namespace init {
struct Zeros {};
struct Uniform {
  double low = -1.0;
  double high = 1.0;
};
/// Normal(0, gain^2 / fan_in).
struct ScaledNormal {
  std::size_t fan_in = 1;
  double gain = 1.0;
};
}  // namespace init

using InitRule = std::variant<init::Zeros, init::Uniform, init::ScaledNormal>;

struct GroupSpec {
  std::string name;
  GroupKind kind = GroupKind::Weight;
  std::vector<std::size_t> shape;
  InitRule init = init::Zeros{};
  // Falls back to default_regularized(kind).
  std::optional<bool> regularized;
};

class ParamStore {
public:
  ParamStore() = default;

  /// Appends a group; throws ConfigError on a duplicate name or bad shape.
  ParamGroup& add_group(ParamGroup group);

  std::span<ParamGroup> groups() { return groups_; }
  std::span<const ParamGroup> groups() const { return groups_; }
  std::size_t group_count() const { return groups_.size(); }

  ParamGroup& group(std::size_t i) { return groups_.at(i); }
  const ParamGroup& group(std::size_t i) const { return groups_.at(i); }

  /// nullptr when no group has that name.
  const ParamGroup* find(std::string_view name) const;
  ParamGroup* find(std::string_view name);

  std::size_t total_size() const;

  /// Bitwise comparison of all arrays and metadata.
  friend bool operator==(const ParamStore& a, const ParamStore& b);

private:
  std::vector<ParamGroup> groups_;
};

/// Deterministic in `seed`. Each group starts with avg_magnitude = |values|
/// and half_step = values.
ParamStore init_store(std::span<const GroupSpec> spec, std::uint64_t seed);

/// avg <- mu * avg + (1 - mu) * |values|, elementwise. mu must lie in [0, 1).
void update_avg_magnitude(ParamGroup& group, double mu);

/// Largest entry of avg_magnitude. Throws ArgumentError on an empty group.
double group_max_magnitude(const ParamGroup& group);

// Checkpoints. Layout (all integers u64 little-endian, reals IEEE-754 f64
// little-endian):
//   "XRDA1" | group_count | per group:
//     name_len | name bytes | kind u8 | regularized u8 | rank | extents...
//     | values | avg_magnitude | half_step
//   | FNV-1a 64 checksum of every byte after the magic.
std::vector<std::uint8_t> encode_checkpoint(const ParamStore& store);
ParamStore decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const ParamStore& store, const std::filesystem::path& path);
ParamStore load_checkpoint(const std::filesystem::path& path);

}  // namespace xrda
