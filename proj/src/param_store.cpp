#include "xrda/param_store.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>

#include "xrda/detail/byte_io.hpp"
#include "xrda/errors.hpp"

namespace xrda {

namespace {

constexpr std::string_view kMagic = "XRDA1";

bool same_bits(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return a.size() == b.size() &&
         (a.size() == 0 ||
          std::memcmp(a.data(), b.data(), static_cast<std::size_t>(a.size()) * sizeof(double)) == 0);
}

std::size_t shape_size(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

void check_shape(const std::string& name, const std::vector<std::size_t>& shape) {
  if (shape.empty()) throw ConfigError("group '" + name + "' has an empty shape");
  for (std::size_t e : shape)
    if (e == 0) throw ConfigError("group '" + name + "' has a zero extent");
}

}  // namespace

std::string_view to_string(GroupKind kind) {
  switch (kind) {
    case GroupKind::Weight: return "weight";
    case GroupKind::Bias: return "bias";
    case GroupKind::NormScale: return "norm_scale";
    case GroupKind::NormShift: return "norm_shift";
  }
  return "unknown";
}

GroupKind parse_group_kind(std::string_view text) {
  if (text == "weight") return GroupKind::Weight;
  if (text == "bias") return GroupKind::Bias;
  if (text == "norm_scale") return GroupKind::NormScale;
  if (text == "norm_shift") return GroupKind::NormShift;
  throw ConfigError("unknown group kind '" + std::string(text) + "'");
}

ParamGroup& ParamStore::add_group(ParamGroup group) {
  check_shape(group.name, group.shape);
  if (find(group.name) != nullptr) throw ConfigError("duplicate group name '" + group.name + "'");
  const auto n = static_cast<Eigen::Index>(shape_size(group.shape));
  if (group.values.size() != n || group.avg_magnitude.size() != n || group.half_step.size() != n)
    throw ConfigError("group '" + group.name + "' arrays do not match its shape");
  groups_.push_back(std::move(group));
  return groups_.back();
}

const ParamGroup* ParamStore::find(std::string_view name) const {
  for (const auto& g : groups_)
    if (g.name == name) return &g;
  return nullptr;
}

ParamGroup* ParamStore::find(std::string_view name) {
  for (auto& g : groups_)
    if (g.name == name) return &g;
  return nullptr;
}

std::size_t ParamStore::total_size() const {
  std::size_t n = 0;
  for (const auto& g : groups_) n += g.size();
  return n;
}

bool operator==(const ParamStore& a, const ParamStore& b) {
  if (a.groups_.size() != b.groups_.size()) return false;
  for (std::size_t i = 0; i < a.groups_.size(); ++i) {
    const auto& x = a.groups_[i];
    const auto& y = b.groups_[i];
    if (x.name != y.name || x.kind != y.kind || x.shape != y.shape ||
        x.regularized != y.regularized || !same_bits(x.values, y.values) ||
        !same_bits(x.avg_magnitude, y.avg_magnitude) || !same_bits(x.half_step, y.half_step))
      return false;
  }
  return true;
}

ParamStore init_store(std::span<const GroupSpec> spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ParamStore store;
  for (const auto& gs : spec) {
    check_shape(gs.name, gs.shape);
    const auto n = static_cast<Eigen::Index>(shape_size(gs.shape));
    ParamGroup g;
    g.name = gs.name;
    g.kind = gs.kind;
    g.shape = gs.shape;
    g.regularized = gs.regularized.value_or(default_regularized(gs.kind));
    g.values = Eigen::VectorXd::Zero(n);
    std::visit(
        [&](const auto& rule) {
          using R = std::decay_t<decltype(rule)>;
          if constexpr (std::is_same_v<R, init::Uniform>) {
            if (!(rule.low < rule.high))
              throw ConfigError("group '" + gs.name + "': uniform init needs low < high");
            std::uniform_real_distribution<double> dist(rule.low, rule.high);
            for (Eigen::Index j = 0; j < n; ++j) g.values[j] = dist(rng);
          } else if constexpr (std::is_same_v<R, init::ScaledNormal>) {
            if (rule.fan_in == 0) throw ConfigError("group '" + gs.name + "': fan_in must be positive");
            std::normal_distribution<double> dist(
                0.0, rule.gain / std::sqrt(static_cast<double>(rule.fan_in)));
            for (Eigen::Index j = 0; j < n; ++j) g.values[j] = dist(rng);
          }
        },
        gs.init);
    g.avg_magnitude = g.values.cwiseAbs();
    g.half_step = g.values;
    store.add_group(std::move(g));
  }
  return store;
}

void update_avg_magnitude(ParamGroup& group, double mu) {
  if (!(mu >= 0.0 && mu < 1.0)) throw ArgumentError("averaging parameter mu must lie in [0, 1)");
  group.avg_magnitude = mu * group.avg_magnitude + (1.0 - mu) * group.values.cwiseAbs();
}

double group_max_magnitude(const ParamGroup& group) {
  if (group.avg_magnitude.size() == 0) throw ArgumentError("group '" + group.name + "' is empty");
  return group.avg_magnitude.maxCoeff();
}

std::vector<std::uint8_t> encode_checkpoint(const ParamStore& store) {
  detail::ByteWriter w;
  w.raw(kMagic);
  w.u64(store.group_count());
  for (const auto& g : store.groups()) {
    w.u64(g.name.size());
    w.raw(g.name);
    w.u8(static_cast<std::uint8_t>(g.kind));
    w.u8(g.regularized ? 1 : 0);
    w.u64(g.shape.size());
    for (std::size_t e : g.shape) w.u64(e);
    w.f64s(g.values.data(), g.size());
    w.f64s(g.avg_magnitude.data(), g.size());
    w.f64s(g.half_step.data(), g.size());
  }
  auto& bytes = w.bytes();
  const auto sum = detail::fnv1a64(std::span(bytes).subspan(kMagic.size()));
  w.u64(sum);
  return std::move(bytes);
}

ParamStore decode_checkpoint(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  r.expect_magic(kMagic);
  const std::size_t start = r.pos();
  const std::uint64_t count = r.u64("group count");
  ParamStore store;
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::size_t group_offset = r.pos();
    const std::uint64_t name_len = r.u64("name length");
    ParamGroup g;
    g.name = r.str(name_len, "group name");
    const std::size_t kind_offset = r.pos();
    const std::uint8_t kind = r.u8("group kind");
    if (kind > static_cast<std::uint8_t>(GroupKind::NormShift))
      throw FormatError("invalid group kind " + std::to_string(kind), kind_offset);
    g.kind = static_cast<GroupKind>(kind);
    g.regularized = r.u8("regularized flag") != 0;
    const std::uint64_t rank = r.u64("rank");
    if (rank == 0 || rank > r.remaining() / 8) throw FormatError("invalid rank", r.pos() - 8);
    std::uint64_t n = 1;
    for (std::uint64_t d = 0; d < rank; ++d) {
      const std::uint64_t e = r.u64("extent");
      if (e == 0 || n > r.remaining() / e) throw FormatError("invalid extent", r.pos() - 8);
      n *= e;
      g.shape.push_back(e);
    }
    const auto len = static_cast<Eigen::Index>(n);
    g.values.resize(len);
    g.avg_magnitude.resize(len);
    g.half_step.resize(len);
    r.f64s(g.values.data(), n, "values");
    r.f64s(g.avg_magnitude.data(), n, "avg_magnitude");
    r.f64s(g.half_step.data(), n, "half_step");
    try {
      store.add_group(std::move(g));
    } catch (const ConfigError& e) {
      throw FormatError(e.what(), group_offset);
    }
  }
  r.verify_checksum(start);
  return store;
}

void save_checkpoint(const ParamStore& store, const std::filesystem::path& path) {
  detail::write_file(path.string(), encode_checkpoint(store));
}

ParamStore load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(detail::read_file(path.string()));
}

namespace detail {

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

}  // namespace detail

}  // namespace xrda
