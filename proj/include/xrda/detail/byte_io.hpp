#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "xrda/errors.hpp"

namespace xrda::detail {

static_assert(std::endian::native == std::endian::little,
              "checkpoint encoding assumes a little-endian host");

inline std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

class ByteWriter {
public:
  void raw(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u64(std::uint64_t v) { append(&v, sizeof v); }
  void f64(double v) { append(&v, sizeof v); }
  void f64s(const double* data, std::size_t n) { append(data, n * sizeof(double)); }

  std::vector<std::uint8_t>& bytes() { return bytes_; }

private:
  void append(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    bytes_.insert(bytes_.end(), b, b + n);
  }
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  void expect_magic(std::string_view magic) {
    need(magic.size(), "magic");
    if (std::memcmp(bytes_.data(), magic.data(), magic.size()) != 0)
      throw FormatError("bad magic, expected \"" + std::string(magic) + "\"", 0);
    pos_ += magic.size();
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return bytes_[pos_++];
  }
  std::uint64_t u64(const char* what) {
    std::uint64_t v;
    copy(&v, sizeof v, what);
    return v;
  }
  double f64(const char* what) {
    double v;
    copy(&v, sizeof v, what);
    return v;
  }
  void f64s(double* out, std::size_t n, const char* what) {
    if (n > remaining() / sizeof(double))
      throw FormatError(std::string("truncated while reading ") + what, pos_);
    copy(out, n * sizeof(double), what);
  }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  /// Verifies the trailing checksum over bytes [start, pos) and that nothing
  /// follows it.
  void verify_checksum(std::size_t start) {
    const std::size_t payload_end = pos_;
    const std::uint64_t expected = u64("checksum");
    const std::uint64_t actual = fnv1a64(bytes_.subspan(start, payload_end - start));
    if (expected != actual) throw FormatError("checksum mismatch", payload_end);
    if (pos_ != bytes_.size()) throw FormatError("trailing bytes after checksum", pos_);
  }

private:
  void need(std::size_t n, const char* what) const {
    if (n > remaining())
      throw FormatError(std::string("truncated while reading ") + what, pos_);
  }
  void copy(void* out, std::size_t n, const char* what) {
    need(n, what);
    if (n > 0) std::memcpy(out, bytes_.data() + pos_, n);
    pos_ += n;
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, std::span<const std::uint8_t> bytes);

}  // namespace xrda::detail
