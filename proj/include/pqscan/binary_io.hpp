#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>

#include "pqscan/error.hpp"

namespace pqscan::io {

static_assert(std::endian::native == std::endian::little,
              "on-disk formats are little-endian; big-endian hosts need byte swapping");

class BinaryWriter {
 public:
  explicit BinaryWriter(std::ostream& out) : out_(out) {}

  void magic(std::string_view tag) { bytes(tag.data(), tag.size()); }

  template <typename T>
    requires std::is_arithmetic_v<T>
  void put(T value) {
    bytes(&value, sizeof(T));
  }

  template <typename T>
    requires std::is_arithmetic_v<T>
  void put_array(std::span<const T> values) {
    bytes(values.data(), values.size_bytes());
  }

  void bytes(const void* data, std::size_t size);

 private:
  std::ostream& out_;
};

class BinaryReader {
 public:
  /// `base_offset` is added to reported offsets when reading an embedded blob.
  explicit BinaryReader(std::istream& in, std::uint64_t base_offset = 0)
      : in_(in), offset_(base_offset) {}

  void expect_magic(std::string_view tag);

  template <typename T>
    requires std::is_arithmetic_v<T>
  T get() {
    T value{};
    bytes(&value, sizeof(T));
    return value;
  }

  template <typename T>
    requires std::is_arithmetic_v<T>
  void get_array(std::span<T> values) {
    bytes(values.data(), values.size_bytes());
  }

  void bytes(void* data, std::size_t size);

  /// Returns false at a clean end of stream.
  bool at_end();

  std::uint64_t offset() const noexcept { return offset_; }

  [[noreturn]] void fail(const std::string& what) const { throw FormatError(what, offset_); }

 private:
  std::istream& in_;
  std::uint64_t offset_;
};

}  // namespace pqscan::io
