#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "pqscan/error.hpp"

namespace pqscan {

/// Sub-indexes of one short code, unpacked. Each entry is < 2^b.
using Code = std::vector<std::uint16_t>;

/// Code widths with a packed storage layout: 4 (nibbles), 8 (bytes) and
/// 9..16 (16-bit words; 10 is the desk-scale stand-in for 16).
bool supported_bits(std::size_t b) noexcept;
void check_bits(std::size_t b);

/// Bytes taken by one packed code.
std::size_t packed_code_size(std::size_t m, std::size_t b);

/// Contiguous sequence of packed codes. Nibble layout: component 2j in the low
/// nibble of byte j, component 2j+1 in the high nibble. Word layout:
/// little-endian uint16 per component. Ids default to positions.
class CodeList {
 public:
  CodeList() = default;
  CodeList(std::size_t m, std::size_t b);

  std::size_t size() const noexcept { return n_; }
  bool empty() const noexcept { return n_ == 0; }
  std::size_t m() const noexcept { return m_; }
  std::size_t bits() const noexcept { return b_; }
  std::size_t code_size() const noexcept { return code_size_; }

  void reserve(std::size_t n);
  /// Appends a code; ids stay implicit while every appended id equals its
  /// position.
  void append(std::span<const std::uint16_t> code, std::int64_t id);
  void append(std::span<const std::uint16_t> code) { append(code, static_cast<std::int64_t>(n_)); }
  void append_packed(std::span<const std::uint8_t> packed, std::int64_t id);

  std::uint16_t component(std::size_t i, std::size_t j) const {
    const std::uint8_t* c = bytes_.data() + i * code_size_;
    if (b_ == 4) return static_cast<std::uint16_t>((c[j >> 1] >> ((j & 1) * 4)) & 0x0f);
    if (b_ == 8) return c[j];
    return static_cast<std::uint16_t>(c[2 * j] | (c[2 * j + 1] << 8));
  }
  Code code(std::size_t i) const;
  std::span<const std::uint8_t> packed(std::size_t i) const {
    return {bytes_.data() + i * code_size_, code_size_};
  }
  const std::vector<std::uint8_t>& bytes() const noexcept { return bytes_; }

  std::int64_t id(std::size_t i) const {
    return ids_.empty() ? static_cast<std::int64_t>(i) : ids_[i];
  }
  bool has_explicit_ids() const noexcept { return !ids_.empty(); }

  /// Codes [begin, end) with their ids.
  CodeList slice(std::size_t begin, std::size_t end) const;

  bool operator==(const CodeList&) const = default;

  // Persistence: "PQL1", u64 n, u32 m, u32 b, u8 has_ids, packed codes,
  // then n x i64 ids when has_ids is set.
  void save(std::ostream& out) const;
  static CodeList load(std::istream& in, std::uint64_t base_offset = 0);
  void save(const std::filesystem::path& path) const;
  static CodeList load(const std::filesystem::path& path);

 private:
  void record_id(std::int64_t id);

  std::size_t n_ = 0;
  std::size_t m_ = 0;
  std::size_t b_ = 8;
  std::size_t code_size_ = 0;
  std::vector<std::uint8_t> bytes_;
  std::vector<std::int64_t> ids_;
};

/// Writes sub-indexes into a packed buffer of packed_code_size(m, b) bytes.
void pack_code(std::span<const std::uint16_t> code, std::size_t b, std::span<std::uint8_t> out);

}  // namespace pqscan
