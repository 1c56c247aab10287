#include "pqscan/code_list.hpp"

#include <algorithm>
#include <fstream>
#include <string>

#include "pqscan/binary_io.hpp"

namespace pqscan {

bool supported_bits(std::size_t b) noexcept { return b == 4 || b == 8 || (b >= 9 && b <= 16); }

void check_bits(std::size_t b) {
  if (!supported_bits(b)) {
    throw InvalidArgument("unsupported sub-quantizer width b=" + std::to_string(b) +
                          " (expected 4, 8 or 9..16)");
  }
}

std::size_t packed_code_size(std::size_t m, std::size_t b) {
  check_bits(b);
  if (b == 4) return (m + 1) / 2;
  if (b == 8) return m;
  return 2 * m;
}

void pack_code(std::span<const std::uint16_t> code, std::size_t b, std::span<std::uint8_t> out) {
  const std::size_t m = code.size();
  const std::uint32_t limit = 1u << b;
  for (auto v : code) {
    if (v >= limit) throw InvalidArgument("sub-index out of range for b=" + std::to_string(b));
  }
  std::fill(out.begin(), out.end(), std::uint8_t{0});
  if (b == 4) {
    for (std::size_t j = 0; j < m; ++j) {
      out[j >> 1] = static_cast<std::uint8_t>(out[j >> 1] | (code[j] << ((j & 1) * 4)));
    }
  } else if (b == 8) {
    for (std::size_t j = 0; j < m; ++j) out[j] = static_cast<std::uint8_t>(code[j]);
  } else {
    for (std::size_t j = 0; j < m; ++j) {
      out[2 * j] = static_cast<std::uint8_t>(code[j] & 0xff);
      out[2 * j + 1] = static_cast<std::uint8_t>(code[j] >> 8);
    }
  }
}

CodeList::CodeList(std::size_t m, std::size_t b)
    : m_(m), b_(b), code_size_(packed_code_size(m, b)) {
  if (m == 0) throw InvalidArgument("CodeList: m must be positive");
}

void CodeList::reserve(std::size_t n) { bytes_.reserve(n * code_size_); }

void CodeList::append(std::span<const std::uint16_t> code, std::int64_t id) {
  if (code.size() != m_) throw InvalidArgument("CodeList::append: code has wrong length");
  const std::size_t at = bytes_.size();
  bytes_.resize(at + code_size_);
  pack_code(code, b_, std::span<std::uint8_t>(bytes_.data() + at, code_size_));
  record_id(id);
}

void CodeList::append_packed(std::span<const std::uint8_t> packed, std::int64_t id) {
  if (packed.size() != code_size_) throw InvalidArgument("CodeList::append_packed: bad size");
  bytes_.insert(bytes_.end(), packed.begin(), packed.end());
  record_id(id);
}

void CodeList::record_id(std::int64_t id) {
  // an empty ids_ means "id == position"; materialize on the first mismatch
  const bool implicit = ids_.empty();
  if (implicit && id != static_cast<std::int64_t>(n_)) {
    ids_.resize(n_);
    for (std::size_t i = 0; i < n_; ++i) ids_[i] = static_cast<std::int64_t>(i);
  }
  if (!implicit || id != static_cast<std::int64_t>(n_)) ids_.push_back(id);
  ++n_;
}

Code CodeList::code(std::size_t i) const {
  Code out(m_);
  for (std::size_t j = 0; j < m_; ++j) out[j] = component(i, j);
  return out;
}

CodeList CodeList::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > n_) throw InvalidArgument("CodeList::slice: bad range");
  CodeList out(m_, b_);
  out.reserve(end - begin);
  // Explicit ids keep the original positions.
  out.ids_.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i) {
    auto p = packed(i);
    out.bytes_.insert(out.bytes_.end(), p.begin(), p.end());
    out.ids_.push_back(id(i));
  }
  out.n_ = end - begin;
  return out;
}

void CodeList::save(std::ostream& out) const {
  io::BinaryWriter w(out);
  w.magic("PQL1");
  w.put<std::uint64_t>(n_);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(m_));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(b_));
  w.put<std::uint8_t>(ids_.empty() ? 0 : 1);
  w.put_array(std::span<const std::uint8_t>(bytes_));
  if (!ids_.empty()) w.put_array(std::span<const std::int64_t>(ids_));
}

CodeList CodeList::load(std::istream& in, std::uint64_t base_offset) {
  io::BinaryReader r(in, base_offset);
  r.expect_magic("PQL1");
  const auto n = r.get<std::uint64_t>();
  const auto m = r.get<std::uint32_t>();
  const auto b = r.get<std::uint32_t>();
  if (m == 0) r.fail("PQL1: m must be positive");
  if (!supported_bits(b)) r.fail("PQL1: unsupported b=" + std::to_string(b));
  const auto has_ids = r.get<std::uint8_t>();
  if (has_ids > 1) r.fail("PQL1: bad id flag");
  CodeList out(m, b);
  out.n_ = n;
  out.bytes_.resize(n * out.code_size_);
  r.get_array(std::span<std::uint8_t>(out.bytes_));
  if (b == 4 || b > 8) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        if (out.component(i, j) >= (1u << b)) r.fail("PQL1: sub-index out of range");
      }
      if (b == 4 && (m & 1) && (out.packed(i).back() >> 4) != 0) {
        r.fail("PQL1: non-zero padding nibble");
      }
    }
  }
  if (has_ids) {
    out.ids_.resize(n);
    r.get_array(std::span<std::int64_t>(out.ids_));
  }
  return out;
}

void CodeList::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot create " + path.string());
  save(out);
}

CodeList CodeList::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return load(in);
}

}  // namespace pqscan
