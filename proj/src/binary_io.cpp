#include "pqscan/binary_io.hpp"

namespace pqscan::io {

void BinaryWriter::bytes(const void* data, std::size_t size) {
  out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
  if (!out_) throw std::runtime_error("write failed");
}

void BinaryReader::expect_magic(std::string_view tag) {
  std::string got(tag.size(), '\0');
  const std::uint64_t start = offset_;
  bytes(got.data(), got.size());
  if (got != tag) {
    throw FormatError("bad magic: expected '" + std::string(tag) + "'", start);
  }
}

void BinaryReader::bytes(void* data, std::size_t size) {
  in_.read(static_cast<char*>(data), static_cast<std::streamsize>(size));
  const auto got = static_cast<std::uint64_t>(in_.gcount());
  if (got != size) {
    offset_ += got;
    fail("truncated input");
  }
  offset_ += size;
}

bool BinaryReader::at_end() {
  return in_.peek() == std::char_traits<char>::eof();
}

}  // namespace pqscan::io
