#include "nsim/io.hpp"

#include <bit>
#include <cstring>
#include <vector>

namespace nsim {

FormatError::FormatError(const std::string& what, uint64_t offset)
    : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}

void BinaryWriter::magic(const char (&tag)[5]) { os_.write(tag, 4); }

void BinaryWriter::u8(uint8_t v) { os_.put(static_cast<char>(v)); }

void BinaryWriter::u32(uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os_.write(b, 4);
}

void BinaryWriter::u64(uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os_.write(b, 8);
}

void BinaryWriter::f32(std::span<const float> values) {
  std::vector<char> buf(values.size() * 4);
  for (size_t k = 0; k < values.size(); ++k) {
    const uint32_t bits = std::bit_cast<uint32_t>(values[k]);
    for (int i = 0; i < 4; ++i) buf[k * 4 + static_cast<size_t>(i)] = static_cast<char>((bits >> (8 * i)) & 0xff);
  }
  os_.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

void BinaryWriter::bytes(std::span<const uint8_t> data) {
  os_.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
}

void BinaryWriter::string(const std::string& s) {
  u32(static_cast<uint32_t>(s.size()));
  os_.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void BinaryReader::read(void* dst, size_t n, const char* what) {
  is_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
  const auto got = static_cast<size_t>(is_.gcount());
  if (got != n) throw FormatError(std::string("truncated while reading ") + what, offset_ + got);
  offset_ += n;
}

void BinaryReader::expect_magic(const char (&tag)[5]) {
  char b[4];
  const uint64_t at = offset_;
  read(b, 4, "magic");
  if (std::memcmp(b, tag, 4) != 0) throw FormatError(std::string("bad magic, expected ") + tag, at);
}

uint8_t BinaryReader::u8(const char* what) {
  uint8_t v;
  read(&v, 1, what);
  return v;
}

uint32_t BinaryReader::u32(const char* what) {
  unsigned char b[4];
  read(b, 4, what);
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

uint64_t BinaryReader::u64(const char* what) {
  unsigned char b[8];
  read(b, 8, what);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

void BinaryReader::f32(std::span<float> out, const char* what) {
  std::vector<unsigned char> buf(out.size() * 4);
  read(buf.data(), buf.size(), what);
  for (size_t k = 0; k < out.size(); ++k) {
    uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= static_cast<uint32_t>(buf[k * 4 + static_cast<size_t>(i)]) << (8 * i);
    out[k] = std::bit_cast<float>(bits);
  }
}

void BinaryReader::bytes(std::span<uint8_t> out, const char* what) { read(out.data(), out.size(), what); }

std::string BinaryReader::string(const char* what, uint32_t max_length) {
  const uint64_t at = offset_;
  const uint32_t n = u32(what);
  if (n > max_length) throw FormatError(std::string("implausible length for ") + what, at);
  std::string s(n, '\0');
  read(s.data(), n, what);
  return s;
}

bool BinaryReader::at_end() { return is_.peek() == std::char_traits<char>::eof(); }

}  // namespace nsim
