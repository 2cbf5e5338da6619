#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>

namespace nsim {

/// Malformed or truncated binary artifact; `offset` is the byte where reading failed.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, uint64_t offset);
  uint64_t offset() const { return offset_; }

 private:
  uint64_t offset_;
};

/// Little-endian primitive writer.
class BinaryWriter {
 public:
  explicit BinaryWriter(std::ostream& os) : os_(os) {}
  void magic(const char (&tag)[5]);
  void u8(uint8_t v);
  void u32(uint32_t v);
  void u64(uint64_t v);
  void f32(std::span<const float> values);
  void bytes(std::span<const uint8_t> data);
  void string(const std::string& s);  // u32 length + bytes

 private:
  std::ostream& os_;
};

/// Little-endian primitive reader that tracks its byte offset.
class BinaryReader {
 public:
  explicit BinaryReader(std::istream& is) : is_(is) {}
  void expect_magic(const char (&tag)[5]);
  uint8_t u8(const char* what);
  uint32_t u32(const char* what);
  uint64_t u64(const char* what);
  void f32(std::span<float> out, const char* what);
  void bytes(std::span<uint8_t> out, const char* what);
  std::string string(const char* what, uint32_t max_length = 1u << 26);
  uint64_t offset() const { return offset_; }
  bool at_end();

 private:
  void read(void* dst, size_t n, const char* what);
  std::istream& is_;
  uint64_t offset_ = 0;
};

}  // namespace nsim
