#pragma once

#include "mgqe/common.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

namespace mgqe {

enum class CodecErrorKind { BadMagic, BadVersion, Checksum, Truncated, Malformed, Io };

inline const char* to_string(CodecErrorKind k) {
  switch (k) {
    case CodecErrorKind::BadMagic: return "bad magic";
    case CodecErrorKind::BadVersion: return "unsupported version";
    case CodecErrorKind::Checksum: return "checksum mismatch";
    case CodecErrorKind::Truncated: return "truncated file";
    case CodecErrorKind::Malformed: return "malformed file";
    case CodecErrorKind::Io: return "i/o error";
  }
  return "?";
}

class CodecError : public Error {
 public:
  CodecError(CodecErrorKind kind, const std::string& what)
      : Error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}
  CodecErrorKind kind() const { return kind_; }

 private:
  CodecErrorKind kind_;
};

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

/// Appends fixed-width fields LSB-first: bit i of a value goes to stream bit
/// (pos + i), and stream bit p lives in byte p/8 at bit p%8.
class BitWriter {
 public:
  void put(std::uint64_t value, int bits) {
    for (int i = 0; i < bits; ++i) {
      if (bit_count_ % 8 == 0) bytes_.push_back(0);
      if ((value >> i) & 1u) bytes_.back() |= static_cast<std::uint8_t>(1u << (bit_count_ % 8));
      ++bit_count_;
    }
  }
  std::uint64_t bit_count() const { return bit_count_; }
  const std::vector<std::uint8_t>& bytes() const { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
  std::uint64_t bit_count_ = 0;
};

class BitReader {
 public:
  BitReader(std::span<const std::uint8_t> bytes, std::uint64_t bit_count) : bytes_(bytes), bit_count_(bit_count) {}
  std::uint64_t get(int bits) {
    if (pos_ + static_cast<std::uint64_t>(bits) > bit_count_)
      throw CodecError(CodecErrorKind::Malformed, "code stream exhausted");
    std::uint64_t v = 0;
    for (int i = 0; i < bits; ++i, ++pos_)
      if ((bytes_[pos_ / 8] >> (pos_ % 8)) & 1u) v |= std::uint64_t{1} << i;
    return v;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::uint64_t bit_count_;
  std::uint64_t pos_ = 0;
};

/// Little-endian scalar writer over a growing byte buffer.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void bytes(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
  }
  void patch_u64(std::size_t at, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_[at + i] = static_cast<std::uint8_t>(v >> (8 * i));
  }
  std::size_t size() const { return buf_.size(); }
  std::vector<std::uint8_t>& buffer() { return buf_; }

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> b) : buf_(b) {}
  std::uint8_t u8() { return static_cast<std::uint8_t>(le(1)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::uint64_t u64() { return le(8); }
  float f32() { return std::bit_cast<float>(u32()); }
  std::span<const std::uint8_t> bytes(std::uint64_t n) {
    need(n);
    auto s = buf_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::string str() {
    const std::uint32_t n = u32();
    auto s = bytes(n);
    return std::string(s.begin(), s.end());
  }
  std::size_t remaining() const { return buf_.size() - pos_; }
  std::size_t position() const { return pos_; }

 private:
  void need(std::uint64_t n) const {
    if (n > buf_.size() - pos_) throw CodecError(CodecErrorKind::Malformed, "field runs past end of payload");
  }
  std::uint64_t le(int n) {
    need(static_cast<std::uint64_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(buf_[pos_ + i]) << (8 * i);
    pos_ += n;
    return v;
  }
  std::span<const std::uint8_t> buf_;
  std::size_t pos_ = 0;
};

}  // namespace mgqe
