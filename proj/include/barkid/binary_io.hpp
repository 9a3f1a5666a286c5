#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "barkid/error.hpp"

namespace barkid {

// Little-endian byte sink for the binary container formats.
class ByteWriter {
 public:
  void bytes(const void* p, size_t n) {
    const auto* b = static_cast<const uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  void magic(std::string_view m) { bytes(m.data(), m.size()); }
  void u8(uint8_t v) { buf_.push_back(v); }
  void u16(uint16_t v) { little(v); }
  void u32(uint32_t v) { little(v); }
  void u64(uint64_t v) { little(v); }
  void f32(float v) { little(std::bit_cast<uint32_t>(v)); }
  void f64(double v) { little(std::bit_cast<uint64_t>(v)); }
  void str16(std::string_view s);
  void str32(std::string_view s);

  const std::vector<uint8_t>& buffer() const noexcept { return buf_; }
  void save(const std::filesystem::path& path) const;

 private:
  template <typename T>
  void little(T v) {
    for (size_t i = 0; i < sizeof(T); ++i) buf_.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  std::vector<uint8_t> buf_;
};

// Bounds-checked reader; running past the end throws `truncation_code`.
class ByteReader {
 public:
  explicit ByteReader(std::vector<uint8_t> data, ErrorCode truncation_code = ErrorCode::kFormat)
      : data_(std::move(data)), code_(truncation_code) {}
  static ByteReader open(const std::filesystem::path& path,
                         ErrorCode truncation_code = ErrorCode::kFormat);

  bool expect_magic(std::string_view m);
  uint8_t u8() { return static_cast<uint8_t>(little<uint8_t>()); }
  uint16_t u16() { return little<uint16_t>(); }
  uint32_t u32() { return little<uint32_t>(); }
  uint64_t u64() { return little<uint64_t>(); }
  float f32() { return std::bit_cast<float>(little<uint32_t>()); }
  double f64() { return std::bit_cast<double>(little<uint64_t>()); }
  std::string str16();
  std::string str32();

  size_t remaining() const noexcept { return data_.size() - pos_; }
  bool at_end() const noexcept { return pos_ == data_.size(); }

 private:
  void need(size_t n) const;
  template <typename T>
  T little() {
    need(sizeof(T));
    T v = 0;
    for (size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(T(data_[pos_ + i]) << (8 * i));
    pos_ += sizeof(T);
    return v;
  }
  std::vector<uint8_t> data_;
  size_t pos_ = 0;
  ErrorCode code_;
};

// 64-bit FNV-1a.
uint64_t fnv1a(std::span<const uint8_t> bytes, uint64_t seed = 0xcbf29ce484222325ULL);
uint64_t fnv1a(std::string_view s, uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(uint64_t v);

}  // namespace barkid
