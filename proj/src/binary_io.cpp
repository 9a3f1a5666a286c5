#include "barkid/binary_io.hpp"

#include <cstdio>
#include <fstream>
#include <iterator>

namespace barkid {

void ByteWriter::str16(std::string_view s) {
  if (s.size() > 0xffff) throw Error(ErrorCode::kParameter, "string too long for u16 length");
  u16(static_cast<uint16_t>(s.size()));
  bytes(s.data(), s.size());
}

void ByteWriter::str32(std::string_view s) {
  u32(static_cast<uint32_t>(s.size()));
  bytes(s.data(), s.size());
}

void ByteWriter::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(buf_.data()), static_cast<std::streamsize>(buf_.size()));
  if (!out) throw Error(ErrorCode::kIo, "short write to " + path.string());
}

ByteReader ByteReader::open(const std::filesystem::path& path, ErrorCode truncation_code) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<uint8_t> data{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return ByteReader(std::move(data), truncation_code);
}

bool ByteReader::expect_magic(std::string_view m) {
  if (remaining() < m.size()) return false;
  const bool ok = std::memcmp(data_.data() + pos_, m.data(), m.size()) == 0;
  pos_ += m.size();
  return ok;
}

std::string ByteReader::str16() {
  const size_t n = u16();
  need(n);
  std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
  pos_ += n;
  return s;
}

std::string ByteReader::str32() {
  const size_t n = u32();
  need(n);
  std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
  pos_ += n;
  return s;
}

void ByteReader::need(size_t n) const {
  if (remaining() < n) {
    throw Error(code_, "truncated input: need " + std::to_string(n) + " bytes at offset " +
                           std::to_string(pos_));
  }
}

uint64_t fnv1a(std::span<const uint8_t> bytes, uint64_t seed) {
  uint64_t h = seed;
  for (uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

uint64_t fnv1a(std::string_view s, uint64_t seed) {
  return fnv1a(std::span(reinterpret_cast<const uint8_t*>(s.data()), s.size()), seed);
}

std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace barkid
