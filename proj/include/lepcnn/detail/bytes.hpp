#pragma once

#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lepcnn/errors.hpp"
#include "lepcnn/int256.hpp"

namespace lepcnn::detail {

// Little-endian append-only writer.
class ByteWriter {
 public:
  std::vector<uint8_t>& bytes() { return out_; }
  std::vector<uint8_t> take() { return std::move(out_); }

  void raw(std::span<const uint8_t> data) {
    out_.insert(out_.end(), data.begin(), data.end());
  }
  void tag(std::string_view magic) {
    out_.insert(out_.end(), magic.begin(), magic.end());
  }
  void u8(uint8_t v) { out_.push_back(v); }
  void u16(uint16_t v) { le(v, 2); }
  void u32(uint32_t v) { le(v, 4); }
  void u64(uint64_t v) { le(v, 8); }
  void i64(int64_t v) { le(static_cast<uint64_t>(v), 8); }
  void integer(const Int256& v, size_t width, bool is_signed) {
    const size_t at = out_.size();
    out_.resize(at + width);
    v.to_le_bytes(std::span(out_.data() + at, width), is_signed);
  }

 private:
  void le(uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  std::vector<uint8_t> out_;
};

// Little-endian reader over a borrowed buffer. Running past the end throws
// E (IntegrityError for files, ProtocolError for frames).
template <class E = IntegrityError>
class ByteReader {
 public:
  explicit ByteReader(std::span<const uint8_t> data) : data_(data) {}

  size_t remaining() const { return data_.size() - pos_; }
  size_t position() const { return pos_; }
  bool done() const { return pos_ == data_.size(); }

  std::span<const uint8_t> raw(size_t n) {
    need(n);
    auto out = data_.subspan(pos_, n);
    pos_ += n;
    return out;
  }
  void expect_tag(std::string_view magic) {
    auto got = raw(magic.size());
    if (std::memcmp(got.data(), magic.data(), magic.size()) != 0) {
      throw E("bad magic, expected \"" + std::string(magic) + "\"");
    }
  }
  uint8_t u8() { return raw(1)[0]; }
  uint16_t u16() { return static_cast<uint16_t>(le(2)); }
  uint32_t u32() { return static_cast<uint32_t>(le(4)); }
  uint64_t u64() { return le(8); }
  int64_t i64() { return static_cast<int64_t>(le(8)); }
  Int256 integer(size_t width, bool is_signed) {
    return Int256::from_le_bytes(raw(width), is_signed);
  }
  // Fails unless `count` items of `width` bytes remain; guards allocations
  // sized from untrusted headers.
  void need_items(uint64_t count, size_t width) {
    if (width != 0 && count > remaining() / width) {
      throw E("truncated input: " + std::to_string(count) + " items of " +
              std::to_string(width) + " bytes declared, " +
              std::to_string(remaining()) + " bytes left");
    }
  }

 private:
  void need(size_t n) {
    if (n > remaining()) {
      throw E("truncated input: need " + std::to_string(n) + " bytes, have " +
              std::to_string(remaining()));
    }
  }
  uint64_t le(int n) {
    auto b = raw(static_cast<size_t>(n));
    uint64_t v = 0;
    for (int i = n - 1; i >= 0; --i) v = (v << 8) | b[static_cast<size_t>(i)];
    return v;
  }

  std::span<const uint8_t> data_;
  size_t pos_ = 0;
};

}  // namespace lepcnn::detail
