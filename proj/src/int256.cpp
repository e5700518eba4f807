#include "lepcnn/int256.hpp"

#include <algorithm>
#include <cmath>

#include "lepcnn/errors.hpp"

namespace lepcnn {

Int256 Int256::power_of_two(unsigned bits) {
  if (bits >= 255) throw RangeError("power_of_two: exponent out of range");
  Limbs l{};
  l[bits / 64] = 1ULL << (bits % 64);
  return from_limbs(l);
}

Int256 Int256::from_le_bytes(std::span<const uint8_t> bytes, bool is_signed) {
  if (bytes.size() > 32 || bytes.empty()) {
    throw RangeError("from_le_bytes: width must be 1..32 bytes");
  }
  Limbs l{};
  for (size_t i = 0; i < bytes.size(); ++i) {
    l[i / 8] |= static_cast<uint64_t>(bytes[i]) << (8 * (i % 8));
  }
  if (is_signed && (bytes.back() & 0x80) != 0) {
    for (size_t i = bytes.size(); i < 32; ++i) {
      l[i / 8] |= 0xFFULL << (8 * (i % 8));
    }
  }
  return from_limbs(l);
}

void Int256::to_le_bytes(std::span<uint8_t> out, bool is_signed) const {
  const unsigned bits = static_cast<unsigned>(out.size()) * 8;
  const bool ok = is_signed ? fits_signed(bits) : fits_unsigned(bits);
  if (!ok) {
    throw RangeError("value " + to_string() + " does not fit in " +
                     std::to_string(out.size()) + " bytes");
  }
  for (size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<uint8_t>(limbs_[i / 8] >> (8 * (i % 8)));
  }
}

unsigned Int256::magnitude_bits() const {
  const Int256 mag = is_negative() ? -*this : *this;
  for (int i = 3; i >= 0; --i) {
    if (mag.limbs_[i] != 0) {
      return static_cast<unsigned>(64 * i + 64 - __builtin_clzll(mag.limbs_[i]));
    }
  }
  return 0;
}

bool Int256::fits_signed(unsigned bits) const {
  if (bits >= 256) return true;
  if (bits == 0) return false;
  // -2^(bits-1) <= v < 2^(bits-1)  <=>  v >> (bits-1) is 0 or -1.
  const Int256 top = *this >> (bits - 1);
  return top.is_zero() || top == Int256(-1);
}

bool Int256::fits_unsigned(unsigned bits) const {
  if (is_negative()) return false;
  if (bits >= 255) return true;
  return (*this >> bits).is_zero();
}

int64_t Int256::to_int64() const {
  if (!fits_signed(64)) throw RangeError("value exceeds int64: " + to_string());
  return static_cast<int64_t>(limbs_[0]);
}

double Int256::to_double() const {
  const bool neg = is_negative();
  const Int256 mag = neg ? -*this : *this;
  double out = 0.0;
  for (int i = 3; i >= 0; --i) out = out * 18446744073709551616.0 + mag.limbs_[i];
  return neg ? -out : out;
}

std::string Int256::to_string() const {
  const bool neg = is_negative();
  Limbs mag = (neg ? -*this : *this).limbs_;
  std::string digits;
  auto nonzero = [&] {
    return (mag[0] | mag[1] | mag[2] | mag[3]) != 0;
  };
  do {
    unsigned __int128 rem = 0;
    for (int i = 3; i >= 0; --i) {
      const unsigned __int128 cur = (rem << 64) | mag[i];
      mag[i] = static_cast<uint64_t>(cur / 10);
      rem = cur % 10;
    }
    digits.push_back(static_cast<char>('0' + static_cast<int>(rem)));
  } while (nonzero());
  if (neg) digits.push_back('-');
  std::reverse(digits.begin(), digits.end());
  return digits;
}

Int256 Int256::operator>>(unsigned shift) const {
  if (shift == 0) return *this;
  const uint64_t fill = is_negative() ? ~0ULL : 0ULL;
  if (shift >= 256) return from_limbs({fill, fill, fill, fill});
  const unsigned limb_shift = shift / 64;
  const unsigned bit_shift = shift % 64;
  Limbs out{};
  for (unsigned i = 0; i < 4; ++i) {
    const unsigned src = i + limb_shift;
    const uint64_t lo = src < 4 ? limbs_[src] : fill;
    const uint64_t hi = src + 1 < 4 ? limbs_[src + 1] : fill;
    out[i] = bit_shift == 0 ? lo : (lo >> bit_shift) | (hi << (64 - bit_shift));
  }
  return from_limbs(out);
}

Int256 Int256::operator<<(unsigned shift) const {
  if (shift == 0) return *this;
  if (shift >= 256) return Int256();
  const unsigned limb_shift = shift / 64;
  const unsigned bit_shift = shift % 64;
  Limbs out{};
  for (unsigned i = limb_shift; i < 4; ++i) {
    const unsigned src = i - limb_shift;
    const uint64_t lo = limbs_[src];
    const uint64_t below = src > 0 ? limbs_[src - 1] : 0;
    out[i] = bit_shift == 0 ? lo : (lo << bit_shift) | (below >> (64 - bit_shift));
  }
  return from_limbs(out);
}

std::strong_ordering operator<=>(const Int256& a, const Int256& b) {
  const bool na = a.is_negative();
  const bool nb = b.is_negative();
  if (na != nb) return na ? std::strong_ordering::less : std::strong_ordering::greater;
  // Same sign: unsigned limb comparison orders two's complement correctly.
  for (int i = 3; i >= 0; --i) {
    if (a.limbs_[i] != b.limbs_[i]) {
      return a.limbs_[i] < b.limbs_[i] ? std::strong_ordering::less
                                       : std::strong_ordering::greater;
    }
  }
  return std::strong_ordering::equal;
}

}  // namespace lepcnn
