#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <span>
#include <string>

namespace lepcnn {

// Fixed-width 256-bit two's-complement integer.
//
// Every quantity in the masked pipeline (λ-bit masks, ciphertexts and the
// accumulated conv / fc outputs over them) is bounded well below 2^255 by the
// width check done at model load, so arithmetic here wraps silently like the
// builtin unsigned types do. Limbs are little-endian.
class Int256 {
 public:
  using Limbs = std::array<uint64_t, 4>;

  constexpr Int256() = default;
  constexpr Int256(int64_t v)  // NOLINT: implicit on purpose, like a builtin
      : limbs_{static_cast<uint64_t>(v), v < 0 ? ~0ULL : 0ULL,
               v < 0 ? ~0ULL : 0ULL, v < 0 ? ~0ULL : 0ULL} {}

  static constexpr Int256 from_limbs(const Limbs& limbs) {
    Int256 out;
    out.limbs_ = limbs;
    return out;
  }
  // 2^bits, bits < 255.
  static Int256 power_of_two(unsigned bits);

  // Little-endian decoding. `width` bytes, at most 32. Signed input is
  // sign-extended from the top bit.
  static Int256 from_le_bytes(std::span<const uint8_t> bytes, bool is_signed);
  // Writes the low `out.size()` bytes. Throws RangeError when the value is
  // not representable in that width (unsigned or signed two's complement).
  void to_le_bytes(std::span<uint8_t> out, bool is_signed) const;

  const Limbs& limbs() const { return limbs_; }

  bool is_negative() const { return (limbs_[3] >> 63) != 0; }
  bool is_zero() const {
    return (limbs_[0] | limbs_[1] | limbs_[2] | limbs_[3]) == 0;
  }

  // Number of significant bits of |*this|; 0 for zero.
  unsigned magnitude_bits() const;
  // True when -2^(bits-1) <= *this < 2^(bits-1).
  bool fits_signed(unsigned bits) const;
  // True when 0 <= *this < 2^bits.
  bool fits_unsigned(unsigned bits) const;

  // Throws RangeError if the value does not fit in int64_t.
  int64_t to_int64() const;
  double to_double() const;
  std::string to_string() const;

  Int256& operator+=(const Int256& rhs) {
    unsigned __int128 carry = 0;
    for (int i = 0; i < 4; ++i) {
      carry += static_cast<unsigned __int128>(limbs_[i]) + rhs.limbs_[i];
      limbs_[i] = static_cast<uint64_t>(carry);
      carry >>= 64;
    }
    return *this;
  }
  Int256& operator-=(const Int256& rhs) {
    uint64_t borrow = 0;
    for (int i = 0; i < 4; ++i) {
      const uint64_t a = limbs_[i];
      const uint64_t b = rhs.limbs_[i];
      const uint64_t d = a - b - borrow;
      borrow = (a < b) || (a - b < borrow) ? 1 : 0;
      limbs_[i] = d;
    }
    return *this;
  }

  // *this += x * w. The hot loop of every conv / fc evaluation.
  void add_product(const Int256& x, int64_t w) {
    if (w == 0) return;
    const bool negative = w < 0;
    const uint64_t mag =
        negative ? static_cast<uint64_t>(-(w + 1)) + 1 : static_cast<uint64_t>(w);
    Limbs p;
    unsigned __int128 carry = 0;
    for (int i = 0; i < 4; ++i) {
      carry += static_cast<unsigned __int128>(x.limbs_[i]) * mag;
      p[i] = static_cast<uint64_t>(carry);
      carry >>= 64;
    }
    if (negative) {
      *this -= from_limbs(p);
    } else {
      *this += from_limbs(p);
    }
  }

  Int256 operator-() const {
    Int256 out;
    out -= *this;
    return out;
  }
  friend Int256 operator+(Int256 a, const Int256& b) { return a += b; }
  friend Int256 operator-(Int256 a, const Int256& b) { return a -= b; }
  friend Int256 operator*(const Int256& a, int64_t w) {
    Int256 out;
    out.add_product(a, w);
    return out;
  }

  // Arithmetic (sign-propagating) shifts; shift < 256.
  Int256 operator>>(unsigned shift) const;
  Int256 operator<<(unsigned shift) const;

  friend bool operator==(const Int256& a, const Int256& b) = default;
  friend std::strong_ordering operator<=>(const Int256& a, const Int256& b);

 private:
  Limbs limbs_{};
};

}  // namespace lepcnn
