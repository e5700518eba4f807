#pragma once

#include <cstdint>

#include "lepcnn/int256.hpp"

namespace lepcnn {

// Fixed-point and masking parameters shared by a whole network.
struct FpParams {
  unsigned gamma = 30;          // plaintext bit width (signed)
  unsigned lambda = 160;        // mask bit width
  unsigned scale_exponent = 8;  // values are integers scaled by 2^scale_exponent
  unsigned weight_bits = 16;    // signed width of quantized weights

  friend bool operator==(const FpParams&, const FpParams&) = default;
};

// Widths of the fixed element encodings used by key files and the wire.
inline constexpr unsigned kMaskedInputBytes = 24;
inline constexpr unsigned kMaskedOutputBytes = 32;

// Throws ParamViolation naming the failed relation: gamma >= 1 and the
// statistical hiding bound lambda - gamma - 1 > 128.
void validate_params(const FpParams& p);
bool params_valid(const FpParams& p) noexcept;

// validate_params plus the representability limits of this implementation:
// gamma <= 62, lambda + 1 <= 192 (24-byte masked elements),
// 1 <= weight_bits <= 32, scale_exponent < gamma.
void validate_supported(const FpParams& p);

// Round-half-to-even of x * 2^scale_exponent. Throws RangeError when the
// result's magnitude reaches 2^(gamma-1).
int64_t encode(double x, const FpParams& p);
double decode(int64_t v, const FpParams& p);
double decode(const Int256& v, const FpParams& p);

// Offset that maps a signed gamma-bit plaintext into [0, 2^gamma).
Int256 plaintext_offset(const FpParams& p);

// True when |v| < 2^(gamma-1), the budget every plaintext entering a masked
// layer must respect.
bool in_plaintext_range(const Int256& v, const FpParams& p);

// Floor-shift an accumulator-scale value back to activation scale.
inline Int256 rescale(const Int256& acc, const FpParams& p) {
  return acc >> p.scale_exponent;
}

}  // namespace lepcnn
