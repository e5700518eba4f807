#include "lepcnn/fixedpoint.hpp"

#include <cfenv>
#include <cmath>
#include <string>

#include "lepcnn/errors.hpp"

namespace lepcnn {

void validate_params(const FpParams& p) {
  if (p.gamma < 1) throw ParamViolation("gamma >= 1 violated");
  // Compare in signed arithmetic; lambda < gamma + 1 must not wrap.
  const long slack = static_cast<long>(p.lambda) - static_cast<long>(p.gamma) - 1;
  if (slack <= 128) {
    throw ParamViolation("lambda - gamma - 1 > 128 violated: " +
                         std::to_string(p.lambda) + " - " +
                         std::to_string(p.gamma) + " - 1 = " +
                         std::to_string(slack));
  }
}

void validate_supported(const FpParams& p) {
  validate_params(p);
  if (p.gamma > 62) throw ParamViolation("gamma <= 62 violated");
  if (p.lambda + 1 > kMaskedInputBytes * 8) {
    throw ParamViolation("lambda + 1 <= 192 violated (24-byte masked elements)");
  }
  if (p.weight_bits < 1 || p.weight_bits > 32) {
    throw ParamViolation("1 <= weight_bits <= 32 violated");
  }
  if (p.scale_exponent >= p.gamma) {
    throw ParamViolation("scale_exponent < gamma violated");
  }
}

bool params_valid(const FpParams& p) noexcept {
  try {
    validate_params(p);
    return true;
  } catch (const ParamViolation&) {
    return false;
  }
}

int64_t encode(double x, const FpParams& p) {
  if (!std::isfinite(x)) throw RangeError("encode: non-finite input");
  const double scaled = std::ldexp(x, static_cast<int>(p.scale_exponent));
  const double limit = std::ldexp(1.0, static_cast<int>(p.gamma) - 1);
  if (std::fabs(scaled) >= limit) {
    throw RangeError("encode: |x| * 2^scale exceeds the gamma-bit budget");
  }
  // nearbyint honours the current rounding mode; force ties-to-even.
  const int saved = std::fegetround();
  std::fesetround(FE_TONEAREST);
  const double rounded = std::nearbyint(scaled);
  std::fesetround(saved);
  if (std::fabs(rounded) >= limit) {
    throw RangeError("encode: rounding reaches the gamma-bit budget");
  }
  return static_cast<int64_t>(rounded);
}

double decode(int64_t v, const FpParams& p) {
  return std::ldexp(static_cast<double>(v), -static_cast<int>(p.scale_exponent));
}

double decode(const Int256& v, const FpParams& p) {
  return std::ldexp(v.to_double(), -static_cast<int>(p.scale_exponent));
}

Int256 plaintext_offset(const FpParams& p) {
  return Int256::power_of_two(p.gamma - 1);
}

bool in_plaintext_range(const Int256& v, const FpParams& p) {
  return v.magnitude_bits() < p.gamma;
}

}  // namespace lepcnn
