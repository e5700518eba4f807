#include "lepcnn/integrity.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_map>

#include "lepcnn/engine.hpp"
#include "lepcnn/errors.hpp"

namespace lepcnn {
namespace {

void check_fraction(double f, const char* name) {
  if (!(f >= 0.0 && f <= 1.0)) {
    throw RangeError(std::string(name) + " must lie in [0, 1], got " + std::to_string(f));
  }
}

double detection_for_counts(uint64_t n, uint64_t bad, uint64_t samples) {
  if (bad == 0 || samples == 0) return 0.0;
  const uint64_t good = n - bad;
  if (samples > good) return 1.0;
  // log of prod_{j < samples} (good - j) / (n - j)
  double log_miss = 0.0;
  for (uint64_t j = 0; j < samples; ++j) {
    log_miss += std::log1p(-static_cast<double>(bad) / static_cast<double>(n - j));
  }
  return -std::expm1(log_miss);
}

}  // namespace

uint64_t fraction_count(uint64_t n, double fraction) {
  check_fraction(fraction, "fraction");
  const double x = fraction * static_cast<double>(n);
  const double snapped = x - 1e-9 * std::max(1.0, x);
  return std::min<uint64_t>(n, static_cast<uint64_t>(std::ceil(std::max(0.0, snapped))));
}

double detection_probability(uint64_t n, double theta, double r) {
  check_fraction(theta, "theta");
  check_fraction(r, "sample rate");
  return detection_for_counts(n, fraction_count(n, theta), fraction_count(n, r));
}

double min_sample_rate(uint64_t n, double theta, double target, double step) {
  if (!(target > 0.0 && target < 1.0)) throw RangeError("target must lie in (0, 1)");
  if (!(step > 0.0 && step <= 1.0)) throw RangeError("grid step must lie in (0, 1]");
  check_fraction(theta, "theta");
  const uint64_t bad = fraction_count(n, theta);
  const auto grid = static_cast<uint64_t>(std::floor(1.0 / step + 1e-9));
  const auto prob = [&](uint64_t k) {
    return detection_for_counts(n, bad, fraction_count(n, std::min(1.0, k * step)));
  };
  if (grid == 0 || prob(grid) < target) {
    throw ParamViolation("detection target " + std::to_string(target) +
                         " unreachable for N=" + std::to_string(n) +
                         ", theta=" + std::to_string(theta));
  }
  // prob is nondecreasing in k.
  uint64_t lo = 1, hi = grid;
  while (lo < hi) {
    const uint64_t mid = lo + (hi - lo) / 2;
    if (prob(mid) >= target) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  return lo * step;
}

std::vector<uint64_t> sample_without_replacement(uint64_t n, uint64_t count,
                                                 RandomSource& rng) {
  if (count > n) throw RangeError("cannot sample more elements than exist");
  // swapped[i] holds the value at slot i when it differs from i.
  std::unordered_map<uint64_t, uint64_t> swapped;
  const auto value_at = [&](uint64_t i) {
    const auto it = swapped.find(i);
    return it == swapped.end() ? i : it->second;
  };
  std::vector<uint64_t> out;
  out.reserve(count);
  for (uint64_t i = 0; i < count; ++i) {
    const uint64_t j = i + rng.uniform_below(n - i);
    const uint64_t vj = value_at(j);
    swapped[j] = value_at(i);
    out.push_back(vj);
  }
  return out;
}

AuditPlan make_audit_plan(uint64_t n, double rate, RandomSource& rng) {
  AuditPlan plan{n, rate, sample_without_replacement(n, fraction_count(n, rate), rng)};
  std::sort(plan.positions.begin(), plan.positions.end());
  return plan;
}

AuditResult audit_conv(const Tensor3& returned, const AuditPlan& plan,
                       const Tensor3& masked_input, const ConvLayerSpec& spec,
                       const ConvParams& params) {
  const Shape3 out = spec.output_shape();
  if (returned.shape() != out) {
    throw DimensionError("audited conv result is " + returned.shape().to_string() +
                         ", expected " + out.to_string());
  }
  if (plan.n != out.size()) throw DimensionError("audit plan size does not match layer output");
  AuditResult result;
  for (uint64_t p : plan.positions) {
    const uint32_t h = static_cast<uint32_t>(p % out.depth);
    const uint64_t yx = p / out.depth;
    const uint32_t x = static_cast<uint32_t>(yx % out.width);
    const uint32_t y = static_cast<uint32_t>(yx / out.width);
    ++result.samples;
    result.flops += 2 * spec.fan_in();
    if (conv_output_at(masked_input, spec, params, y, x, h) != returned[p]) {
      result.passed = false;
      result.position = p;
      return result;
    }
  }
  return result;
}

AuditResult audit_fc(std::span<const Int256> returned, const AuditPlan& plan,
                     std::span<const Int256> masked_input, const FcLayerSpec& spec,
                     const FcParams& params) {
  if (returned.size() != spec.neuron_count || plan.n != spec.neuron_count) {
    throw DimensionError("audited fc result length does not match layer");
  }
  AuditResult result;
  for (uint64_t p : plan.positions) {
    ++result.samples;
    result.flops += 2 * uint64_t{spec.input_length};
    if (fc_output_at(masked_input, spec, params, static_cast<uint32_t>(p)) != returned[p]) {
      result.passed = false;
      result.position = p;
      return result;
    }
  }
  return result;
}

std::vector<uint64_t> corrupt(std::span<Int256> returned, const AdversaryConfig& adversary,
                              unsigned lambda, RandomSource& rng) {
  const uint64_t n = returned.size();
  std::vector<uint64_t> positions =
      sample_without_replacement(n, fraction_count(n, adversary.theta), rng);
  std::sort(positions.begin(), positions.end());
  for (uint64_t p : positions) {
    returned[p] = rng.uniform_bits(lambda);
  }
  return positions;
}

}  // namespace lepcnn
