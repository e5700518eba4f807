#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lepcnn/network.hpp"
#include "lepcnn/rng.hpp"
#include "lepcnn/tensor.hpp"

namespace lepcnn {

// ceil(fraction * n) with a tiny relative snap, so 0.01 * 290400 gives 2904
// rather than 2905 from binary rounding. Throws RangeError unless
// 0 <= fraction <= 1.
uint64_t fraction_count(uint64_t n, double fraction);

// Probability that ceil(r N) samples drawn without replacement hit at least
// one of ceil(theta N) corrupted elements:
//   1 - C(N - bad, samples) / C(N, samples)
// evaluated in log space. 1 when samples > N - bad, 0 when bad or samples
// is 0.
double detection_probability(uint64_t n, double theta, double r);

// Smallest r = k * step (k >= 1) reaching `target`. Throws RangeError for a
// target outside (0, 1) or a step outside (0, 1], ParamViolation when even
// r = 1 cannot reach it.
double min_sample_rate(uint64_t n, double theta, double target, double step = 1e-4);

// `count` distinct values below n, uniform, via a partial Fisher-Yates
// shuffle over a sparse permutation.
std::vector<uint64_t> sample_without_replacement(uint64_t n, uint64_t count,
                                                 RandomSource& rng);

struct AuditPlan {
  uint64_t n = 0;      // returned element count
  double rate = 0.0;
  std::vector<uint64_t> positions;  // ascending, distinct, each < n
};

AuditPlan make_audit_plan(uint64_t n, double rate, RandomSource& rng);

struct AuditResult {
  bool passed = true;
  uint64_t position = 0;  // first mismatching position when failed
  uint64_t samples = 0;
  uint64_t flops = 0;     // 2 D k^2 per conv sample, 2 m per fc sample
};

// Recomputes each planned output element from the masked input the client
// sent and compares it with what the edge returned. Position p indexes the
// returned tensor in (y, x, kernel) order.
AuditResult audit_conv(const Tensor3& returned, const AuditPlan& plan,
                       const Tensor3& masked_input, const ConvLayerSpec& spec,
                       const ConvParams& params);
AuditResult audit_fc(std::span<const Int256> returned, const AuditPlan& plan,
                     std::span<const Int256> masked_input, const FcLayerSpec& spec,
                     const FcParams& params);

struct AdversaryConfig {
  double theta = 0.0;
};

// Replaces exactly ceil(theta N) uniformly chosen elements with fresh
// uniform lambda-bit values. Returns the replaced positions, ascending.
std::vector<uint64_t> corrupt(std::span<Int256> returned, const AdversaryConfig& adversary,
                              unsigned lambda, RandomSource& rng);

}  // namespace lepcnn
