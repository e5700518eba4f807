#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lepcnn/network.hpp"

namespace lepcnn {

// Integrity-check settings for cost accounting: one sample rate per conv
// layer, in network order.
struct AuditSettings {
  double theta = 0.01;
  std::vector<double> conv_rates;
};

struct LayerCost {
  uint32_t layer_index = 0;
  std::string name;  // Conv-1, FC-2, ...
  uint64_t enc_flops = 0;
  uint64_t dec_flops = 0;
  uint64_t validation_flops = 0;  // 2 D k^2 ceil(r H o^2) with audit
  uint64_t offloaded_flops = 0;
  double sample_rate = 0.0;
  uint64_t comm_elements = 0;     // D n^2 + H o^2, or m + T
  uint64_t storage_elements = 0;  // comm_elements (+ H k^2 with audit)

  uint64_t local_flops() const { return enc_flops + dec_flops; }
  uint64_t client_flops() const { return local_flops() + validation_flops; }
  // Edge work that was not redone on the client, over all work done.
  double offload_fraction() const;
};

struct CostReport {
  std::vector<LayerCost> layers;
  uint64_t nonlinear_flops = 0;  // relu / pooling on the client, own counting
  bool audited = false;

  uint64_t total_local_flops() const;
  uint64_t total_client_flops() const;
  uint64_t total_offloaded_flops() const;
  uint64_t total_comm_elements() const;
  uint64_t total_storage_elements() const;
  double total_offload_fraction() const;

  std::string to_table() const;
  std::string to_csv() const;
};

inline constexpr uint64_t kBytesPerElement = 20;

// Throws ParamViolation if `audit` does not give one rate per conv layer.
CostReport analyze(const NetworkSpec& net, const std::optional<AuditSettings>& audit = {});

// Client-side key (and, with audit, kernel) storage in elements.
uint64_t storage_overhead(const NetworkSpec& net, bool audit);

// Display helpers: exact half-up rounding of num / den to 2 decimals.
std::string percent_2dp(uint64_t num, uint64_t den);
std::string kib_2dp(uint64_t elements);
std::string mib_2dp(uint64_t elements);

}  // namespace lepcnn
