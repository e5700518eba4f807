#include "lepcnn/metrics.hpp"

#include <cstdio>
#include <sstream>

#include "lepcnn/detail/overloaded.hpp"
#include "lepcnn/engine.hpp"
#include "lepcnn/errors.hpp"
#include "lepcnn/integrity.hpp"

namespace lepcnn {
namespace {

// num / den in hundredths, rounded half up.
std::string hundredths(unsigned __int128 num, unsigned __int128 den) {
  if (den == 0) return "n/a";
  const auto h = static_cast<uint64_t>((200 * num + den) / (2 * den));
  char buf[32];
  std::snprintf(buf, sizeof buf, "%llu.%02llu", static_cast<unsigned long long>(h / 100),
                static_cast<unsigned long long>(h % 100));
  return buf;
}

std::string grouped(uint64_t v) {
  std::string digits = std::to_string(v);
  std::string out;
  for (size_t i = 0; i < digits.size(); ++i) {
    if (i != 0 && (digits.size() - i) % 3 == 0) out += ',';
    out += digits[i];
  }
  return out;
}

uint64_t edge_share(const LayerCost& c) { return c.offloaded_flops - c.validation_flops; }
uint64_t all_work(const LayerCost& c) { return c.offloaded_flops + c.local_flops(); }

}  // namespace

double LayerCost::offload_fraction() const {
  const uint64_t den = all_work(*this);
  return den == 0 ? 0.0 : static_cast<double>(edge_share(*this)) / static_cast<double>(den);
}

uint64_t CostReport::total_local_flops() const {
  uint64_t t = 0;
  for (const LayerCost& c : layers) t += c.local_flops();
  return t;
}

uint64_t CostReport::total_client_flops() const {
  uint64_t t = 0;
  for (const LayerCost& c : layers) t += c.client_flops();
  return t;
}

uint64_t CostReport::total_offloaded_flops() const {
  uint64_t t = 0;
  for (const LayerCost& c : layers) t += c.offloaded_flops;
  return t;
}

uint64_t CostReport::total_comm_elements() const {
  uint64_t t = 0;
  for (const LayerCost& c : layers) t += c.comm_elements;
  return t;
}

uint64_t CostReport::total_storage_elements() const {
  uint64_t t = 0;
  for (const LayerCost& c : layers) t += c.storage_elements;
  return t;
}

double CostReport::total_offload_fraction() const {
  uint64_t num = 0, den = 0;
  for (const LayerCost& c : layers) {
    num += edge_share(c);
    den += all_work(c);
  }
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

CostReport analyze(const NetworkSpec& net, const std::optional<AuditSettings>& audit) {
  const std::vector<Shape3> shapes = net.shapes();
  CostReport report;
  report.audited = audit.has_value();
  size_t conv_seen = 0, fc_seen = 0;
  for (uint32_t i = 0; i < net.layers.size(); ++i) {
    const LayerSpec& layer = net.layers[i];
    if (!is_offloaded(layer)) {
      report.nonlinear_flops += nonlinear_flops(layer, shapes[i]);
      continue;
    }
    LayerCost c;
    c.layer_index = i;
    std::visit(
        detail::Overloaded{
            [&](const ConvLayerSpec& spec) {
              c.name = "Conv-" + std::to_string(++conv_seen);
              const LayerFlops f = layer_flops(spec);
              c.enc_flops = f.local_enc;
              c.dec_flops = f.local_dec;
              c.offloaded_flops = f.offloaded;
              c.comm_elements = f.local_enc + f.local_dec;
              c.storage_elements = c.comm_elements;
              if (audit) {
                if (conv_seen > audit->conv_rates.size()) {
                  throw ParamViolation("audit settings give " +
                                       std::to_string(audit->conv_rates.size()) +
                                       " sample rates, network has more conv layers");
                }
                c.sample_rate = audit->conv_rates[conv_seen - 1];
                const uint64_t n = spec.output_shape().size();
                c.validation_flops = 2 * spec.fan_in() * fraction_count(n, c.sample_rate);
                c.storage_elements += uint64_t{spec.kernel_count} * spec.kernel_side *
                                      spec.kernel_side;
              }
            },
            [&](const FcLayerSpec& spec) {
              c.name = "FC-" + std::to_string(++fc_seen);
              const LayerFlops f = layer_flops(spec);
              c.enc_flops = f.local_enc;
              c.dec_flops = f.local_dec;
              c.offloaded_flops = f.offloaded;
              c.comm_elements = f.local_enc + f.local_dec;
              c.storage_elements = c.comm_elements;
            },
            [](const auto&) {}},
        layer);
    report.layers.push_back(std::move(c));
  }
  if (audit && conv_seen != audit->conv_rates.size()) {
    throw ParamViolation("audit settings give " + std::to_string(audit->conv_rates.size()) +
                         " sample rates for " + std::to_string(conv_seen) + " conv layers");
  }
  return report;
}

uint64_t storage_overhead(const NetworkSpec& net, bool audit) {
  std::optional<AuditSettings> settings;
  if (audit) {
    settings.emplace();
    for (const LayerSpec& l : net.layers) {
      if (std::holds_alternative<ConvLayerSpec>(l)) settings->conv_rates.push_back(0.0);
    }
  }
  return analyze(net, settings).total_storage_elements();
}

std::string percent_2dp(uint64_t num, uint64_t den) {
  return hundredths(static_cast<unsigned __int128>(num) * 100, den);
}

std::string kib_2dp(uint64_t elements) {
  return hundredths(static_cast<unsigned __int128>(elements) * kBytesPerElement, 1024);
}

std::string mib_2dp(uint64_t elements) {
  return hundredths(static_cast<unsigned __int128>(elements) * kBytesPerElement, 1024 * 1024);
}

std::string CostReport::to_table() const {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-7s %17s %17s %21s %9s %12s %12s\n", "Layer",
                "Client FLOPs", "Validation FLOPs", "Offloaded FLOPs", "Offload%",
                "Comm KB", "Storage KB");
  out << line;
  uint64_t num = 0, den = 0;
  for (const LayerCost& c : layers) {
    num += edge_share(c);
    den += all_work(c);
    std::snprintf(line, sizeof line, "%-7s %17s %17s %21s %8s%% %12s %12s\n", c.name.c_str(),
                  grouped(c.client_flops()).c_str(), grouped(c.validation_flops).c_str(),
                  grouped(c.offloaded_flops).c_str(),
                  percent_2dp(edge_share(c), all_work(c)).c_str(),
                  kib_2dp(c.comm_elements).c_str(), kib_2dp(c.storage_elements).c_str());
    out << line;
  }
  std::snprintf(line, sizeof line, "%-7s %17s %17s %21s %8s%% %9s MB %9s MB\n", "Total",
                grouped(total_client_flops()).c_str(),
                grouped(total_client_flops() - total_local_flops()).c_str(),
                grouped(total_offloaded_flops()).c_str(), percent_2dp(num, den).c_str(),
                mib_2dp(total_comm_elements()).c_str(),
                mib_2dp(total_storage_elements()).c_str());
  out << line;
  out << "Activation and pooling FLOPs on the client: " << grouped(nonlinear_flops) << "\n";
  out << "KB and MB are 1024 and 1024^2 bytes at " << kBytesPerElement << " bytes per element.\n";
  return out.str();
}

std::string CostReport::to_csv() const {
  std::ostringstream out;
  out << "layer,index,enc_flops,dec_flops,validation_flops,client_flops,offloaded_flops,"
         "offload_pct,sample_rate,comm_elements,comm_bytes20,comm_kib,storage_elements,"
         "storage_bytes20,storage_kib\n";
  for (const LayerCost& c : layers) {
    char rate[32];
    std::snprintf(rate, sizeof rate, "%.4f", c.sample_rate);
    out << c.name << ',' << c.layer_index << ',' << c.enc_flops << ',' << c.dec_flops << ','
        << c.validation_flops << ',' << c.client_flops() << ',' << c.offloaded_flops << ','
        << percent_2dp(edge_share(c), all_work(c)) << ',' << rate << ',' << c.comm_elements
        << ',' << c.comm_elements * kBytesPerElement << ',' << kib_2dp(c.comm_elements) << ','
        << c.storage_elements << ',' << c.storage_elements * kBytesPerElement << ','
        << kib_2dp(c.storage_elements) << '\n';
  }
  LayerCost t;
  uint64_t num = 0, den = 0;
  for (const LayerCost& c : layers) {
    t.enc_flops += c.enc_flops;
    t.dec_flops += c.dec_flops;
    t.validation_flops += c.validation_flops;
    t.offloaded_flops += c.offloaded_flops;
    t.comm_elements += c.comm_elements;
    t.storage_elements += c.storage_elements;
    num += edge_share(c);
    den += all_work(c);
  }
  out << "Total,," << t.enc_flops << ',' << t.dec_flops << ',' << t.validation_flops << ','
      << t.client_flops() << ',' << t.offloaded_flops << ',' << percent_2dp(num, den) << ",,"
      << t.comm_elements << ',' << t.comm_elements * kBytesPerElement << ','
      << kib_2dp(t.comm_elements) << ',' << t.storage_elements << ','
      << t.storage_elements * kBytesPerElement << ',' << kib_2dp(t.storage_elements) << '\n';
  return out.str();
}

}  // namespace lepcnn
