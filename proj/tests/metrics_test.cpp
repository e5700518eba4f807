#include "lepcnn/metrics.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "lepcnn/errors.hpp"

using namespace lepcnn;

namespace {

const AuditSettings kAudit{0.01, {0.002, 0.003, 0.008, 0.008, 0.011}};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct ConvGeom {
  uint64_t n, d, k, h, s, p;
  uint64_t o() const { return (n - k + 2 * p) / s + 1; }
};

const ConvGeom kConv[] = {{227, 3, 11, 96, 4, 0},
                          {27, 96, 5, 256, 1, 2},
                          {13, 256, 3, 384, 1, 1},
                          {13, 384, 3, 384, 1, 1},
                          {13, 384, 3, 256, 1, 1}};
const uint64_t kFc[][2] = {{9216, 4096}, {4096, 4096}, {4096, 1000}};

}  // namespace

TEST_CASE("alexnet without audit") {
  const CostReport r = analyze(alexnet_spec());
  REQUIRE(r.layers.size() == 8);

  SUBCASE("client and offloaded FLOPs per layer") {
    const uint64_t client[] = {444987, 256608, 108160, 129792, 108160, 13312, 8192, 5096};
    const uint64_t edge[] = {210830400, 895795200, 299040768, 448561152,
                             299040768, 75497472,  33554432,  8192000};
    const char* names[] = {"Conv-1", "Conv-2", "Conv-3", "Conv-4",
                           "Conv-5", "FC-1",   "FC-2",   "FC-3"};
    for (size_t i = 0; i < 8; ++i) {
      CAPTURE(i);
      CHECK(r.layers[i].name == names[i]);
      CHECK(r.layers[i].client_flops() == client[i]);
      CHECK(r.layers[i].offloaded_flops == edge[i]);
    }
    CHECK(r.total_client_flops() == 1074307);
    CHECK(r.total_offloaded_flops() == 2270512192);
  }
  SUBCASE("agrees with the cost formulas") {
    for (size_t i = 0; i < 5; ++i) {
      const ConvGeom& g = kConv[i];
      CHECK(r.layers[i].enc_flops == g.d * g.n * g.n);
      CHECK(r.layers[i].dec_flops == g.h * g.o() * g.o());
      CHECK(r.layers[i].offloaded_flops == 2 * g.d * g.h * g.k * g.k * g.o() * g.o());
      CHECK(r.layers[i].comm_elements == g.d * g.n * g.n + g.h * g.o() * g.o());
    }
    for (size_t i = 0; i < 3; ++i) {
      CHECK(r.layers[5 + i].local_flops() == kFc[i][0] + kFc[i][1]);
      CHECK(r.layers[5 + i].offloaded_flops == 2 * kFc[i][0] * kFc[i][1]);
    }
  }
  SUBCASE("offload percentages") {
    const char* pct[] = {"99.79", "99.97", "99.96", "99.97", "99.96", "99.98", "99.98", "99.94"};
    for (size_t i = 0; i < 8; ++i) {
      const LayerCost& c = r.layers[i];
      CHECK(percent_2dp(c.offloaded_flops, c.offloaded_flops + c.local_flops()) == pct[i]);
      CHECK(c.offload_fraction() * 100 == doctest::Approx(std::stod(pct[i])).epsilon(0.0001));
    }
    CHECK(r.total_offload_fraction() * 100 == doctest::Approx(99.95).epsilon(0.0001));
  }
  SUBCASE("communication and storage") {
    const char* kib[] = {"8691.15", "5011.88", "2112.50", "2535.00",
                         "2112.50", "260.00",  "160.00",  "99.53"};
    for (size_t i = 0; i < 8; ++i) {
      CHECK(kib_2dp(r.layers[i].comm_elements) == kib[i]);
      CHECK(r.layers[i].storage_elements == r.layers[i].comm_elements);
    }
    CHECK(mib_2dp(r.total_comm_elements()) == "20.49");
    CHECK(storage_overhead(alexnet_spec(), false) == r.total_comm_elements());
  }
  SUBCASE("offloaded over client work is far beyond 90x") {
    const double ratio = static_cast<double>(r.total_offloaded_flops()) / r.total_client_flops();
    CHECK(ratio >= 90.0);
    const double with_nonlinear = static_cast<double>(r.total_offloaded_flops()) /
                                  static_cast<double>(r.total_client_flops() + r.nonlinear_flops);
    CHECK(with_nonlinear >= 90.0);
  }
}

TEST_CASE("alexnet with audit") {
  const CostReport r = analyze(alexnet_spec(), kAudit);
  REQUIRE(r.layers.size() == 8);
  const uint64_t client[] = {866793, 2944608, 2504320, 3724032, 3398272};
  const char* pct[] = {"99.59", "99.67", "99.16", "99.17", "98.86"};
  const char* storage[] = {"8918.03", "5136.88", "2180.00", "2602.50", "2157.50"};
  for (size_t i = 0; i < 5; ++i) {
    CAPTURE(i);
    const LayerCost& c = r.layers[i];
    const ConvGeom& g = kConv[i];
    const auto samples = static_cast<uint64_t>(
        std::ceil(kAudit.conv_rates[i] * g.h * g.o() * g.o() - 1e-6));
    CHECK(c.validation_flops == 2 * g.d * g.k * g.k * samples);
    CHECK(c.client_flops() == client[i]);
    CHECK(percent_2dp(c.offloaded_flops - c.validation_flops,
                      c.offloaded_flops + c.local_flops()) == pct[i]);
    CHECK(kib_2dp(c.storage_elements) == storage[i]);
    CHECK(c.storage_elements == c.comm_elements + g.h * g.k * g.k);
  }
  const uint64_t delta = r.layers[4].storage_elements - r.layers[4].comm_elements;
  CHECK(kib_2dp(delta) == "45.00");
  for (size_t i = 5; i < 8; ++i) CHECK(r.layers[i].validation_flops == 0);
  CHECK(storage_overhead(alexnet_spec(), true) > storage_overhead(alexnet_spec(), false));
  CHECK_THROWS_AS(analyze(alexnet_spec(), AuditSettings{0.01, {0.01}}), ParamViolation);
}

TEST_CASE("single 1x1 conv is half offloaded") {
  NetworkSpec net;
  net.input = {1, 1, 1};
  net.layers = {ConvLayerSpec{1, 1, 1, 1, 1, 0}};
  const CostReport r = analyze(net);
  CHECK(r.layers[0].offloaded_flops == 2);
  CHECK(r.layers[0].local_flops() == 2);
  CHECK(r.total_offload_fraction() == 0.5);
  CHECK(percent_2dp(2, 4) == "50.00");
}

TEST_CASE("rounding helpers round half up") {
  CHECK(percent_2dp(1, 8) == "12.50");
  CHECK(percent_2dp(1, 3) == "33.33");
  CHECK(percent_2dp(2, 3) == "66.67");
  CHECK(percent_2dp(1, 80000) == "0.00");
  CHECK(percent_2dp(1, 40000) == "0.00");  // 0.0025 -> 0.00
  CHECK(percent_2dp(1, 20000) == "0.01");  // exactly 0.005 rounds up
  CHECK(kib_2dp(0) == "0.00");
  CHECK(kib_2dp(1) == "0.02");  // 20 / 1024 = 0.01953
}

TEST_CASE("report output matches the golden files") {
  CHECK(analyze(alexnet_spec()).to_csv() == slurp(LEPCNN_GOLDEN_DIR "/alexnet.csv"));
  CHECK(analyze(alexnet_spec(), kAudit).to_csv() ==
        slurp(LEPCNN_GOLDEN_DIR "/alexnet_audit.csv"));
  CHECK(analyze(alexnet_spec()).to_table() == slurp(LEPCNN_GOLDEN_DIR "/alexnet.txt"));
}
