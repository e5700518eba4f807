#include <cmath>

#include "doctest.h"
#include "lepcnn/engine.hpp"
#include "lepcnn/integrity.hpp"
#include "lepcnn/masking.hpp"

using namespace lepcnn;

TEST_CASE("alexnet conv-1 masked round trip on every output") {
  SeededRandom rng(21);
  const NetworkSpec net = alexnet_spec();
  const auto& spec = std::get<ConvLayerSpec>(net.layers[0]);
  Model model = random_model(net, rng);
  const ConvParams& params = model.conv_params(0);

  ConvKeyPair key = keygen_conv(spec, params, net.fp, rng);
  const Tensor3 in = random_input(spec.input_shape(), 24, rng);
  const Tensor3 masked = ppcl_encrypt(in, key, net.fp);
  const Tensor3 out = ppcl_decrypt(edge_eval_conv(masked, spec, params), key);
  const Tensor3 expect = conv_forward(in, spec, params);
  REQUIRE(out.shape() == Shape3{55, 55, 96});
  CHECK(out.elements().size() == 290400);
  size_t mismatches = 0;
  for (size_t i = 0; i < out.elements().size(); ++i) mismatches += out[i] != expect[i];
  CHECK(mismatches == 0);
}

TEST_CASE("alexnet random model runs to a 1000-long output") {
  SeededRandom rng(22);
  const NetworkSpec net = alexnet_spec();
  const Model model = random_model(net, rng);
  model.validate();
  const Tensor3 out = infer_plain(random_input(net.input, 24, rng), model);
  CHECK(out.shape() == Shape3{1, 1, 1000});
}

TEST_CASE("conv-1 audit detection at theta=1%, r=0.2% over 1000 trials") {
  SeededRandom rng(23);
  const NetworkSpec net = alexnet_spec();
  const auto& spec = std::get<ConvLayerSpec>(net.layers[0]);
  const Model model = random_model(net, rng);
  const ConvParams& params = model.conv_params(0);
  ConvKeyPair key = keygen_conv(spec, params, net.fp, rng);
  const Tensor3 masked = ppcl_encrypt(random_input(spec.input_shape(), 24, rng), key, net.fp);
  const Tensor3 honest = edge_eval_conv(masked, spec, params);
  const uint64_t n = honest.size();

  const double p = detection_probability(n, 0.01, 0.002);
  Tensor3 work = honest;
  int detected = 0;
  const int trials = 1000;
  for (int t = 0; t < trials; ++t) {
    const auto replaced = corrupt(work.elements(), {0.01}, net.fp.lambda, rng);
    detected += !audit_conv(work, make_audit_plan(n, 0.002, rng), masked, spec, params).passed;
    for (uint64_t i : replaced) work[i] = honest[i];
  }
  const double empirical = static_cast<double>(detected) / trials;
  CAPTURE(p);
  CAPTURE(empirical);
  CHECK(std::abs(empirical - p) <= 0.02);
  CHECK(audit_conv(honest, make_audit_plan(n, 0.002, rng), masked, spec, params).passed);
}
