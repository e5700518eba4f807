#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "lepcnn/fixedpoint.hpp"
#include "lepcnn/tensor.hpp"

namespace lepcnn {

// Square convolution over an input_side x input_side x input_depth tensor
// with kernel_count kernels of kernel_side x kernel_side x input_depth.
struct ConvLayerSpec {
  uint32_t input_side = 1;
  uint32_t input_depth = 1;
  uint32_t kernel_side = 1;
  uint32_t kernel_count = 1;
  uint32_t stride = 1;
  uint32_t padding = 0;

  // Throws DimensionError unless stride >= 1, kernel fits the padded input
  // and (side - kernel + 2 * padding) is a multiple of stride.
  void validate() const;
  uint32_t output_side() const {
    return (input_side - kernel_side + 2 * padding) / stride + 1;
  }
  Shape3 input_shape() const { return {input_side, input_side, input_depth}; }
  Shape3 output_shape() const {
    return {output_side(), output_side(), kernel_count};
  }
  // Multiply-accumulates per output element.
  uint64_t fan_in() const {
    return static_cast<uint64_t>(input_depth) * kernel_side * kernel_side;
  }
  friend bool operator==(const ConvLayerSpec&, const ConvLayerSpec&) = default;
};

struct FcLayerSpec {
  uint32_t input_length = 1;
  uint32_t neuron_count = 1;

  void validate() const;
  Shape3 output_shape() const { return {1, 1, neuron_count}; }
  friend bool operator==(const FcLayerSpec&, const FcLayerSpec&) = default;
};

struct ReluSpec {
  friend bool operator==(const ReluSpec&, const ReluSpec&) = default;
};

enum class PoolKind : uint8_t { kMax = 0, kAvg = 1 };

struct PoolSpec {
  PoolKind kind = PoolKind::kMax;
  uint32_t size = 2;  // q: window is size x size
  uint32_t stride = 2;

  // Output shape for `input`; throws DimensionError when windows do not tile.
  Shape3 output_shape(const Shape3& input) const;
  friend bool operator==(const PoolSpec&, const PoolSpec&) = default;
};

using LayerSpec = std::variant<ConvLayerSpec, FcLayerSpec, ReluSpec, PoolSpec>;

// Kernels are laid out [kernel][ky][kx][channel]; bias is per kernel and held
// at accumulator scale (2 * scale_exponent).
struct ConvParams {
  std::vector<int32_t> kernels;
  std::vector<int64_t> bias;
  friend bool operator==(const ConvParams&, const ConvParams&) = default;
};

// Weights laid out [input][neuron] (input_length x neuron_count).
struct FcParams {
  std::vector<int32_t> weights;
  std::vector<int64_t> bias;
  friend bool operator==(const FcParams&, const FcParams&) = default;
};

struct NoParams {
  friend bool operator==(const NoParams&, const NoParams&) = default;
};

using LayerParams = std::variant<NoParams, ConvParams, FcParams>;

struct NetworkSpec {
  Shape3 input;
  std::vector<LayerSpec> layers;
  FpParams fp;

  // Input shape of every layer plus the final output shape
  // (layers.size() + 1 entries). Throws DimensionError if the chain breaks.
  std::vector<Shape3> shapes() const;
  void validate() const;

  // Indices of conv and fc layers, the ones offloaded to the edge.
  std::vector<uint32_t> offloaded_layers() const;

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

bool is_offloaded(const LayerSpec& layer);
std::string layer_name(const LayerSpec& layer);

// A network plus one LayerParams per layer.
struct Model {
  NetworkSpec net;
  std::vector<LayerParams> params;

  // Structure, parameter sizes, weight widths and the 256-bit accumulator
  // bound for masked evaluation. Throws DimensionError / ParamViolation.
  void validate() const;

  const ConvParams& conv_params(uint32_t layer) const;
  const FcParams& fc_params(uint32_t layer) const;

  friend bool operator==(const Model&, const Model&) = default;
};

// Checks that kernel / weight / bias counts match the layer geometry.
void check_conv_params(const ConvLayerSpec& spec, const ConvParams& params);
void check_fc_params(const FcLayerSpec& spec, const FcParams& params);

// The AlexNet layer chain (227x227x3 input, five conv, three fc) with
// paddings 0, 2, 1, 1, 1 and 3x3 stride-2 max pooling.
NetworkSpec alexnet_spec(const FpParams& fp = {.gamma = 30,
                                               .lambda = 160,
                                               .scale_exponent = 16,
                                               .weight_bits = 16});

}  // namespace lepcnn
