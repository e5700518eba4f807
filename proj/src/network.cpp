#include "lepcnn/network.hpp"

#include <bit>

#include "lepcnn/detail/overloaded.hpp"
#include "lepcnn/errors.hpp"

namespace lepcnn {

namespace {

using detail::Overloaded;

constexpr uint32_t kMaxSide = 65535;
constexpr uint32_t kMaxLength = 1u << 24;

unsigned ceil_log2(uint64_t v) {
  return v <= 1 ? 0 : static_cast<unsigned>(std::bit_width(v - 1));
}

void check_weight_width(std::span<const int32_t> values, unsigned bits,
                        const std::string& what) {
  const int64_t hi = (int64_t{1} << (bits - 1)) - 1;
  const int64_t lo = -(int64_t{1} << (bits - 1));
  for (int64_t v : values) {
    if (v < lo || v > hi) {
      throw ParamViolation(what + " value " + std::to_string(v) +
                           " exceeds weight_bits=" + std::to_string(bits));
    }
  }
}

void check_accumulator_width(const FpParams& fp, uint64_t fan_in,
                             const std::string& what) {
  // masked input < 2^(lambda+1), |w| <= 2^(weight_bits-1), fan_in terms,
  // one bias term and a sign bit.
  const unsigned need = (fp.lambda + 1) + (fp.weight_bits - 1) +
                        ceil_log2(fan_in) + 1 + 1;
  if (need > 256) {
    throw ParamViolation(what + ": masked accumulator needs " +
                         std::to_string(need) + " bits (> 256)");
  }
}

}  // namespace

void ConvLayerSpec::validate() const {
  if (input_side < 1 || input_depth < 1 || kernel_side < 1 ||
      kernel_count < 1) {
    throw DimensionError("conv: sizes must be >= 1");
  }
  if (input_side > kMaxSide || input_depth > kMaxSide ||
      kernel_side > kMaxSide || kernel_count > kMaxSide || stride > kMaxSide ||
      padding > kMaxSide) {
    throw DimensionError("conv: dimension exceeds 65535");
  }
  if (stride < 1) throw DimensionError("conv: stride must be >= 1");
  if (kernel_side > input_side + 2 * padding) {
    throw DimensionError("conv: kernel larger than padded input");
  }
  if ((input_side - kernel_side + 2 * padding) % stride != 0) {
    throw DimensionError("conv: (n - k + 2p) not divisible by stride");
  }
}

void FcLayerSpec::validate() const {
  if (input_length < 1 || neuron_count < 1) {
    throw DimensionError("fc: input_length and neuron_count must be >= 1");
  }
  if (input_length > kMaxLength || neuron_count > kMaxLength) {
    throw DimensionError("fc: dimension exceeds 2^24");
  }
}

Shape3 PoolSpec::output_shape(const Shape3& in) const {
  if (size < 1 || stride < 1) throw DimensionError("pool: size/stride >= 1");
  auto side = [&](uint32_t n) {
    if (size > n || (n - size) % stride != 0) {
      throw DimensionError("pool: window " + std::to_string(size) +
                           " stride " + std::to_string(stride) +
                           " does not tile side " + std::to_string(n));
    }
    return (n - size) / stride + 1;
  };
  return {side(in.height), side(in.width), in.depth};
}

bool is_offloaded(const LayerSpec& layer) {
  return std::holds_alternative<ConvLayerSpec>(layer) ||
         std::holds_alternative<FcLayerSpec>(layer);
}

std::string layer_name(const LayerSpec& layer) {
  return std::visit(Overloaded{
                        [](const ConvLayerSpec&) { return std::string("conv"); },
                        [](const FcLayerSpec&) { return std::string("fc"); },
                        [](const ReluSpec&) { return std::string("relu"); },
                        [](const PoolSpec& p) {
                          return std::string(p.kind == PoolKind::kMax ? "maxpool"
                                                                      : "avgpool");
                        },
                    },
                    layer);
}

std::vector<Shape3> NetworkSpec::shapes() const {
  std::vector<Shape3> out;
  out.reserve(layers.size() + 1);
  if (input.height < 1 || input.width < 1 || input.depth < 1) {
    throw DimensionError("network input dimensions must be >= 1");
  }
  out.push_back(input);
  for (size_t i = 0; i < layers.size(); ++i) {
    const Shape3 in = out.back();
    const std::string where = "layer " + std::to_string(i) + ": ";
    Shape3 next = std::visit(
        Overloaded{
            [&](const ConvLayerSpec& c) {
              c.validate();
              if (in != c.input_shape()) {
                throw DimensionError(where + "conv expects " +
                                     c.input_shape().to_string() + ", got " +
                                     in.to_string());
              }
              return c.output_shape();
            },
            [&](const FcLayerSpec& f) {
              f.validate();
              if (in.size() != f.input_length) {
                throw DimensionError(where + "fc expects " +
                                     std::to_string(f.input_length) +
                                     " inputs, got " + in.to_string());
              }
              return f.output_shape();
            },
            [&](const ReluSpec&) { return in; },
            [&](const PoolSpec& p) { return p.output_shape(in); },
        },
        layers[i]);
    out.push_back(next);
  }
  return out;
}

void NetworkSpec::validate() const {
  validate_supported(fp);
  (void)shapes();
}

std::vector<uint32_t> NetworkSpec::offloaded_layers() const {
  std::vector<uint32_t> out;
  for (uint32_t i = 0; i < layers.size(); ++i) {
    if (is_offloaded(layers[i])) out.push_back(i);
  }
  return out;
}

void check_conv_params(const ConvLayerSpec& spec, const ConvParams& params) {
  const size_t want = static_cast<size_t>(spec.kernel_count) * spec.fan_in();
  if (params.kernels.size() != want || params.bias.size() != spec.kernel_count) {
    throw DimensionError("conv params: expected " + std::to_string(want) +
                         " kernel weights and " +
                         std::to_string(spec.kernel_count) + " biases");
  }
}

void check_fc_params(const FcLayerSpec& spec, const FcParams& params) {
  const size_t want =
      static_cast<size_t>(spec.input_length) * spec.neuron_count;
  if (params.weights.size() != want || params.bias.size() != spec.neuron_count) {
    throw DimensionError("fc params: expected " + std::to_string(want) +
                         " weights and " + std::to_string(spec.neuron_count) +
                         " biases");
  }
}

void Model::validate() const {
  net.validate();
  if (params.size() != net.layers.size()) {
    throw DimensionError("model: one LayerParams per layer required");
  }
  for (size_t i = 0; i < net.layers.size(); ++i) {
    const std::string where = "layer " + std::to_string(i);
    std::visit(
        Overloaded{
            [&](const ConvLayerSpec& c) {
              const auto* p = std::get_if<ConvParams>(&params[i]);
              if (p == nullptr) throw DimensionError(where + ": conv params missing");
              check_conv_params(c, *p);
              check_weight_width(p->kernels, net.fp.weight_bits, where + " kernel");
              check_accumulator_width(net.fp, c.fan_in(), where);
            },
            [&](const FcLayerSpec& f) {
              const auto* p = std::get_if<FcParams>(&params[i]);
              if (p == nullptr) throw DimensionError(where + ": fc params missing");
              check_fc_params(f, *p);
              check_weight_width(p->weights, net.fp.weight_bits, where + " weight");
              check_accumulator_width(net.fp, f.input_length, where);
            },
            [&](const auto&) {
              if (!std::holds_alternative<NoParams>(params[i])) {
                throw DimensionError(where + ": unexpected params");
              }
            },
        },
        net.layers[i]);
  }
}

const ConvParams& Model::conv_params(uint32_t layer) const {
  const auto* p = layer < params.size() ? std::get_if<ConvParams>(&params[layer])
                                        : nullptr;
  if (p == nullptr) throw DimensionError("layer is not a conv layer");
  return *p;
}

const FcParams& Model::fc_params(uint32_t layer) const {
  const auto* p = layer < params.size() ? std::get_if<FcParams>(&params[layer])
                                        : nullptr;
  if (p == nullptr) throw DimensionError("layer is not a fc layer");
  return *p;
}

NetworkSpec alexnet_spec(const FpParams& fp) {
  const PoolSpec pool{PoolKind::kMax, 3, 2};
  NetworkSpec net;
  net.fp = fp;
  net.input = {227, 227, 3};
  net.layers = {
      ConvLayerSpec{227, 3, 11, 96, 4, 0},   ReluSpec{}, pool,
      ConvLayerSpec{27, 96, 5, 256, 1, 2},   ReluSpec{}, pool,
      ConvLayerSpec{13, 256, 3, 384, 1, 1},  ReluSpec{},
      ConvLayerSpec{13, 384, 3, 384, 1, 1},  ReluSpec{},
      ConvLayerSpec{13, 384, 3, 256, 1, 1},  ReluSpec{}, pool,
      FcLayerSpec{9216, 4096},               ReluSpec{},
      FcLayerSpec{4096, 4096},               ReluSpec{},
      FcLayerSpec{4096, 1000},
  };
  return net;
}

}  // namespace lepcnn
