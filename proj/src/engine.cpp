#include "lepcnn/engine.hpp"

#include <algorithm>
#include <cmath>

#include "lepcnn/detail/overloaded.hpp"
#include "lepcnn/errors.hpp"

namespace lepcnn {

using detail::Overloaded;

namespace {

// Window dot product for output (oy, ox) of `kernel`, without bias.
inline Int256 conv_window(const Tensor3& in, const ConvLayerSpec& spec,
                          const int32_t* kernel_weights, uint32_t oy,
                          uint32_t ox) {
  const int64_t n = spec.input_side;
  const uint32_t depth = spec.input_depth;
  const uint32_t k = spec.kernel_side;
  const int64_t y0 = static_cast<int64_t>(oy) * spec.stride - spec.padding;
  const int64_t x0 = static_cast<int64_t>(ox) * spec.stride - spec.padding;
  const Int256* data = in.elements().data();
  Int256 acc;
  for (uint32_t ky = 0; ky < k; ++ky) {
    const int64_t iy = y0 + ky;
    if (iy < 0 || iy >= n) continue;
    for (uint32_t kx = 0; kx < k; ++kx) {
      const int64_t ix = x0 + kx;
      if (ix < 0 || ix >= n) continue;
      const Int256* px = data + (iy * n + ix) * depth;
      const int32_t* pw = kernel_weights + (static_cast<size_t>(ky) * k + kx) * depth;
      for (uint32_t d = 0; d < depth; ++d) acc.add_product(px[d], pw[d]);
    }
  }
  return acc;
}

void check_conv_input(const Tensor3& input, const ConvLayerSpec& spec,
                      const ConvParams& params) {
  spec.validate();
  check_conv_params(spec, params);
  if (input.shape() != spec.input_shape()) {
    throw DimensionError("conv input " + input.shape().to_string() +
                         " does not match layer " +
                         spec.input_shape().to_string());
  }
}

void check_fc_input(size_t length, const FcLayerSpec& spec,
                    const FcParams& params) {
  spec.validate();
  check_fc_params(spec, params);
  if (length != spec.input_length) {
    throw DimensionError("fc input length " + std::to_string(length) +
                         " does not match layer " +
                         std::to_string(spec.input_length));
  }
}

Int256 floor_div(const Int256& sum, int64_t divisor) {
  // divisor is a small positive window area; do long division on |sum|.
  const bool neg = sum.is_negative();
  Int256::Limbs mag = (neg ? -sum : sum).limbs();
  unsigned __int128 rem = 0;
  for (int i = 3; i >= 0; --i) {
    const unsigned __int128 cur = (rem << 64) | mag[i];
    mag[i] = static_cast<uint64_t>(cur / static_cast<uint64_t>(divisor));
    rem = cur % static_cast<uint64_t>(divisor);
  }
  Int256 q = Int256::from_limbs(mag);
  if (!neg) return q;
  q = -q;
  if (rem != 0) q -= Int256(1);
  return q;
}

}  // namespace

Tensor3 conv_forward(const Tensor3& input, const ConvLayerSpec& spec,
                     const ConvParams& params, Bias bias) {
  check_conv_input(input, spec, params);
  const uint32_t o = spec.output_side();
  const uint32_t h_count = spec.kernel_count;
  const size_t per_kernel = spec.fan_in();
  Tensor3 out(spec.output_shape());
  for (uint32_t oy = 0; oy < o; ++oy) {
    for (uint32_t ox = 0; ox < o; ++ox) {
      Int256* dst = &out.at(oy, ox, 0);
      for (uint32_t h = 0; h < h_count; ++h) {
        dst[h] = conv_window(input, spec, params.kernels.data() + h * per_kernel,
                             oy, ox);
        if (bias == Bias::kApply) dst[h] += Int256(params.bias[h]);
      }
    }
  }
  return out;
}

Int256 conv_output_at(const Tensor3& input, const ConvLayerSpec& spec,
                      const ConvParams& params, uint32_t y, uint32_t x,
                      uint32_t kernel, Bias bias) {
  check_conv_input(input, spec, params);
  const uint32_t o = spec.output_side();
  if (y >= o || x >= o || kernel >= spec.kernel_count) {
    throw DimensionError("conv_output_at: position out of range");
  }
  Int256 acc = conv_window(input, spec,
                           params.kernels.data() + kernel * spec.fan_in(), y, x);
  if (bias == Bias::kApply) acc += Int256(params.bias[kernel]);
  return acc;
}

std::vector<Int256> fc_forward(std::span<const Int256> input,
                               const FcLayerSpec& spec, const FcParams& params,
                               Bias bias) {
  check_fc_input(input.size(), spec, params);
  const size_t t = spec.neuron_count;
  std::vector<Int256> out(t);
  if (bias == Bias::kApply) {
    for (size_t j = 0; j < t; ++j) out[j] = Int256(params.bias[j]);
  }
  for (size_t i = 0; i < input.size(); ++i) {
    const int32_t* row = params.weights.data() + i * t;
    const Int256& v = input[i];
    for (size_t j = 0; j < t; ++j) out[j].add_product(v, row[j]);
  }
  return out;
}

Tensor3 fc_forward(const Tensor3& input, const FcLayerSpec& spec,
                   const FcParams& params, Bias bias) {
  return Tensor3::vector(fc_forward(input.elements(), spec, params, bias));
}

Int256 fc_output_at(std::span<const Int256> input, const FcLayerSpec& spec,
                    const FcParams& params, uint32_t neuron, Bias bias) {
  check_fc_input(input.size(), spec, params);
  if (neuron >= spec.neuron_count) {
    throw DimensionError("fc_output_at: neuron out of range");
  }
  Int256 acc = bias == Bias::kApply ? Int256(params.bias[neuron]) : Int256();
  for (size_t i = 0; i < input.size(); ++i) {
    acc.add_product(input[i], params.weights[i * spec.neuron_count + neuron]);
  }
  return acc;
}

Tensor3 relu(const Tensor3& input) {
  Tensor3 out = input;
  for (Int256& v : out.elements()) {
    if (v.is_negative()) v = Int256();
  }
  return out;
}

Tensor3 pool(const Tensor3& input, const PoolSpec& spec) {
  const Shape3 os = spec.output_shape(input.shape());
  Tensor3 out(os);
  const int64_t area = static_cast<int64_t>(spec.size) * spec.size;
  for (uint32_t oy = 0; oy < os.height; ++oy) {
    for (uint32_t ox = 0; ox < os.width; ++ox) {
      for (uint32_t c = 0; c < os.depth; ++c) {
        const uint32_t y0 = oy * spec.stride;
        const uint32_t x0 = ox * spec.stride;
        Int256 acc = input.at(y0, x0, c);
        for (uint32_t dy = 0; dy < spec.size; ++dy) {
          for (uint32_t dx = 0; dx < spec.size; ++dx) {
            if (dy == 0 && dx == 0) continue;
            const Int256& v = input.at(y0 + dy, x0 + dx, c);
            if (spec.kind == PoolKind::kMax) {
              if (v > acc) acc = v;
            } else {
              acc += v;
            }
          }
        }
        out.at(oy, ox, c) =
            spec.kind == PoolKind::kMax ? acc : floor_div(acc, area);
      }
    }
  }
  return out;
}

void check_plaintext_range(const Tensor3& t, const FpParams& fp) {
  for (size_t i = 0; i < t.size(); ++i) {
    if (!in_plaintext_range(t[i], fp)) {
      throw RangeError("activation " + t[i].to_string() + " at element " +
                       std::to_string(i) + " exceeds the " +
                       std::to_string(fp.gamma) + "-bit plaintext budget");
    }
  }
}

Tensor3 requantize(const Tensor3& accumulators, const FpParams& fp) {
  Tensor3 out = accumulators;
  for (Int256& v : out.elements()) v = rescale(v, fp);
  check_plaintext_range(out, fp);
  return out;
}

Tensor3 apply_local_layer(const Tensor3& input, const LayerSpec& layer) {
  return std::visit(
      Overloaded{
          [&](const ReluSpec&) { return relu(input); },
          [&](const PoolSpec& p) { return pool(input, p); },
          [&](const auto&) -> Tensor3 {
            throw DimensionError("apply_local_layer: layer is offloaded");
          },
      },
      layer);
}

Tensor3 infer_plain(const Tensor3& input, const Model& model) {
  const NetworkSpec& net = model.net;
  if (input.shape() != net.input) {
    throw DimensionError("input " + input.shape().to_string() +
                         " does not match network input " +
                         net.input.to_string());
  }
  check_plaintext_range(input, net.fp);
  Tensor3 cur = input;
  for (uint32_t i = 0; i < net.layers.size(); ++i) {
    const LayerSpec& layer = net.layers[i];
    if (const auto* c = std::get_if<ConvLayerSpec>(&layer)) {
      cur = requantize(conv_forward(cur, *c, model.conv_params(i)), net.fp);
    } else if (const auto* f = std::get_if<FcLayerSpec>(&layer)) {
      cur = requantize(fc_forward(cur, *f, model.fc_params(i)), net.fp);
    } else {
      cur = apply_local_layer(cur, layer);
    }
  }
  return cur;
}

LayerFlops layer_flops(const ConvLayerSpec& spec) {
  spec.validate();
  const uint64_t o = spec.output_side();
  const uint64_t outputs = o * o * spec.kernel_count;
  LayerFlops f;
  f.local_enc = static_cast<uint64_t>(spec.input_depth) * spec.input_side *
                spec.input_side;
  f.local_dec = outputs;
  f.offloaded = 2 * spec.fan_in() * outputs;
  return f;
}

LayerFlops layer_flops(const FcLayerSpec& spec) {
  spec.validate();
  LayerFlops f;
  f.local_enc = spec.input_length;
  f.local_dec = spec.neuron_count;
  f.offloaded = 2ULL * spec.input_length * spec.neuron_count;
  return f;
}

uint64_t nonlinear_flops(const LayerSpec& layer, const Shape3& input) {
  return std::visit(
      Overloaded{
          [&](const ReluSpec&) -> uint64_t { return input.size(); },
          [&](const PoolSpec& p) -> uint64_t {
            const uint64_t outputs = p.output_shape(input).size();
            const uint64_t area = static_cast<uint64_t>(p.size) * p.size;
            return p.kind == PoolKind::kMax ? (area - 1) * outputs
                                            : area * outputs;
          },
          [&](const auto&) -> uint64_t { return 0; },
      },
      layer);
}

Model random_model(const NetworkSpec& net, RandomSource& rng,
                   const RandomModelOptions& options) {
  net.validate();
  Model model;
  model.net = net;
  const int64_t weight_cap = (int64_t{1} << (net.fp.weight_bits - 1)) - 1;
  const double one = std::ldexp(1.0, static_cast<int>(net.fp.scale_exponent));
  const auto bias_cap = static_cast<int64_t>(
      options.bias_fraction * one * one);
  auto weight_bound = [&](uint64_t fan_in) {
    const auto b = static_cast<int64_t>(options.gain * one /
                                        static_cast<double>(fan_in));
    return std::clamp<int64_t>(b, 1, weight_cap);
  };
  for (const LayerSpec& layer : net.layers) {
    if (const auto* c = std::get_if<ConvLayerSpec>(&layer)) {
      ConvParams p;
      const int64_t wb = weight_bound(c->fan_in());
      p.kernels.resize(c->kernel_count * c->fan_in());
      for (auto& w : p.kernels) w = static_cast<int32_t>(rng.uniform_int(-wb, wb));
      p.bias.resize(c->kernel_count);
      for (auto& b : p.bias) b = rng.uniform_int(-bias_cap, bias_cap);
      model.params.emplace_back(std::move(p));
    } else if (const auto* f = std::get_if<FcLayerSpec>(&layer)) {
      FcParams p;
      const int64_t wb = weight_bound(f->input_length);
      p.weights.resize(static_cast<size_t>(f->input_length) * f->neuron_count);
      for (auto& w : p.weights) w = static_cast<int32_t>(rng.uniform_int(-wb, wb));
      p.bias.resize(f->neuron_count);
      for (auto& b : p.bias) b = rng.uniform_int(-bias_cap, bias_cap);
      model.params.emplace_back(std::move(p));
    } else {
      model.params.emplace_back(NoParams{});
    }
  }
  return model;
}

Tensor3 random_input(const Shape3& shape, unsigned bits, RandomSource& rng) {
  Tensor3 t(shape);
  const int64_t cap = (int64_t{1} << bits) - 1;
  for (Int256& v : t.elements()) v = Int256(rng.uniform_int(-cap, cap));
  return t;
}

}  // namespace lepcnn
