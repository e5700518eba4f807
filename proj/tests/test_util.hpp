#pragma once

#include <cstdint>
#include <initializer_list>
#include <vector>

#include "lepcnn/network.hpp"
#include "lepcnn/tensor.hpp"

namespace lepcnn::testing {

inline Tensor3 make_tensor(Shape3 shape, std::initializer_list<int64_t> values) {
  std::vector<Int256> v;
  for (int64_t x : values) v.emplace_back(x);
  return Tensor3(shape, std::move(v));
}

// Reference convolution: materializes the zero-padded input, then loops
// output row, output column, kernel, window row, window column, channel.
inline Tensor3 brute_conv(const Tensor3& in, const ConvLayerSpec& spec,
                          const ConvParams& params, bool with_bias) {
  const uint32_t n = spec.input_side;
  const uint32_t p = spec.padding;
  const uint32_t padded = n + 2 * p;
  const uint32_t depth = spec.input_depth;
  std::vector<Int256> pad(static_cast<size_t>(padded) * padded * depth);
  for (uint32_t y = 0; y < n; ++y) {
    for (uint32_t x = 0; x < n; ++x) {
      for (uint32_t c = 0; c < depth; ++c) {
        pad[((y + p) * padded + (x + p)) * depth + c] = in.at(y, x, c);
      }
    }
  }
  const uint32_t o = (padded - spec.kernel_side) / spec.stride + 1;
  const uint32_t k = spec.kernel_side;
  Tensor3 out({o, o, spec.kernel_count});
  for (uint32_t oy = 0; oy < o; ++oy) {
    for (uint32_t ox = 0; ox < o; ++ox) {
      for (uint32_t h = 0; h < spec.kernel_count; ++h) {
        Int256 sum = with_bias ? Int256(params.bias[h]) : Int256();
        for (uint32_t ky = 0; ky < k; ++ky) {
          for (uint32_t kx = 0; kx < k; ++kx) {
            for (uint32_t c = 0; c < depth; ++c) {
              const Int256& v =
                  pad[((oy * spec.stride + ky) * padded + (ox * spec.stride + kx)) *
                          depth + c];
              const int64_t w =
                  params.kernels[((static_cast<size_t>(h) * k + ky) * k + kx) * depth + c];
              sum = sum + v * w;
            }
          }
        }
        out.at(oy, ox, h) = sum;
      }
    }
  }
  return out;
}

// Reference fully-connected layer, neuron-major loop.
inline std::vector<Int256> brute_fc(const std::vector<Int256>& in,
                                    const FcLayerSpec& spec,
                                    const FcParams& params, bool with_bias) {
  std::vector<Int256> out;
  for (uint32_t j = 0; j < spec.neuron_count; ++j) {
    Int256 sum = with_bias ? Int256(params.bias[j]) : Int256();
    for (uint32_t i = 0; i < spec.input_length; ++i) {
      sum = sum + in[i] * params.weights[static_cast<size_t>(i) * spec.neuron_count + j];
    }
    out.push_back(sum);
  }
  return out;
}

}  // namespace lepcnn::testing
