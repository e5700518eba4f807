#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lepcnn/network.hpp"
#include "lepcnn/rng.hpp"
#include "lepcnn/tensor.hpp"

// Exact integer CNN engine. Every masked-pipeline result is checked against
// these functions.
namespace lepcnn {

enum class Bias : uint8_t { kApply, kOmit };

// Zero-padded convolution. Output is output_side x output_side x kernel_count;
// each element is the exact window dot product (plus bias when applied).
Tensor3 conv_forward(const Tensor3& input, const ConvLayerSpec& spec,
                     const ConvParams& params, Bias bias = Bias::kApply);

// One output element of conv_forward, at (y, x) for `kernel`.
Int256 conv_output_at(const Tensor3& input, const ConvLayerSpec& spec,
                      const ConvParams& params, uint32_t y, uint32_t x,
                      uint32_t kernel, Bias bias = Bias::kApply);

// out[j] = sum_i in[i] * w[i][j] (+ bias[j]).
std::vector<Int256> fc_forward(std::span<const Int256> input,
                               const FcLayerSpec& spec, const FcParams& params,
                               Bias bias = Bias::kApply);
// Tensor form: any input shape with input_length elements, 1 x 1 x T out.
Tensor3 fc_forward(const Tensor3& input, const FcLayerSpec& spec,
                   const FcParams& params, Bias bias = Bias::kApply);

Int256 fc_output_at(std::span<const Int256> input, const FcLayerSpec& spec,
                    const FcParams& params, uint32_t neuron,
                    Bias bias = Bias::kApply);

Tensor3 relu(const Tensor3& input);

// Per depth slice window reduction. Average pooling divides the window sum
// by size^2 rounding toward negative infinity.
Tensor3 pool(const Tensor3& input, const PoolSpec& spec);

// Floor-shift accumulator-scale values back to activation scale and require
// every result to stay inside the gamma-bit plaintext budget.
Tensor3 requantize(const Tensor3& accumulators, const FpParams& fp);

// Throws RangeError if any element is outside the gamma-bit plaintext budget.
void check_plaintext_range(const Tensor3& t, const FpParams& fp);

// Runs the whole network locally. Linear layers are followed by requantize.
Tensor3 infer_plain(const Tensor3& input, const Model& model);

// Applies a single non-offloaded layer (relu / pool).
Tensor3 apply_local_layer(const Tensor3& input, const LayerSpec& layer);

struct LayerFlops {
  uint64_t local_enc = 0;
  uint64_t local_dec = 0;
  uint64_t offloaded = 0;

  uint64_t local() const { return local_enc + local_dec; }
  friend bool operator==(const LayerFlops&, const LayerFlops&) = default;
};

// Encryption, decryption and edge-side costs of one offloaded layer:
// conv -> D n^2, H o^2, 2 D H k^2 o^2; fc -> m, T, 2 m T.
LayerFlops layer_flops(const ConvLayerSpec& spec);
LayerFlops layer_flops(const FcLayerSpec& spec);

// Client cost of a local layer under our own counting: relu one comparison
// per element, max pool q^2 - 1 comparisons per output, avg pool q^2 - 1
// additions plus one division per output.
uint64_t nonlinear_flops(const LayerSpec& layer, const Shape3& input);

struct RandomModelOptions {
  // Worst-case per-layer gain bound: |w| <= gain * 2^scale / fan_in.
  double gain = 1.0;
  // Biases uniform in +-bias_fraction * 2^(2 * scale).
  double bias_fraction = 0.5;
};

// Quantized random parameters for `net`, for tests and demos.
Model random_model(const NetworkSpec& net, RandomSource& rng,
                   const RandomModelOptions& options = {});

// Random plaintext input with |x| < 2^bits (bits < gamma).
Tensor3 random_input(const Shape3& shape, unsigned bits, RandomSource& rng);

}  // namespace lepcnn
