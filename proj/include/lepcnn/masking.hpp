#pragma once

#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include "lepcnn/fixedpoint.hpp"
#include "lepcnn/network.hpp"
#include "lepcnn/rng.hpp"
#include "lepcnn/tensor.hpp"

// One-time additive masking of offloaded linear layers.
//
// Offline, every conv / fc layer gets a uniform lambda-bit mask R and the
// bias-free layer evaluated on it (alpha for conv, beta for fc). Online the
// client sends x + R, the keyless edge evaluates the layer on the masked
// input, and the client subtracts alpha / beta to recover the exact output.
//
// Plaintexts are signed; encryption first shifts them by 2^(gamma-1) into
// [0, 2^gamma), so the decryption key is the layer evaluated on
// R + offset. The offset cancels exactly on decryption.
namespace lepcnn {

enum class KeyState : uint8_t { kFresh, kEncrypted, kConsumed };

struct ConvKeyPair {
  uint32_t layer_index = 0;
  ConvLayerSpec spec;
  Tensor3 enc;  // input_side x input_side x input_depth masks in [0, 2^lambda)
  Tensor3 dec;  // output_side x output_side x kernel_count
  KeyState state = KeyState::kFresh;
};

struct FcKeyPair {
  uint32_t layer_index = 0;
  FcLayerSpec spec;
  std::vector<Int256> enc;  // input_length masks in [0, 2^lambda)
  std::vector<Int256> dec;  // neuron_count
  KeyState state = KeyState::kFresh;
};

using LayerKey = std::variant<ConvKeyPair, FcKeyPair>;

// Key material for one inference request, one pair per offloaded layer in
// network order.
struct KeySet {
  uint64_t request_id = 0;
  FpParams fp;
  std::vector<LayerKey> keys;

  // True once every pair has been decrypted with.
  bool consumed() const;
  // Throws DimensionError unless the pairs line up with model's offloaded
  // layers (index, kind and geometry), and ParamViolation on an FpParams
  // mismatch.
  void check_matches(const NetworkSpec& net) const;
};

ConvKeyPair keygen_conv(const ConvLayerSpec& spec, const ConvParams& params,
                        const FpParams& fp, RandomSource& rng,
                        uint32_t layer_index = 0);
FcKeyPair keygen_fc(const FcLayerSpec& spec, const FcParams& params,
                    const FpParams& fp, RandomSource& rng,
                    uint32_t layer_index = 0);

// Key pairs for every offloaded layer of the model; request_id drawn from rng.
KeySet keygen(const Model& model, RandomSource& rng);

// x + 2^(gamma-1) + R elementwise, plain integer addition. Marks the key as
// encrypted; a second call throws KeyReuseError.
Tensor3 ppcl_encrypt(const Tensor3& input, ConvKeyPair& key, const FpParams& fp);

// Edge side: conv over the masked input, bias added once per output.
Tensor3 edge_eval_conv(const Tensor3& masked, const ConvLayerSpec& spec,
                       const ConvParams& params);

// masked_out - alpha, equal to conv_forward(plaintext). Consumes the key.
Tensor3 ppcl_decrypt(const Tensor3& masked_out, ConvKeyPair& key);

std::vector<Int256> ppfl_encrypt(std::span<const Int256> input, FcKeyPair& key,
                                 const FpParams& fp);
std::vector<Int256> edge_eval_fc(std::span<const Int256> masked,
                                 const FcLayerSpec& spec, const FcParams& params);
std::vector<Int256> ppfl_decrypt(std::span<const Int256> masked_out,
                                 FcKeyPair& key);

// LEPK key-file encoding of a KeySet. Masks use 24-byte unsigned elements,
// decryption keys 32-byte two's complement, all little-endian.
std::vector<uint8_t> serialize_keyset(const KeySet& keys);
// Parses one key file from the front of `data`; returns bytes consumed via
// `consumed`. Throws IntegrityError on any malformation.
KeySet parse_keyset(std::span<const uint8_t> data, size_t* consumed = nullptr);

inline constexpr uint16_t kKeyFileVersion = 1;

}  // namespace lepcnn
