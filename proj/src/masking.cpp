#include "lepcnn/masking.hpp"

#include "lepcnn/detail/bytes.hpp"
#include "lepcnn/detail/overloaded.hpp"
#include "lepcnn/engine.hpp"
#include "lepcnn/errors.hpp"

namespace lepcnn {

using detail::ByteReader;
using detail::ByteWriter;
using detail::Overloaded;

namespace {

constexpr uint8_t kConvKind = 0;
constexpr uint8_t kFcKind = 1;

void begin_encrypt(KeyState& state, uint32_t layer) {
  if (state != KeyState::kFresh) {
    throw KeyReuseError("key pair for layer " + std::to_string(layer) +
                        " was already used for encryption");
  }
  state = KeyState::kEncrypted;
}

void begin_decrypt(KeyState& state, uint32_t layer) {
  if (state != KeyState::kEncrypted) {
    throw KeyReuseError("key pair for layer " + std::to_string(layer) +
                        (state == KeyState::kFresh ? " has not encrypted anything"
                                                   : " is already consumed"));
  }
}

// Shifted plaintext plus mask, rejecting plaintexts outside the gamma budget.
Int256 mask_one(const Int256& x, const Int256& r, const Int256& offset,
                const FpParams& fp) {
  if (!in_plaintext_range(x, fp)) {
    throw RangeError("plaintext " + x.to_string() + " exceeds the " +
                     std::to_string(fp.gamma) + "-bit budget");
  }
  return x + offset + r;
}

std::vector<Int256> shifted(std::span<const Int256> masks, const FpParams& fp) {
  const Int256 offset = plaintext_offset(fp);
  std::vector<Int256> out(masks.begin(), masks.end());
  for (Int256& v : out) v += offset;
  return out;
}

}  // namespace

bool KeySet::consumed() const {
  for (const LayerKey& k : keys) {
    const KeyState s = std::visit([](const auto& p) { return p.state; }, k);
    if (s != KeyState::kConsumed) return false;
  }
  return true;
}

void KeySet::check_matches(const NetworkSpec& net) const {
  if (!(fp == net.fp)) {
    throw ParamViolation("key set FpParams differ from the model's");
  }
  const std::vector<uint32_t> layers = net.offloaded_layers();
  if (layers.size() != keys.size()) {
    throw DimensionError("key set has " + std::to_string(keys.size()) +
                         " layer keys, model offloads " +
                         std::to_string(layers.size()));
  }
  for (size_t i = 0; i < keys.size(); ++i) {
    const LayerSpec& layer = net.layers[layers[i]];
    const bool ok = std::visit(
        Overloaded{
            [&](const ConvKeyPair& k) {
              const auto* c = std::get_if<ConvLayerSpec>(&layer);
              return k.layer_index == layers[i] && c != nullptr && *c == k.spec;
            },
            [&](const FcKeyPair& k) {
              const auto* f = std::get_if<FcLayerSpec>(&layer);
              return k.layer_index == layers[i] && f != nullptr && *f == k.spec;
            },
        },
        keys[i]);
    if (!ok) {
      throw DimensionError("key for layer " + std::to_string(layers[i]) +
                           " does not match the model");
    }
  }
}

ConvKeyPair keygen_conv(const ConvLayerSpec& spec, const ConvParams& params,
                        const FpParams& fp, RandomSource& rng,
                        uint32_t layer_index) {
  validate_supported(fp);
  spec.validate();
  check_conv_params(spec, params);
  ConvKeyPair key;
  key.layer_index = layer_index;
  key.spec = spec;
  key.enc = Tensor3(spec.input_shape(),
                    rng.uniform_bits(fp.lambda, spec.input_shape().size()));
  const Tensor3 effective(spec.input_shape(), shifted(key.enc.elements(), fp));
  key.dec = conv_forward(effective, spec, params, Bias::kOmit);
  return key;
}

FcKeyPair keygen_fc(const FcLayerSpec& spec, const FcParams& params,
                    const FpParams& fp, RandomSource& rng,
                    uint32_t layer_index) {
  validate_supported(fp);
  spec.validate();
  check_fc_params(spec, params);
  FcKeyPair key;
  key.layer_index = layer_index;
  key.spec = spec;
  key.enc = rng.uniform_bits(fp.lambda, spec.input_length);
  key.dec = fc_forward(shifted(key.enc, fp), spec, params, Bias::kOmit);
  return key;
}

KeySet keygen(const Model& model, RandomSource& rng) {
  model.validate();
  KeySet set;
  set.request_id = rng.next_u64();
  set.fp = model.net.fp;
  for (uint32_t i : model.net.offloaded_layers()) {
    const LayerSpec& layer = model.net.layers[i];
    if (const auto* c = std::get_if<ConvLayerSpec>(&layer)) {
      set.keys.emplace_back(keygen_conv(*c, model.conv_params(i), set.fp, rng, i));
    } else {
      set.keys.emplace_back(keygen_fc(std::get<FcLayerSpec>(layer),
                                      model.fc_params(i), set.fp, rng, i));
    }
  }
  return set;
}

Tensor3 ppcl_encrypt(const Tensor3& input, ConvKeyPair& key, const FpParams& fp) {
  if (input.shape() != key.enc.shape()) {
    throw DimensionError("ppcl_encrypt: input " + input.shape().to_string() +
                         " does not match key " + key.enc.shape().to_string());
  }
  begin_encrypt(key.state, key.layer_index);
  const Int256 offset = plaintext_offset(fp);
  Tensor3 out(input.shape());
  for (size_t i = 0; i < input.size(); ++i) {
    out[i] = mask_one(input[i], key.enc[i], offset, fp);
  }
  return out;
}

Tensor3 edge_eval_conv(const Tensor3& masked, const ConvLayerSpec& spec,
                       const ConvParams& params) {
  return conv_forward(masked, spec, params, Bias::kApply);
}

Tensor3 ppcl_decrypt(const Tensor3& masked_out, ConvKeyPair& key) {
  if (masked_out.shape() != key.dec.shape()) {
    throw DimensionError("ppcl_decrypt: result " + masked_out.shape().to_string() +
                         " does not match key " + key.dec.shape().to_string());
  }
  begin_decrypt(key.state, key.layer_index);
  Tensor3 out = masked_out;
  for (size_t i = 0; i < out.size(); ++i) out[i] -= key.dec[i];
  key.state = KeyState::kConsumed;
  return out;
}

std::vector<Int256> ppfl_encrypt(std::span<const Int256> input, FcKeyPair& key,
                                 const FpParams& fp) {
  if (input.size() != key.enc.size()) {
    throw DimensionError("ppfl_encrypt: input length " +
                         std::to_string(input.size()) + " does not match key " +
                         std::to_string(key.enc.size()));
  }
  begin_encrypt(key.state, key.layer_index);
  const Int256 offset = plaintext_offset(fp);
  std::vector<Int256> out(input.size());
  for (size_t i = 0; i < input.size(); ++i) {
    out[i] = mask_one(input[i], key.enc[i], offset, fp);
  }
  return out;
}

std::vector<Int256> edge_eval_fc(std::span<const Int256> masked,
                                 const FcLayerSpec& spec, const FcParams& params) {
  return fc_forward(masked, spec, params, Bias::kApply);
}

std::vector<Int256> ppfl_decrypt(std::span<const Int256> masked_out,
                                 FcKeyPair& key) {
  if (masked_out.size() != key.dec.size()) {
    throw DimensionError("ppfl_decrypt: result length " +
                         std::to_string(masked_out.size()) +
                         " does not match key " + std::to_string(key.dec.size()));
  }
  begin_decrypt(key.state, key.layer_index);
  std::vector<Int256> out(masked_out.begin(), masked_out.end());
  for (size_t i = 0; i < out.size(); ++i) out[i] -= key.dec[i];
  key.state = KeyState::kConsumed;
  return out;
}

std::vector<uint8_t> serialize_keyset(const KeySet& keys) {
  ByteWriter w;
  w.tag("LEPK");
  w.u16(kKeyFileVersion);
  w.u64(keys.request_id);
  w.u16(static_cast<uint16_t>(keys.fp.gamma));
  w.u16(static_cast<uint16_t>(keys.fp.lambda));
  w.u16(static_cast<uint16_t>(keys.fp.scale_exponent));
  w.u16(static_cast<uint16_t>(keys.fp.weight_bits));
  w.u32(static_cast<uint32_t>(keys.keys.size()));
  auto blobs = [&](std::span<const Int256> enc, std::span<const Int256> dec) {
    for (const Int256& v : enc) w.integer(v, kMaskedInputBytes, false);
    for (const Int256& v : dec) w.integer(v, kMaskedOutputBytes, true);
  };
  for (const LayerKey& key : keys.keys) {
    std::visit(Overloaded{
                   [&](const ConvKeyPair& k) {
                     w.u32(k.layer_index);
                     w.u8(kConvKind);
                     w.u32(k.spec.input_side);
                     w.u32(k.spec.input_depth);
                     w.u32(k.spec.kernel_side);
                     w.u32(k.spec.kernel_count);
                     w.u32(k.spec.stride);
                     w.u32(k.spec.padding);
                     blobs(k.enc.elements(), k.dec.elements());
                   },
                   [&](const FcKeyPair& k) {
                     w.u32(k.layer_index);
                     w.u8(kFcKind);
                     w.u32(k.spec.input_length);
                     w.u32(k.spec.neuron_count);
                     blobs(k.enc, k.dec);
                   },
               },
               key);
  }
  return w.take();
}

KeySet parse_keyset(std::span<const uint8_t> data, size_t* consumed) {
  ByteReader<IntegrityError> r(data);
  r.expect_tag("LEPK");
  const uint16_t version = r.u16();
  if (version != kKeyFileVersion) {
    throw IntegrityError("unsupported key file version " + std::to_string(version));
  }
  KeySet set;
  set.request_id = r.u64();
  set.fp.gamma = r.u16();
  set.fp.lambda = r.u16();
  set.fp.scale_exponent = r.u16();
  set.fp.weight_bits = r.u16();
  try {
    validate_supported(set.fp);
  } catch (const ParamViolation& e) {
    throw IntegrityError(std::string("key file parameters: ") + e.what());
  }
  const uint32_t count = r.u32();
  r.need_items(count, 5);
  auto read_enc = [&](uint64_t n) {
    r.need_items(n, kMaskedInputBytes);
    std::vector<Int256> v;
    v.reserve(n);
    for (uint64_t i = 0; i < n; ++i) {
      v.push_back(r.integer(kMaskedInputBytes, false));
      if (!v.back().fits_unsigned(set.fp.lambda)) {
        throw IntegrityError("mask element exceeds lambda bits");
      }
    }
    return v;
  };
  auto read_dec = [&](uint64_t n) {
    r.need_items(n, kMaskedOutputBytes);
    std::vector<Int256> v;
    v.reserve(n);
    for (uint64_t i = 0; i < n; ++i) v.push_back(r.integer(kMaskedOutputBytes, true));
    return v;
  };
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t layer_index = r.u32();
    const uint8_t kind = r.u8();
    try {
      if (kind == kConvKind) {
        ConvKeyPair k;
        k.layer_index = layer_index;
        k.spec.input_side = r.u32();
        k.spec.input_depth = r.u32();
        k.spec.kernel_side = r.u32();
        k.spec.kernel_count = r.u32();
        k.spec.stride = r.u32();
        k.spec.padding = r.u32();
        k.spec.validate();
        const Shape3 in = k.spec.input_shape();
        const Shape3 out = k.spec.output_shape();
        k.enc = Tensor3(in, read_enc(in.size()));
        k.dec = Tensor3(out, read_dec(out.size()));
        set.keys.emplace_back(std::move(k));
      } else if (kind == kFcKind) {
        FcKeyPair k;
        k.layer_index = layer_index;
        k.spec.input_length = r.u32();
        k.spec.neuron_count = r.u32();
        k.spec.validate();
        k.enc = read_enc(k.spec.input_length);
        k.dec = read_dec(k.spec.neuron_count);
        set.keys.emplace_back(std::move(k));
      } else {
        throw IntegrityError("unknown layer kind " + std::to_string(kind));
      }
    } catch (const DimensionError& e) {
      throw IntegrityError(std::string("key file layer geometry: ") + e.what());
    }
  }
  if (consumed != nullptr) *consumed = r.position();
  return set;
}

}  // namespace lepcnn
