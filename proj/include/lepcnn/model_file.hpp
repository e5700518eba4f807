#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lepcnn/digest.hpp"
#include "lepcnn/network.hpp"

namespace lepcnn {

inline constexpr uint16_t kModelFileVersion = 1;

// LEPM binary model file; layout in docs/formats.md. Ends with the SHA-256
// of everything before it.
std::vector<uint8_t> serialize_model(const Model& model);
// Throws IntegrityError on malformed input; the result is validated.
Model parse_model(std::span<const uint8_t> data);

void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

// SHA-256 of the serialized model; client and edge compare it on HELLO.
Digest model_digest(const Model& model);

// Text architecture description, one layer per line:
//
//   input 227 227 3
//   fixed gamma=30 lambda=160 scale=16 weight_bits=16
//   conv kernels=96 size=11 stride=4 pad=0
//   relu
//   maxpool size=3 stride=2
//   avgpool size=2 stride=2
//   fc 4096
//
// '#' starts a comment. conv and fc take their input geometry from the
// previous layer. Throws ParamViolation with the line number on bad syntax
// and DimensionError when the chain does not fit.
NetworkSpec parse_architecture(std::string_view text);
std::string format_architecture(const NetworkSpec& net);

}  // namespace lepcnn
