#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>

namespace lepcnn {

using Digest = std::array<uint8_t, 32>;

Digest sha256(std::span<const uint8_t> data);
std::string to_hex(std::span<const uint8_t> bytes);

}  // namespace lepcnn
