#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "lepcnn/int256.hpp"

namespace lepcnn {

// Source of random bytes. Key material must come from SecureRandom; tests
// inject SeededRandom (deterministic) or ZeroRandom through the same
// interface.
class RandomSource {
 public:
  virtual ~RandomSource() = default;
  virtual void fill(std::span<uint8_t> out) = 0;

  uint64_t next_u64();
  // Uniform in [0, bound), bound >= 1. Rejection sampling, no modulo bias.
  uint64_t uniform_below(uint64_t bound);
  // Uniform in [0, 1).
  double uniform_unit();
  // Uniform in [lo, hi].
  int64_t uniform_int(int64_t lo, int64_t hi);
  // Uniform in [0, 2^bits), bits <= 192.
  Int256 uniform_bits(unsigned bits);
  // `count` values uniform in [0, 2^bits), drawn with one bulk fill.
  std::vector<Int256> uniform_bits(unsigned bits, size_t count);
};

// Operating-system / OpenSSL CSPRNG.
class SecureRandom final : public RandomSource {
 public:
  void fill(std::span<uint8_t> out) override;
};

// Deterministic stream: AES-256-CTR keyed with SHA-256 of the seed.
class SeededRandom final : public RandomSource {
 public:
  explicit SeededRandom(uint64_t seed);
  ~SeededRandom() override;
  SeededRandom(const SeededRandom&) = delete;
  SeededRandom& operator=(const SeededRandom&) = delete;

  void fill(std::span<uint8_t> out) override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Every byte is zero. Test hook only.
class ZeroRandom final : public RandomSource {
 public:
  void fill(std::span<uint8_t> out) override;
};

}  // namespace lepcnn
