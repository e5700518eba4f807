#include "lepcnn/rng.hpp"

#include <openssl/evp.h>
#include <openssl/rand.h>

#include <algorithm>
#include <array>
#include <cstring>

#include "lepcnn/digest.hpp"
#include "lepcnn/errors.hpp"

namespace lepcnn {

uint64_t RandomSource::next_u64() {
  std::array<uint8_t, 8> buf;
  fill(buf);
  uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | buf[i];
  return v;
}

uint64_t RandomSource::uniform_below(uint64_t bound) {
  if (bound == 0) throw RangeError("uniform_below: bound must be >= 1");
  // Reject the top partial copy of [0, bound) in the 64-bit range.
  const uint64_t limit = UINT64_MAX - (UINT64_MAX % bound + 1) % bound;
  for (;;) {
    const uint64_t v = next_u64();
    if (v <= limit) return v % bound;
  }
}

double RandomSource::uniform_unit() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

int64_t RandomSource::uniform_int(int64_t lo, int64_t hi) {
  if (hi < lo) throw RangeError("uniform_int: empty range");
  const uint64_t span = static_cast<uint64_t>(hi) - static_cast<uint64_t>(lo);
  const uint64_t off = span == UINT64_MAX ? next_u64() : uniform_below(span + 1);
  return static_cast<int64_t>(static_cast<uint64_t>(lo) + off);
}

namespace {

Int256 masked_value(std::span<const uint8_t, 24> bytes, unsigned bits) {
  Int256::Limbs l{};
  for (size_t i = 0; i < 24; ++i) {
    l[i / 8] |= static_cast<uint64_t>(bytes[i]) << (8 * (i % 8));
  }
  for (unsigned limb = 0; limb < 4; ++limb) {
    const unsigned lo = limb * 64;
    if (bits <= lo) {
      l[limb] = 0;
    } else if (bits < lo + 64) {
      l[limb] &= (1ULL << (bits - lo)) - 1;
    }
  }
  return Int256::from_limbs(l);
}

}  // namespace

Int256 RandomSource::uniform_bits(unsigned bits) {
  if (bits > 192) throw RangeError("uniform_bits: at most 192 bits");
  std::array<uint8_t, 24> buf;
  fill(buf);
  return masked_value(buf, bits);
}

std::vector<Int256> RandomSource::uniform_bits(unsigned bits, size_t count) {
  if (bits > 192) throw RangeError("uniform_bits: at most 192 bits");
  std::vector<Int256> out;
  out.reserve(count);
  constexpr size_t kChunk = 4096;
  std::vector<uint8_t> buf(kChunk * 24);
  for (size_t done = 0; done < count;) {
    const size_t n = std::min(kChunk, count - done);
    fill(std::span(buf.data(), n * 24));
    for (size_t i = 0; i < n; ++i) {
      out.push_back(masked_value(std::span<const uint8_t, 24>(buf.data() + 24 * i, 24), bits));
    }
    done += n;
  }
  return out;
}

void SecureRandom::fill(std::span<uint8_t> out) {
  // RAND_bytes takes an int length.
  size_t off = 0;
  while (off < out.size()) {
    const size_t n = std::min<size_t>(out.size() - off, 1 << 30);
    if (RAND_bytes(out.data() + off, static_cast<int>(n)) != 1) {
      throw Error("RAND_bytes failed");
    }
    off += n;
  }
}

struct SeededRandom::Impl {
  EVP_CIPHER_CTX* ctx = nullptr;
  ~Impl() { EVP_CIPHER_CTX_free(ctx); }
};

SeededRandom::SeededRandom(uint64_t seed) : impl_(std::make_unique<Impl>()) {
  std::array<uint8_t, 8> seed_bytes;
  for (int i = 0; i < 8; ++i) seed_bytes[i] = static_cast<uint8_t>(seed >> (8 * i));
  const Digest key = sha256(seed_bytes);
  const std::array<uint8_t, 16> iv{};
  impl_->ctx = EVP_CIPHER_CTX_new();
  if (impl_->ctx == nullptr ||
      EVP_EncryptInit_ex(impl_->ctx, EVP_aes_256_ctr(), nullptr, key.data(),
                         iv.data()) != 1) {
    throw Error("SeededRandom: cipher init failed");
  }
}

SeededRandom::~SeededRandom() = default;

void SeededRandom::fill(std::span<uint8_t> out) {
  // Keystream = AES-CTR encryption of zeros.
  std::memset(out.data(), 0, out.size());
  size_t off = 0;
  while (off < out.size()) {
    const int n = static_cast<int>(std::min<size_t>(out.size() - off, 1 << 30));
    int produced = 0;
    if (EVP_EncryptUpdate(impl_->ctx, out.data() + off, &produced,
                          out.data() + off, n) != 1 ||
        produced != n) {
      throw Error("SeededRandom: keystream generation failed");
    }
    off += static_cast<size_t>(n);
  }
}

void ZeroRandom::fill(std::span<uint8_t> out) {
  std::fill(out.begin(), out.end(), uint8_t{0});
}

}  // namespace lepcnn
