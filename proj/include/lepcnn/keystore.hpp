#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "lepcnn/masking.hpp"
#include "lepcnn/network.hpp"

namespace lepcnn {

// Directory-backed pool of one-time KeySets.
//
//   <dir>/available/<request id>.lepk   ready to claim
//   <dir>/claimed/<request id>.lepk     claimed, being loaded
//   <dir>/consumed.log                  one request id (hex) per line
//   <dir>/lock                          serializes replenish
//
// A claim renames a file out of available/ (atomic, so two claimers can never
// both win), fsyncs, logs the id, and only then parses the file and hands the
// KeySet out. A crash after the rename leaves the key in claimed/, never back
// in available/.
class KeyStore {
 public:
  // Creates the layout if missing.
  explicit KeyStore(std::filesystem::path dir);

  const std::filesystem::path& directory() const { return dir_; }

  // Throws KeyExhausted when nothing is left, IntegrityError on a corrupt
  // key file (the file is still consumed).
  KeySet claim();

  size_t available() const;
  std::vector<uint64_t> available_ids() const;
  std::vector<uint64_t> consumed_ids() const;

  // Adds every KeySet of a batch. The whole batch is rejected with
  // IntegrityError on a bad checksum and DuplicateKeyError if any request id
  // is already available, claimed or consumed, or repeats inside the batch.
  size_t replenish(std::span<const uint8_t> batch);
  size_t replenish(const std::filesystem::path& batch_file);

 private:
  std::filesystem::path dir_;
};

// Batch file: concatenated key files followed by the SHA-256 of everything
// before it.
std::vector<uint8_t> make_batch(std::span<const KeySet> keysets);
std::vector<KeySet> parse_batch(std::span<const uint8_t> batch);

// Key elements for one request: D n^2 + H o^2 per conv, m + T per fc.
uint64_t key_elements_per_request(const NetworkSpec& net);

inline constexpr uint64_t kAccountingBytesPerElement = 20;

// Requests a key budget supports under the 20-byte-per-element accounting.
uint64_t capacity_report(const NetworkSpec& net, uint64_t budget_bytes);

}  // namespace lepcnn
