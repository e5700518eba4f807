#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace lepcnn {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor / layer geometry does not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A value exceeds the bit budget it must fit in.
class RangeError : public Error {
 public:
  using Error::Error;
};

// FpParams or model parameters violate a required inequality.
class ParamViolation : public Error {
 public:
  using Error::Error;
};

// A one-time key pair was used twice (or decrypted before encrypting).
class KeyReuseError : public Error {
 public:
  using Error::Error;
};

class KeyExhausted : public Error {
 public:
  using Error::Error;
};

// Corrupt key file, bad checksum or malformed model file.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

class DuplicateKeyError : public Error {
 public:
  using Error::Error;
};

class ProtocolError : public Error {
 public:
  using Error::Error;
};

class NetworkError : public Error {
 public:
  using Error::Error;
};

// An audited layer returned at least one element that does not match the
// local recomputation.
class AuditFailure : public Error {
 public:
  AuditFailure(uint32_t layer_index, uint64_t position)
      : Error("audit failed at layer " + std::to_string(layer_index) +
              ", output position " + std::to_string(position)),
        layer_index_(layer_index),
        position_(position) {}

  uint32_t layer_index() const { return layer_index_; }
  uint64_t position() const { return position_; }

 private:
  uint32_t layer_index_;
  uint64_t position_;
};

}  // namespace lepcnn
