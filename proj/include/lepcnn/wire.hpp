#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lepcnn/digest.hpp"
#include "lepcnn/tensor.hpp"

// Length-prefixed binary frames, all integers little-endian:
//
//   u32 length   bytes after this field (type + session + body)
//   u8  type     HELLO=1 JOB=2 RESULT=3 ERROR=4
//   u64 session
//   body
namespace lepcnn {

enum class MessageType : uint8_t { kHello = 1, kJob = 2, kResult = 3, kError = 4 };

inline constexpr uint16_t kProtocolVersion = 1;
inline constexpr size_t kFrameHeaderBytes = 4 + 1 + 8;
inline constexpr uint32_t kMaxFrameLength = 64u << 20;

enum class ErrorCode : uint16_t {
  kMalformed = 1,
  kVersionMismatch = 2,
  kModelMismatch = 3,
  kUnknownLayer = 4,
  kDimensionMismatch = 5,
  kHelloRequired = 6,
  kFrameTooLarge = 7,
  kInternal = 8,
};

struct Frame {
  MessageType type = MessageType::kError;
  uint64_t session_id = 0;
  std::vector<uint8_t> body;
};

enum class JobKind : uint8_t { kConv = 0, kFc = 1 };

struct Hello {
  uint16_t version = kProtocolVersion;
  Digest model{};
};

// Masked layer input; elements go out as 24-byte unsigned integers.
struct OffloadJob {
  uint32_t layer_index = 0;
  JobKind kind = JobKind::kConv;
  Tensor3 masked{Shape3{1, 1, 1}};
};

// Masked layer output; elements come back as 32-byte signed integers.
struct OffloadResult {
  uint32_t layer_index = 0;
  Tensor3 masked{Shape3{1, 1, 1}};
  uint64_t compute_ns = 0;
};

struct ErrorReply {
  ErrorCode code = ErrorCode::kInternal;
  std::string message;
};

std::vector<uint8_t> encode_frame(const Frame& frame);

// Parses exactly one whole frame (length prefix included). Throws
// ProtocolError on any inconsistency.
Frame decode_frame(std::span<const uint8_t> bytes);

// Reads the length prefix of a frame header.
uint32_t frame_length(std::span<const uint8_t, 4> prefix);

Frame make_hello(uint64_t session, const Hello& hello);
Frame make_job(uint64_t session, const OffloadJob& job);
Frame make_result(uint64_t session, const OffloadResult& result);
Frame make_error(uint64_t session, ErrorCode code, const std::string& message);

// Body parsers; each throws ProtocolError unless the frame has the right
// type and the body is exactly one well-formed message.
Hello parse_hello(const Frame& frame);
OffloadJob parse_job(const Frame& frame);
OffloadResult parse_result(const Frame& frame);
ErrorReply parse_error(const Frame& frame);

std::string to_string(MessageType type);
std::string to_string(ErrorCode code);

}  // namespace lepcnn
