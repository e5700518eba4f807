#include "lepcnn/wire.hpp"

#include "lepcnn/detail/bytes.hpp"
#include "lepcnn/errors.hpp"
#include "lepcnn/fixedpoint.hpp"

namespace lepcnn {
namespace {

using Reader = detail::ByteReader<ProtocolError>;

// Dimension fields are capped well below anything a frame could carry.
constexpr uint32_t kMaxDim = 1u << 24;

void expect_type(const Frame& frame, MessageType type) {
  if (frame.type != type) {
    throw ProtocolError("expected " + to_string(type) + " frame, got " + to_string(frame.type));
  }
}

Shape3 read_shape(Reader& r) {
  Shape3 s;
  s.height = r.u32();
  s.width = r.u32();
  s.depth = r.u32();
  if (s.height == 0 || s.width == 0 || s.depth == 0 || s.height > kMaxDim ||
      s.width > kMaxDim || s.depth > kMaxDim) {
    throw ProtocolError("bad tensor shape " + s.to_string());
  }
  return s;
}

void write_shape(detail::ByteWriter& w, const Shape3& s) {
  w.u32(s.height);
  w.u32(s.width);
  w.u32(s.depth);
}

Tensor3 read_elements(Reader& r, const Shape3& shape, size_t width, bool is_signed) {
  r.need_items(shape.size(), width);
  std::vector<Int256> values;
  values.reserve(shape.size());
  for (uint64_t i = 0; i < shape.size(); ++i) values.push_back(r.integer(width, is_signed));
  return Tensor3(shape, std::move(values));
}

void expect_done(const Reader& r, const char* what) {
  if (!r.done()) {
    throw ProtocolError(std::string(what) + " body has " + std::to_string(r.remaining()) +
                        " trailing bytes");
  }
}

}  // namespace

std::vector<uint8_t> encode_frame(const Frame& frame) {
  const uint64_t length = 1 + 8 + frame.body.size();
  if (length > kMaxFrameLength) {
    throw ProtocolError("frame of " + std::to_string(length) + " bytes exceeds the limit");
  }
  detail::ByteWriter w;
  w.bytes().reserve(4 + length);
  w.u32(static_cast<uint32_t>(length));
  w.u8(static_cast<uint8_t>(frame.type));
  w.u64(frame.session_id);
  w.raw(frame.body);
  return w.take();
}

uint32_t frame_length(std::span<const uint8_t, 4> prefix) {
  return uint32_t{prefix[0]} | uint32_t{prefix[1]} << 8 | uint32_t{prefix[2]} << 16 |
         uint32_t{prefix[3]} << 24;
}

Frame decode_frame(std::span<const uint8_t> bytes) {
  Reader r(bytes);
  const uint32_t length = r.u32();
  if (length < 9) throw ProtocolError("frame length " + std::to_string(length) + " too short");
  if (length > kMaxFrameLength) throw ProtocolError("frame length over the limit");
  if (r.remaining() != length) {
    throw ProtocolError("frame length " + std::to_string(length) + " but " +
                        std::to_string(r.remaining()) + " bytes follow");
  }
  Frame f;
  const uint8_t type = r.u8();
  if (type < 1 || type > 4) throw ProtocolError("unknown message type " + std::to_string(type));
  f.type = static_cast<MessageType>(type);
  f.session_id = r.u64();
  const auto body = r.raw(r.remaining());
  f.body.assign(body.begin(), body.end());
  return f;
}

Frame make_hello(uint64_t session, const Hello& hello) {
  detail::ByteWriter w;
  w.u16(hello.version);
  w.raw(hello.model);
  return {MessageType::kHello, session, w.take()};
}

Frame make_job(uint64_t session, const OffloadJob& job) {
  detail::ByteWriter w;
  w.bytes().reserve(4 + 1 + 12 + job.masked.size() * kMaskedInputBytes);
  w.u32(job.layer_index);
  w.u8(static_cast<uint8_t>(job.kind));
  write_shape(w, job.masked.shape());
  for (const Int256& v : job.masked.elements()) w.integer(v, kMaskedInputBytes, false);
  return {MessageType::kJob, session, w.take()};
}

Frame make_result(uint64_t session, const OffloadResult& result) {
  detail::ByteWriter w;
  w.bytes().reserve(4 + 12 + 8 + result.masked.size() * kMaskedOutputBytes);
  w.u32(result.layer_index);
  write_shape(w, result.masked.shape());
  w.u64(result.compute_ns);
  for (const Int256& v : result.masked.elements()) w.integer(v, kMaskedOutputBytes, true);
  return {MessageType::kResult, session, w.take()};
}

Frame make_error(uint64_t session, ErrorCode code, const std::string& message) {
  detail::ByteWriter w;
  w.u16(static_cast<uint16_t>(code));
  w.u32(static_cast<uint32_t>(message.size()));
  w.raw(std::span(reinterpret_cast<const uint8_t*>(message.data()), message.size()));
  return {MessageType::kError, session, w.take()};
}

Hello parse_hello(const Frame& frame) {
  expect_type(frame, MessageType::kHello);
  Reader r(frame.body);
  Hello h;
  h.version = r.u16();
  const auto digest = r.raw(h.model.size());
  std::copy(digest.begin(), digest.end(), h.model.begin());
  expect_done(r, "HELLO");
  return h;
}

OffloadJob parse_job(const Frame& frame) {
  expect_type(frame, MessageType::kJob);
  Reader r(frame.body);
  OffloadJob job;
  job.layer_index = r.u32();
  const uint8_t kind = r.u8();
  if (kind > 1) throw ProtocolError("unknown job kind " + std::to_string(kind));
  job.kind = static_cast<JobKind>(kind);
  const Shape3 shape = read_shape(r);
  job.masked = read_elements(r, shape, kMaskedInputBytes, false);
  expect_done(r, "JOB");
  return job;
}

OffloadResult parse_result(const Frame& frame) {
  expect_type(frame, MessageType::kResult);
  Reader r(frame.body);
  OffloadResult res;
  res.layer_index = r.u32();
  const Shape3 shape = read_shape(r);
  res.compute_ns = r.u64();
  res.masked = read_elements(r, shape, kMaskedOutputBytes, true);
  expect_done(r, "RESULT");
  return res;
}

ErrorReply parse_error(const Frame& frame) {
  expect_type(frame, MessageType::kError);
  Reader r(frame.body);
  ErrorReply e;
  e.code = static_cast<ErrorCode>(r.u16());
  const uint32_t n = r.u32();
  const auto text = r.raw(n);
  e.message.assign(text.begin(), text.end());
  expect_done(r, "ERROR");
  return e;
}

std::string to_string(MessageType type) {
  switch (type) {
    case MessageType::kHello: return "HELLO";
    case MessageType::kJob: return "JOB";
    case MessageType::kResult: return "RESULT";
    case MessageType::kError: return "ERROR";
  }
  return "type " + std::to_string(static_cast<int>(type));
}

std::string to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMalformed: return "malformed frame";
    case ErrorCode::kVersionMismatch: return "protocol version mismatch";
    case ErrorCode::kModelMismatch: return "model digest mismatch";
    case ErrorCode::kUnknownLayer: return "unknown layer";
    case ErrorCode::kDimensionMismatch: return "dimension mismatch";
    case ErrorCode::kHelloRequired: return "HELLO required";
    case ErrorCode::kFrameTooLarge: return "frame too large";
    case ErrorCode::kInternal: return "internal error";
  }
  return "error " + std::to_string(static_cast<int>(code));
}

}  // namespace lepcnn
