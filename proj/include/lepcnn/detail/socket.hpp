#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>

#include "lepcnn/errors.hpp"
#include "lepcnn/wire.hpp"

namespace lepcnn::detail {

// "host:port"; host may be empty (any address) or a bracketed IPv6 literal.
struct Endpoint {
  std::string host;
  std::string port;
};
Endpoint parse_endpoint(const std::string& text);

// Owning stream socket. I/O failures and EOF throw NetworkError.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket&& other) noexcept : fd_(std::exchange(other.fd_, -1)) {}
  Socket& operator=(Socket&& other) noexcept;
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket() { close(); }

  static Socket connect(const Endpoint& endpoint, std::chrono::milliseconds timeout);
  // Listening socket; port "0" picks a free one.
  static Socket listen(const Endpoint& endpoint);

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }
  uint16_t local_port() const;
  void close();
  int release() { return std::exchange(fd_, -1); }
  // Wakes a thread blocked in accept / recv on this socket.
  void shutdown();

  void send_all(std::span<const uint8_t> data);
  // False on orderly EOF before the first byte; throws on EOF mid-buffer.
  bool recv_all(std::span<uint8_t> out);
  void set_receive_timeout(std::chrono::milliseconds timeout);

 private:
  int fd_ = -1;
};

void send_frame(Socket& socket, const Frame& frame);

// Next frame, or nullopt on clean EOF between frames. A length prefix that
// is too short is consumed together with its bytes and reported as
// ProtocolError; one over kMaxFrameLength throws FrameTooLarge since the
// stream cannot be resynchronized.
class FrameTooLarge : public ProtocolError {
 public:
  using ProtocolError::ProtocolError;
};
std::optional<Frame> recv_frame(Socket& socket);

}  // namespace lepcnn::detail
