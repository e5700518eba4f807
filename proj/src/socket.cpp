#include "lepcnn/detail/socket.hpp"

#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "lepcnn/errors.hpp"

namespace lepcnn::detail {
namespace {

[[noreturn]] void throw_net(const std::string& what, int err = errno) {
  throw NetworkError(what + ": " + std::strerror(err));
}

struct AddrInfo {
  addrinfo* list = nullptr;
  ~AddrInfo() {
    if (list != nullptr) ::freeaddrinfo(list);
  }
};

AddrInfo resolve(const Endpoint& ep, bool passive) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = passive ? AI_PASSIVE : 0;
  AddrInfo info;
  const int rc = ::getaddrinfo(ep.host.empty() ? nullptr : ep.host.c_str(), ep.port.c_str(),
                               &hints, &info.list);
  if (rc != 0) {
    throw NetworkError("resolve " + ep.host + ":" + ep.port + ": " + ::gai_strerror(rc));
  }
  return info;
}

}  // namespace

Endpoint parse_endpoint(const std::string& text) {
  const size_t colon = text.rfind(':');
  if (colon == std::string::npos || colon + 1 == text.size()) {
    throw NetworkError("endpoint \"" + text + "\" is not host:port");
  }
  std::string host = text.substr(0, colon);
  if (host.size() >= 2 && host.front() == '[' && host.back() == ']') {
    host = host.substr(1, host.size() - 2);
  }
  return {host, text.substr(colon + 1)};
}

Socket& Socket::operator=(Socket&& other) noexcept {
  if (this != &other) {
    close();
    fd_ = std::exchange(other.fd_, -1);
  }
  return *this;
}

void Socket::close() {
  if (fd_ >= 0) ::close(fd_);
  fd_ = -1;
}

void Socket::shutdown() {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

Socket Socket::connect(const Endpoint& endpoint, std::chrono::milliseconds timeout) {
  AddrInfo info = resolve(endpoint, false);
  int last_error = 0;
  for (addrinfo* a = info.list; a != nullptr; a = a->ai_next) {
    Socket s(::socket(a->ai_family, a->ai_socktype | SOCK_CLOEXEC, a->ai_protocol));
    if (!s.valid()) {
      last_error = errno;
      continue;
    }
    timeval tv{};
    tv.tv_sec = timeout.count() / 1000;
    tv.tv_usec = (timeout.count() % 1000) * 1000;
    ::setsockopt(s.fd(), SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
    if (::connect(s.fd(), a->ai_addr, a->ai_addrlen) == 0) {
      const int one = 1;
      ::setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
      s.set_receive_timeout(timeout);
      return s;
    }
    last_error = errno;
  }
  throw_net("connect " + endpoint.host + ":" + endpoint.port, last_error);
}

Socket Socket::listen(const Endpoint& endpoint) {
  AddrInfo info = resolve(endpoint, true);
  int last_error = 0;
  for (addrinfo* a = info.list; a != nullptr; a = a->ai_next) {
    Socket s(::socket(a->ai_family, a->ai_socktype | SOCK_CLOEXEC, a->ai_protocol));
    if (!s.valid()) {
      last_error = errno;
      continue;
    }
    const int one = 1;
    ::setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (::bind(s.fd(), a->ai_addr, a->ai_addrlen) == 0 && ::listen(s.fd(), 64) == 0) return s;
    last_error = errno;
  }
  throw_net("listen " + endpoint.host + ":" + endpoint.port, last_error);
}

uint16_t Socket::local_port() const {
  sockaddr_storage addr{};
  socklen_t len = sizeof addr;
  if (::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len) != 0) throw_net("getsockname");
  if (addr.ss_family == AF_INET6) {
    return ntohs(reinterpret_cast<sockaddr_in6*>(&addr)->sin6_port);
  }
  return ntohs(reinterpret_cast<sockaddr_in*>(&addr)->sin_port);
}

void Socket::set_receive_timeout(std::chrono::milliseconds timeout) {
  timeval tv{};
  tv.tv_sec = timeout.count() / 1000;
  tv.tv_usec = (timeout.count() % 1000) * 1000;
  ::setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
}

void Socket::send_all(std::span<const uint8_t> data) {
  size_t off = 0;
  while (off < data.size()) {
    const ssize_t n = ::send(fd_, data.data() + off, data.size() - off, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw_net("send");
    }
    off += static_cast<size_t>(n);
  }
}

bool Socket::recv_all(std::span<uint8_t> out) {
  size_t off = 0;
  while (off < out.size()) {
    const ssize_t n = ::recv(fd_, out.data() + off, out.size() - off, 0);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw_net(errno == EAGAIN || errno == EWOULDBLOCK ? "recv timed out" : "recv");
    }
    if (n == 0) {
      if (off == 0) return false;
      throw NetworkError("connection closed mid-frame");
    }
    off += static_cast<size_t>(n);
  }
  return true;
}

void send_frame(Socket& socket, const Frame& frame) { socket.send_all(encode_frame(frame)); }

std::optional<Frame> recv_frame(Socket& socket) {
  std::vector<uint8_t> buf(4);
  if (!socket.recv_all(buf)) return std::nullopt;
  const uint32_t length = frame_length(std::span<const uint8_t, 4>(buf.data(), 4));
  if (length > kMaxFrameLength) {
    throw FrameTooLarge("frame length " + std::to_string(length) + " over the limit");
  }
  buf.resize(4 + length);
  if (length > 0 && !socket.recv_all(std::span(buf).subspan(4))) {
    throw NetworkError("connection closed mid-frame");
  }
  return decode_frame(buf);
}

}  // namespace lepcnn::detail
