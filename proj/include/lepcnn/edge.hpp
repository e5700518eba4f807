#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "lepcnn/integrity.hpp"
#include "lepcnn/network.hpp"
#include "lepcnn/rng.hpp"
#include "lepcnn/wire.hpp"

namespace lepcnn {

namespace detail {
class Socket;
}

// Evaluates offload jobs for one model. Holds no keys; everything it sees is
// masked. Thread safe.
class EdgeHandler {
 public:
  // `adversary` makes the edge dishonest: each result has ceil(theta N)
  // elements replaced by random values drawn from `rng`.
  explicit EdgeHandler(Model model, std::optional<AdversaryConfig> adversary = {},
                       std::unique_ptr<RandomSource> rng = nullptr);

  struct Connection {
    bool greeted = false;
  };

  // Reply for one request frame. Malformed or unexpected input yields an
  // ERROR frame; this never throws on untrusted input.
  Frame handle(const Frame& request, Connection& connection);
  // Same, for raw bytes holding exactly one frame.
  Frame handle_bytes(std::span<const uint8_t> bytes, Connection& connection);

  const Model& model() const { return model_; }
  const Digest& digest() const { return digest_; }

 private:
  Frame handle_job(const Frame& request);

  Model model_;
  Digest digest_;
  std::optional<AdversaryConfig> adversary_;
  std::unique_ptr<RandomSource> rng_;
  std::mutex rng_mu_;
};

// TCP front end: one thread per connection, frames on a connection answered
// in order.
class EdgeServer {
 public:
  EdgeServer(std::shared_ptr<EdgeHandler> handler, const std::string& bind);
  ~EdgeServer();
  EdgeServer(const EdgeServer&) = delete;
  EdgeServer& operator=(const EdgeServer&) = delete;

  uint16_t port() const { return port_; }
  // Accepts connections on a background thread.
  void start();
  // Accepts on the calling thread until stop().
  void run();
  void stop();

  uint64_t connections_served() const { return connections_; }
  uint64_t frames_served() const { return frames_; }

 private:
  void serve_connection(int fd);
  void serve_frames(detail::Socket& socket);

  std::shared_ptr<EdgeHandler> handler_;
  int listen_fd_ = -1;
  uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
  std::atomic<uint64_t> connections_{0};
  std::atomic<uint64_t> frames_{0};
  std::thread acceptor_;
  std::mutex mu_;
  std::condition_variable idle_;
  size_t active_ = 0;
  std::vector<int> open_fds_;
};

}  // namespace lepcnn
