#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "lepcnn/keystore.hpp"
#include "lepcnn/masking.hpp"
#include "lepcnn/network.hpp"
#include "lepcnn/rng.hpp"
#include "lepcnn/wire.hpp"

namespace lepcnn {

namespace detail {
class Socket;
}

// A HELLO-verified connection to an edge.
class EdgeConnection {
 public:
  EdgeConnection(const std::string& endpoint, const Digest& model,
                 std::chrono::milliseconds timeout = std::chrono::seconds(60));
  ~EdgeConnection();
  EdgeConnection(EdgeConnection&&) noexcept;
  EdgeConnection& operator=(EdgeConnection&&) noexcept;

  void send(const Frame& frame);
  // Throws NetworkError when the edge closes the connection.
  Frame receive();

 private:
  std::unique_ptr<detail::Socket> socket_;
};

enum class Direction : uint8_t { kToEdge, kFromEdge };

// Called with every frame the client sends or receives, e.g. to count bytes
// or to check that nothing unmasked leaves the device.
using FrameObserver = std::function<void(Direction, const Frame&)>;

struct ClientOptions {
  std::string endpoint;
  // Sample rate per conv layer in network order; empty disables auditing.
  std::vector<double> conv_audit_rates;
  // Same for fc layers; empty (the default) leaves fc results unaudited.
  std::vector<double> fc_audit_rates;
  std::chrono::milliseconds timeout = std::chrono::seconds(60);
  FrameObserver observer;
};

struct LayerAudit {
  uint32_t layer_index = 0;
  uint64_t returned = 0;
  uint64_t samples = 0;
  uint64_t flops = 0;
};

struct LayerTraffic {
  uint32_t layer_index = 0;
  uint64_t elements_sent = 0;
  uint64_t elements_received = 0;
  uint64_t bytes_sent = 0;      // whole frames
  uint64_t bytes_received = 0;
  uint64_t edge_compute_ns = 0;
  int attempts = 0;
};

struct InferenceResult {
  Tensor3 output{Shape3{1, 1, 1}};
  uint64_t request_id = 0;
  std::vector<LayerAudit> audits;
  std::vector<LayerTraffic> traffic;
};

// Runs the network with every conv / fc layer offloaded under `keys`, and
// relu / pooling done locally. Each job is retried once on a network failure.
// Throws AuditFailure naming the layer when a sampled element disagrees with
// the local recomputation; the result is then never decrypted.
InferenceResult infer_offloaded(const Tensor3& input, const Model& model, KeySet keys,
                                const ClientOptions& options, RandomSource& rng);

// Claims one KeySet from `store` before anything is sent.
InferenceResult infer_offloaded(const Tensor3& input, const Model& model, KeyStore& store,
                                const ClientOptions& options, RandomSource& rng);

}  // namespace lepcnn
