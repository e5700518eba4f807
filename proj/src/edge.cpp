#include "lepcnn/edge.hpp"

#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>

#include "lepcnn/detail/socket.hpp"
#include "lepcnn/errors.hpp"
#include "lepcnn/masking.hpp"
#include "lepcnn/model_file.hpp"

namespace lepcnn {

EdgeHandler::EdgeHandler(Model model, std::optional<AdversaryConfig> adversary,
                         std::unique_ptr<RandomSource> rng)
    : model_(std::move(model)),
      digest_(model_digest(model_)),
      adversary_(adversary),
      rng_(std::move(rng)) {
  if (adversary_ && !rng_) rng_ = std::make_unique<SecureRandom>();
}

Frame EdgeHandler::handle_bytes(std::span<const uint8_t> bytes, Connection& connection) {
  Frame request;
  try {
    request = decode_frame(bytes);
  } catch (const ProtocolError& e) {
    return make_error(0, ErrorCode::kMalformed, e.what());
  }
  return handle(request, connection);
}

Frame EdgeHandler::handle(const Frame& request, Connection& connection) {
  const uint64_t session = request.session_id;
  try {
    switch (request.type) {
      case MessageType::kHello: {
        const Hello hello = parse_hello(request);
        if (hello.version != kProtocolVersion) {
          return make_error(session, ErrorCode::kVersionMismatch,
                            "edge speaks version " + std::to_string(kProtocolVersion));
        }
        if (hello.model != digest_) {
          return make_error(session, ErrorCode::kModelMismatch,
                            "edge model digest is " + to_hex(digest_));
        }
        connection.greeted = true;
        return make_hello(session, Hello{kProtocolVersion, digest_});
      }
      case MessageType::kJob:
        if (!connection.greeted) {
          return make_error(session, ErrorCode::kHelloRequired, "send HELLO first");
        }
        return handle_job(request);
      default:
        return make_error(session, ErrorCode::kMalformed,
                          "edge does not accept " + to_string(request.type) + " frames");
    }
  } catch (const ProtocolError& e) {
    return make_error(session, ErrorCode::kMalformed, e.what());
  } catch (const DimensionError& e) {
    return make_error(session, ErrorCode::kDimensionMismatch, e.what());
  } catch (const std::exception& e) {
    return make_error(session, ErrorCode::kInternal, e.what());
  }
}

Frame EdgeHandler::handle_job(const Frame& request) {
  const uint64_t session = request.session_id;
  const OffloadJob job = parse_job(request);
  const NetworkSpec& net = model_.net;
  if (job.layer_index >= net.layers.size() || !is_offloaded(net.layers[job.layer_index])) {
    return make_error(session, ErrorCode::kUnknownLayer,
                      "layer " + std::to_string(job.layer_index) + " is not offloaded");
  }
  // Honest masked inputs stay below 2^lambda + 2^gamma.
  for (const Int256& v : job.masked.elements()) {
    if (!v.fits_unsigned(net.fp.lambda + 1)) {
      return make_error(session, ErrorCode::kMalformed, "masked element wider than lambda + 1 bits");
    }
  }
  const auto start = std::chrono::steady_clock::now();
  OffloadResult result;
  result.layer_index = job.layer_index;
  const LayerSpec& layer = net.layers[job.layer_index];
  if (const auto* conv = std::get_if<ConvLayerSpec>(&layer)) {
    if (job.kind != JobKind::kConv) {
      return make_error(session, ErrorCode::kDimensionMismatch, "layer is a conv layer");
    }
    if (job.masked.shape() != conv->input_shape()) {
      return make_error(session, ErrorCode::kDimensionMismatch,
                        "conv input must be " + conv->input_shape().to_string() + ", got " +
                            job.masked.shape().to_string());
    }
    result.masked = edge_eval_conv(job.masked, *conv, model_.conv_params(job.layer_index));
  } else {
    const auto& fc = std::get<FcLayerSpec>(layer);
    if (job.kind != JobKind::kFc) {
      return make_error(session, ErrorCode::kDimensionMismatch, "layer is an fc layer");
    }
    const Shape3 want{1, 1, fc.input_length};
    if (job.masked.shape() != want) {
      return make_error(session, ErrorCode::kDimensionMismatch,
                        "fc input must be " + want.to_string() + ", got " +
                            job.masked.shape().to_string());
    }
    result.masked = Tensor3(fc.output_shape(),
                            edge_eval_fc(job.masked.elements(), fc,
                                         model_.fc_params(job.layer_index)));
  }
  if (adversary_) {
    std::lock_guard lock(rng_mu_);
    corrupt(result.masked.elements(), *adversary_, net.fp.lambda, *rng_);
  }
  result.compute_ns = static_cast<uint64_t>(
      std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() -
                                                           start)
          .count());
  return make_result(session, result);
}

EdgeServer::EdgeServer(std::shared_ptr<EdgeHandler> handler, const std::string& bind)
    : handler_(std::move(handler)) {
  detail::Socket s = detail::Socket::listen(detail::parse_endpoint(bind));
  port_ = s.local_port();
  listen_fd_ = s.release();
}

EdgeServer::~EdgeServer() {
  stop();
  if (listen_fd_ >= 0) ::close(listen_fd_);
}

void EdgeServer::start() {
  acceptor_ = std::thread([this] { run(); });
}

void EdgeServer::run() {
  while (!stopping_) {
    const int fd = ::accept4(listen_fd_, nullptr, nullptr, SOCK_CLOEXEC);
    if (fd < 0) {
      if (stopping_) break;
      if (errno == EINTR || errno == ECONNABORTED) continue;
      break;
    }
    std::lock_guard lock(mu_);
    if (stopping_) {
      ::close(fd);
      break;
    }
    ++connections_;
    ++active_;
    open_fds_.push_back(fd);
    std::thread([this, fd] { serve_connection(fd); }).detach();
  }
}

void EdgeServer::stop() {
  if (stopping_.exchange(true)) return;
  if (listen_fd_ >= 0) ::shutdown(listen_fd_, SHUT_RDWR);
  if (acceptor_.joinable()) acceptor_.join();
  std::unique_lock lock(mu_);
  for (int fd : open_fds_) ::shutdown(fd, SHUT_RDWR);
  idle_.wait(lock, [this] { return active_ == 0; });
}

void EdgeServer::serve_connection(int fd) {
  {
    detail::Socket socket(fd);
    serve_frames(socket);
    std::lock_guard lock(mu_);
    open_fds_.erase(std::remove(open_fds_.begin(), open_fds_.end(), fd), open_fds_.end());
    // `socket` closes after leaving open_fds_, so stop() never shuts down a
    // recycled descriptor number.
  }
  std::lock_guard lock(mu_);
  --active_;
  idle_.notify_all();
}

void EdgeServer::serve_frames(detail::Socket& socket) {
  EdgeHandler::Connection state;
  try {
    for (;;) {
      std::optional<Frame> request;
      try {
        request = detail::recv_frame(socket);
      } catch (const detail::FrameTooLarge& e) {
        detail::send_frame(socket, make_error(0, ErrorCode::kFrameTooLarge, e.what()));
        break;
      } catch (const ProtocolError& e) {
        detail::send_frame(socket, make_error(0, ErrorCode::kMalformed, e.what()));
        continue;
      }
      if (!request) break;
      ++frames_;
      detail::send_frame(socket, handler_->handle(*request, state));
    }
  } catch (const NetworkError&) {
    // Peer went away; nothing to answer.
  }
}

}  // namespace lepcnn
