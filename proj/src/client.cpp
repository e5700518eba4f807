#include "lepcnn/client.hpp"

#include "lepcnn/detail/socket.hpp"
#include "lepcnn/engine.hpp"
#include "lepcnn/errors.hpp"
#include "lepcnn/integrity.hpp"
#include "lepcnn/model_file.hpp"

namespace lepcnn {
namespace {

[[noreturn]] void throw_edge_error(const Frame& frame) {
  const ErrorReply e = parse_error(frame);
  throw ProtocolError("edge replied " + to_string(e.code) + ": " + e.message);
}

}  // namespace

EdgeConnection::EdgeConnection(const std::string& endpoint, const Digest& model,
                               std::chrono::milliseconds timeout)
    : socket_(std::make_unique<detail::Socket>(
          detail::Socket::connect(detail::parse_endpoint(endpoint), timeout))) {
  send(make_hello(0, Hello{kProtocolVersion, model}));
  const Frame reply = receive();
  if (reply.type == MessageType::kError) throw_edge_error(reply);
  const Hello hello = parse_hello(reply);
  if (hello.version != kProtocolVersion || hello.model != model) {
    throw ProtocolError("edge HELLO does not match our version and model");
  }
}

EdgeConnection::~EdgeConnection() = default;
EdgeConnection::EdgeConnection(EdgeConnection&&) noexcept = default;
EdgeConnection& EdgeConnection::operator=(EdgeConnection&&) noexcept = default;

void EdgeConnection::send(const Frame& frame) { detail::send_frame(*socket_, frame); }

Frame EdgeConnection::receive() {
  std::optional<Frame> f = detail::recv_frame(*socket_);
  if (!f) throw NetworkError("edge closed the connection");
  return std::move(*f);
}

namespace {

class Session {
 public:
  Session(const Model& model, const ClientOptions& options, uint64_t session_id)
      : options_(options), digest_(model_digest(model)), session_id_(session_id) {}

  // Sends the job and returns the edge's answer, reconnecting and resending
  // once if the transport fails. Results are deterministic, so a resend is
  // harmless.
  OffloadResult run(const OffloadJob& job, LayerTraffic& traffic) {
    const Frame request = make_job(session_id_, job);
    const size_t request_bytes = kFrameHeaderBytes + request.body.size();
    for (int attempt = 1;; ++attempt) {
      traffic.attempts = attempt;
      try {
        if (!connection_) connection_.emplace(options_.endpoint, digest_, options_.timeout);
        if (options_.observer) options_.observer(Direction::kToEdge, request);
        connection_->send(request);
        traffic.bytes_sent += request_bytes;
        const Frame reply = connection_->receive();
        traffic.bytes_received += kFrameHeaderBytes + reply.body.size();
        if (options_.observer) options_.observer(Direction::kFromEdge, reply);
        if (reply.type == MessageType::kError) throw_edge_error(reply);
        if (reply.session_id != session_id_) {
          throw ProtocolError("reply for session " + std::to_string(reply.session_id));
        }
        OffloadResult result = parse_result(reply);
        if (result.layer_index != job.layer_index) {
          throw ProtocolError("reply for layer " + std::to_string(result.layer_index));
        }
        return result;
      } catch (const NetworkError&) {
        connection_.reset();
        if (attempt >= 2) throw;
      }
    }
  }

 private:
  const ClientOptions& options_;
  Digest digest_;
  uint64_t session_id_;
  std::optional<EdgeConnection> connection_;
};

double rate_for(const std::vector<double>& rates, size_t ordinal, const char* kind) {
  if (rates.empty()) return 0.0;
  if (ordinal >= rates.size()) {
    throw ParamViolation(std::string("no audit rate given for ") + kind + " layer " +
                         std::to_string(ordinal + 1));
  }
  return rates[ordinal];
}

void expect_shape(const Tensor3& t, const Shape3& want, uint32_t layer) {
  if (t.shape() != want) {
    throw ProtocolError("edge returned " + t.shape().to_string() + " for layer " +
                        std::to_string(layer) + ", expected " + want.to_string());
  }
}

}  // namespace

InferenceResult infer_offloaded(const Tensor3& input, const Model& model, KeySet keys,
                                const ClientOptions& options, RandomSource& rng) {
  const NetworkSpec& net = model.net;
  keys.check_matches(net);
  if (input.shape() != net.input) {
    throw DimensionError("input is " + input.shape().to_string() + ", network expects " +
                         net.input.to_string());
  }
  check_plaintext_range(input, net.fp);

  InferenceResult out;
  out.request_id = keys.request_id;
  Session session(model, options, rng.next_u64());
  Tensor3 x = input;
  size_t key_ordinal = 0, conv_ordinal = 0, fc_ordinal = 0;
  for (uint32_t i = 0; i < net.layers.size(); ++i) {
    const LayerSpec& layer = net.layers[i];
    if (!is_offloaded(layer)) {
      x = apply_local_layer(x, layer);
      continue;
    }
    LayerTraffic traffic;
    traffic.layer_index = i;
    LayerKey& key = keys.keys[key_ordinal++];
    if (const auto* conv = std::get_if<ConvLayerSpec>(&layer)) {
      auto& pair = std::get<ConvKeyPair>(key);
      const double rate = rate_for(options.conv_audit_rates, conv_ordinal++, "conv");
      OffloadJob job{i, JobKind::kConv, ppcl_encrypt(x, pair, net.fp)};
      traffic.elements_sent = job.masked.size();
      OffloadResult res = session.run(job, traffic);
      expect_shape(res.masked, conv->output_shape(), i);
      traffic.elements_received = res.masked.size();
      traffic.edge_compute_ns = res.compute_ns;
      out.traffic.push_back(traffic);
      if (rate > 0.0) {
        const AuditPlan plan = make_audit_plan(res.masked.size(), rate, rng);
        const AuditResult a =
            audit_conv(res.masked, plan, job.masked, *conv, model.conv_params(i));
        if (!a.passed) throw AuditFailure(i, a.position);
        out.audits.push_back({i, res.masked.size(), a.samples, a.flops});
      }
      x = requantize(ppcl_decrypt(res.masked, pair), net.fp);
    } else {
      const auto& fc = std::get<FcLayerSpec>(layer);
      auto& pair = std::get<FcKeyPair>(key);
      const double rate = rate_for(options.fc_audit_rates, fc_ordinal++, "fc");
      const Tensor3 flat = x.flattened();
      OffloadJob job{i, JobKind::kFc,
                     Tensor3({1, 1, fc.input_length}, ppfl_encrypt(flat.elements(), pair, net.fp))};
      traffic.elements_sent = job.masked.size();
      OffloadResult res = session.run(job, traffic);
      expect_shape(res.masked, fc.output_shape(), i);
      traffic.elements_received = res.masked.size();
      traffic.edge_compute_ns = res.compute_ns;
      out.traffic.push_back(traffic);
      if (rate > 0.0) {
        const AuditPlan plan = make_audit_plan(res.masked.size(), rate, rng);
        const AuditResult a = audit_fc(res.masked.elements(), plan, job.masked.elements(), fc,
                                       model.fc_params(i));
        if (!a.passed) throw AuditFailure(i, a.position);
        out.audits.push_back({i, res.masked.size(), a.samples, a.flops});
      }
      x = requantize(Tensor3(fc.output_shape(), ppfl_decrypt(res.masked.elements(), pair)),
                     net.fp);
    }
  }
  out.output = std::move(x);
  return out;
}

InferenceResult infer_offloaded(const Tensor3& input, const Model& model, KeyStore& store,
                                const ClientOptions& options, RandomSource& rng) {
  return infer_offloaded(input, model, store.claim(), options, rng);
}

}  // namespace lepcnn
