#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <random>
#include <thread>

#include "doctest.h"
#include "fuzz_util.hpp"
#include "lepcnn/client.hpp"
#include "lepcnn/detail/socket.hpp"
#include "lepcnn/edge.hpp"
#include "lepcnn/engine.hpp"
#include "lepcnn/errors.hpp"
#include "lepcnn/metrics.hpp"
#include "lepcnn/model_file.hpp"

using namespace lepcnn;
using lepcnn::testing::mutate;

namespace {

// conv + relu + max pool + fc, small enough for many round trips.
Model toy_model(uint64_t seed) {
  SeededRandom rng(seed);
  return random_model(parse_architecture("input 6 6 2\n"
                                         "fixed gamma=30 lambda=160 scale=8\n"
                                         "conv kernels=3 size=3 pad=1\n"
                                         "relu\n"
                                         "maxpool size=2\n"
                                         "fc 4\n"),
                      rng);
}

struct Loopback {
  std::shared_ptr<EdgeHandler> handler;
  EdgeServer server;

  explicit Loopback(const Model& model, std::optional<AdversaryConfig> adversary = {})
      : handler(std::make_shared<EdgeHandler>(model, adversary,
                                              std::make_unique<SeededRandom>(99))),
        server(handler, "127.0.0.1:0") {
    server.start();
  }
  std::string endpoint() const { return "127.0.0.1:" + std::to_string(server.port()); }
};

std::vector<uint8_t> job_bytes(const Model& model, RandomSource& rng, uint64_t session) {
  const auto& conv = std::get<ConvLayerSpec>(model.net.layers[0]);
  Tensor3 masked(conv.input_shape());
  for (Int256& v : masked.elements()) v = rng.uniform_bits(160);
  return encode_frame(make_job(session, {0, JobKind::kConv, masked}));
}

}  // namespace

TEST_CASE("wire encodings round trip") {
  SeededRandom rng(51);
  SUBCASE("hello") {
    Hello h{kProtocolVersion, {}};
    h.model[3] = 7;
    const Frame f = decode_frame(encode_frame(make_hello(5, h)));
    CHECK(f.type == MessageType::kHello);
    CHECK(f.session_id == 5);
    CHECK(f.body.size() == 2 + 32);
    CHECK(parse_hello(f).model == h.model);
  }
  SUBCASE("job uses 24-byte elements") {
    Tensor3 t({2, 2, 3});
    for (Int256& v : t.elements()) v = rng.uniform_bits(161);
    const std::vector<uint8_t> bytes = encode_frame(make_job(9, {4, JobKind::kFc, t}));
    CHECK(bytes.size() == kFrameHeaderBytes + 4 + 1 + 12 + 12 * 24);
    const OffloadJob job = parse_job(decode_frame(bytes));
    CHECK(job.layer_index == 4);
    CHECK(job.kind == JobKind::kFc);
    CHECK(job.masked == t);
  }
  SUBCASE("result uses 32-byte signed elements") {
    Tensor3 t({1, 1, 3});
    t[0] = -Int256::power_of_two(200);
    t[1] = Int256(-1);
    t[2] = Int256::power_of_two(250);
    const std::vector<uint8_t> bytes = encode_frame(make_result(9, {2, t, 1234}));
    CHECK(bytes.size() == kFrameHeaderBytes + 4 + 12 + 8 + 3 * 32);
    const OffloadResult r = parse_result(decode_frame(bytes));
    CHECK(r.masked == t);
    CHECK(r.compute_ns == 1234);
  }
  SUBCASE("error") {
    const ErrorReply e = parse_error(decode_frame(
        encode_frame(make_error(3, ErrorCode::kUnknownLayer, "layer 9"))));
    CHECK(e.code == ErrorCode::kUnknownLayer);
    CHECK(e.message == "layer 9");
  }
  SUBCASE("frame decoding errors") {
    std::vector<uint8_t> f = encode_frame(make_hello(1, {}));
    CHECK_THROWS_AS(decode_frame(std::span(f).first(f.size() - 1)), ProtocolError);
    f.push_back(0);
    CHECK_THROWS_AS(decode_frame(f), ProtocolError);
    CHECK_THROWS_AS(decode_frame(std::vector<uint8_t>{1, 0, 0, 0, 1}), ProtocolError);
    CHECK_THROWS_AS(parse_job(decode_frame(encode_frame(make_hello(1, {})))), ProtocolError);
  }
}

TEST_CASE("edge handler") {
  const Model model = toy_model(52);
  EdgeHandler edge(model);
  SeededRandom rng(53);
  EdgeHandler::Connection conn;
  const std::vector<uint8_t> job = job_bytes(model, rng, 77);

  SUBCASE("job before hello is refused") {
    const Frame r = edge.handle_bytes(job, conn);
    CHECK(parse_error(r).code == ErrorCode::kHelloRequired);
  }
  SUBCASE("hello with another model is refused") {
    const Frame r = edge.handle(make_hello(1, {kProtocolVersion, model_digest(toy_model(54))}), conn);
    CHECK(parse_error(r).code == ErrorCode::kModelMismatch);
    CHECK_FALSE(conn.greeted);
    const Frame v = edge.handle(make_hello(1, {7, model_digest(model)}), conn);
    CHECK(parse_error(v).code == ErrorCode::kVersionMismatch);
  }
  SUBCASE("well-formed conv job gives an o x o x H result") {
    CHECK(parse_hello(edge.handle(make_hello(1, {kProtocolVersion, edge.digest()}), conn)).model ==
          edge.digest());
    const Frame r = edge.handle_bytes(job, conn);
    CHECK(r.session_id == 77);
    const OffloadResult res = parse_result(r);
    CHECK(res.masked.shape() == Shape3{6, 6, 3});
    const OffloadJob sent = parse_job(decode_frame(job));
    CHECK(res.masked == edge_eval_conv(sent.masked, std::get<ConvLayerSpec>(model.net.layers[0]),
                                       model.conv_params(0)));
  }
  SUBCASE("job errors") {
    edge.handle(make_hello(1, {kProtocolVersion, edge.digest()}), conn);
    const auto code = [&](const OffloadJob& j) {
      return parse_error(edge.handle(make_job(1, j), conn)).code;
    };
    CHECK(code({1, JobKind::kConv, Tensor3({6, 6, 2})}) == ErrorCode::kUnknownLayer);
    CHECK(code({40, JobKind::kConv, Tensor3({6, 6, 2})}) == ErrorCode::kUnknownLayer);
    CHECK(code({0, JobKind::kFc, Tensor3({6, 6, 2})}) == ErrorCode::kDimensionMismatch);
    CHECK(code({0, JobKind::kConv, Tensor3({6, 6, 3})}) == ErrorCode::kDimensionMismatch);
    CHECK(code({3, JobKind::kFc, Tensor3({1, 1, 26})}) == ErrorCode::kDimensionMismatch);
    Tensor3 wide({6, 6, 2});
    wide[0] = Int256::power_of_two(170);
    CHECK(code({0, JobKind::kConv, wide}) == ErrorCode::kMalformed);
  }
}

TEST_CASE("fuzzed frames always get an answer") {
  const Model model = toy_model(55);
  EdgeHandler edge(model);
  SeededRandom rng(56);
  std::mt19937_64 gen(57);
  const std::vector<uint8_t> hello =
      encode_frame(make_hello(1, {kProtocolVersion, edge.digest()}));
  const std::vector<uint8_t> job = job_bytes(model, rng, 2);
  int errors = 0, results = 0;
  for (int i = 0; i < 10000; ++i) {
    EdgeHandler::Connection conn;
    edge.handle_bytes(hello, conn);
    const auto m = mutate(i % 5 == 0 ? hello : job, gen);
    const Frame reply = edge.handle_bytes(m.bytes, conn);
    CAPTURE(m.kind);
    if (m.must_fail) CHECK(reply.type == MessageType::kError);
    if (reply.type == MessageType::kError) {
      ++errors;
      CHECK_NOTHROW(parse_error(reply));
    } else {
      ++results;
      CHECK((reply.type == MessageType::kResult || reply.type == MessageType::kHello));
    }
  }
  CHECK(errors > 5000);
}

TEST_CASE("edge server over tcp") {
  const Model model = toy_model(58);
  Loopback edge(model);
  SeededRandom rng(59);
  const Digest digest = model_digest(model);

  SUBCASE("malformed frames leave the connection usable") {
    detail::Socket s = detail::Socket::connect(detail::parse_endpoint(edge.endpoint()),
                                               std::chrono::seconds(10));
    detail::send_frame(s, make_hello(1, {kProtocolVersion, digest}));
    CHECK(detail::recv_frame(s)->type == MessageType::kHello);
    std::mt19937_64 gen(60);
    const std::vector<uint8_t> job = job_bytes(model, rng, 3);
    for (int i = 0; i < 300; ++i) {
      const auto m = mutate(job, gen);
      s.send_all(m.bytes);
      const std::optional<Frame> reply = detail::recv_frame(s);
      REQUIRE(reply.has_value());
      if (m.must_fail) CHECK(reply->type == MessageType::kError);
    }
    s.send_all(job);
    CHECK(detail::recv_frame(s)->type == MessageType::kResult);
  }
  SUBCASE("an oversized length gets an error and a close") {
    detail::Socket s = detail::Socket::connect(detail::parse_endpoint(edge.endpoint()),
                                               std::chrono::seconds(10));
    const std::vector<uint8_t> huge{0xff, 0xff, 0xff, 0x7f, 2};
    s.send_all(huge);
    const std::optional<Frame> reply = detail::recv_frame(s);
    REQUIRE(reply.has_value());
    CHECK(parse_error(*reply).code == ErrorCode::kFrameTooLarge);
    // Closed: clean EOF or a reset, since the rest of the frame was unread.
    bool closed = false;
    try {
      closed = !detail::recv_frame(s).has_value();
    } catch (const NetworkError&) {
      closed = true;
    }
    CHECK(closed);
    EdgeConnection again(edge.endpoint(), digest);
  }
  SUBCASE("interleaved sessions on one connection are routed by session id") {
    EdgeConnection conn(edge.endpoint(), digest);
    const std::vector<uint8_t> a = job_bytes(model, rng, 1001);
    const std::vector<uint8_t> b = job_bytes(model, rng, 2002);
    conn.send(decode_frame(a));
    conn.send(decode_frame(b));
    const Frame ra = conn.receive();
    const Frame rb = conn.receive();
    CHECK(ra.session_id == 1001);
    CHECK(rb.session_id == 2002);
    const auto& conv = std::get<ConvLayerSpec>(model.net.layers[0]);
    CHECK(parse_result(ra).masked ==
          edge_eval_conv(parse_job(decode_frame(a)).masked, conv, model.conv_params(0)));
    CHECK(parse_result(rb).masked ==
          edge_eval_conv(parse_job(decode_frame(b)).masked, conv, model.conv_params(0)));
  }
  SUBCASE("mismatched model is refused at HELLO") {
    CHECK_THROWS_AS(EdgeConnection(edge.endpoint(), model_digest(toy_model(61))), ProtocolError);
  }
}

TEST_CASE("offloaded inference matches local inference") {
  const Model model = toy_model(62);
  Loopback edge(model);
  SeededRandom rng(63);

  SUBCASE("honest edge, exact equality over many inputs") {
    for (int t = 0; t < 10; ++t) {
      const Tensor3 input = random_input(model.net.input, 20, rng);
      ClientOptions opts{edge.endpoint(), {0.2}, {}, std::chrono::seconds(10), {}};
      const InferenceResult r = infer_offloaded(input, model, keygen(model, rng), opts, rng);
      CHECK(r.output == infer_plain(input, model));
      CHECK(r.audits.size() == 1);
    }
  }
  SUBCASE("fc audits run when asked for") {
    const Tensor3 input = random_input(model.net.input, 20, rng);
    ClientOptions opts{edge.endpoint(), {1.0}, {1.0}, std::chrono::seconds(10), {}};
    const InferenceResult r = infer_offloaded(input, model, keygen(model, rng), opts, rng);
    CHECK(r.audits.size() == 2);
    CHECK(r.audits[1].flops == 4 * 2 * 27);
    CHECK(r.output == infer_plain(input, model));
  }
  SUBCASE("no plaintext element crosses the wire") {
    const Tensor3 input = random_input(model.net.input, 20, rng);
    // Layer inputs as the client sees them before encryption.
    std::vector<Tensor3> plain_inputs;
    Tensor3 x = input;
    for (uint32_t i = 0; i < model.net.layers.size(); ++i) {
      const LayerSpec& l = model.net.layers[i];
      if (const auto* c = std::get_if<ConvLayerSpec>(&l)) {
        plain_inputs.push_back(x);
        x = requantize(conv_forward(x, *c, model.conv_params(i)), model.net.fp);
      } else if (const auto* f = std::get_if<FcLayerSpec>(&l)) {
        plain_inputs.push_back(x.flattened());
        x = requantize(fc_forward(x, *f, model.fc_params(i)), model.net.fp);
      } else {
        x = apply_local_layer(x, l);
      }
    }
    size_t job_no = 0, equal_elements = 0, elements = 0;
    ClientOptions opts{edge.endpoint(), {}, {}, std::chrono::seconds(10),
                       [&](Direction d, const Frame& f) {
                         if (d != Direction::kToEdge) return;
                         const OffloadJob job = parse_job(f);
                         const Tensor3& plain = plain_inputs.at(job_no++);
                         for (size_t i = 0; i < plain.size(); ++i) {
                           ++elements;
                           equal_elements += job.masked[i] == plain[i];
                           equal_elements += job.masked[i] == plain[i] + plaintext_offset(model.net.fp);
                           CHECK(job.masked[i].magnitude_bits() > 64);
                         }
                       }};
    const InferenceResult r = infer_offloaded(input, model, keygen(model, rng), opts, rng);
    CHECK(job_no == 2);
    CHECK(elements == 72 + 27);
    CHECK(equal_elements == 0);
    CHECK(r.output == x);
  }
  SUBCASE("sent and received element counts follow the cost model") {
    const InferenceResult r =
        infer_offloaded(random_input(model.net.input, 20, rng), model, keygen(model, rng),
                        {edge.endpoint(), {}, {}, std::chrono::seconds(10), {}}, rng);
    const CostReport cost = analyze(model.net);
    REQUIRE(r.traffic.size() == cost.layers.size());
    for (size_t i = 0; i < cost.layers.size(); ++i) {
      CHECK(r.traffic[i].elements_sent + r.traffic[i].elements_received ==
            cost.layers[i].comm_elements);
      CHECK(r.traffic[i].elements_sent == cost.layers[i].enc_flops);
      CHECK(r.traffic[i].attempts == 1);
    }
    CHECK(r.traffic[0].bytes_sent == kFrameHeaderBytes + 17 + 72 * 24);
    CHECK(r.traffic[0].bytes_received == kFrameHeaderBytes + 24 + 108 * 32);
  }
  SUBCASE("same input, key set and rng give identical frames") {
    const Tensor3 input = random_input(model.net.input, 20, rng);
    const KeySet keys = keygen(model, rng);
    std::vector<std::vector<uint8_t>> first, second;
    for (auto* log : {&first, &second}) {
      SeededRandom run_rng(64);
      ClientOptions opts{edge.endpoint(), {0.5}, {}, std::chrono::seconds(10),
                         [log](Direction, const Frame& f) {
                           std::vector<uint8_t> bytes = encode_frame(f);
                           // compute_ns is a timing diagnostic; blank it.
                           if (f.type == MessageType::kResult) {
                             std::fill(bytes.begin() + 13 + 16, bytes.begin() + 13 + 24, 0);
                           }
                           log->push_back(std::move(bytes));
                         }};
      infer_offloaded(input, model, keys, opts, run_rng);
    }
    CHECK(first == second);
    CHECK(first.size() == 4);
  }
  SUBCASE("keys must fit the network") {
    KeySet keys = keygen(toy_model(65), rng);
    keys.keys.pop_back();
    CHECK_THROWS_AS(infer_offloaded(random_input(model.net.input, 20, rng), model, keys,
                                    {edge.endpoint(), {}, {}, std::chrono::seconds(10), {}}, rng),
                    DimensionError);
  }
}

TEST_CASE("dishonest edge") {
  const Model model = toy_model(66);
  Loopback edge(model, AdversaryConfig{1.0});
  SeededRandom rng(67);
  const Tensor3 input = random_input(model.net.input, 20, rng);
  try {
    infer_offloaded(input, model, keygen(model, rng),
                    {edge.endpoint(), {0.01}, {}, std::chrono::seconds(10), {}}, rng);
    FAIL("corrupted result was accepted");
  } catch (const AuditFailure& e) {
    CHECK(e.layer_index() == 0);
  }
}

TEST_CASE("key store integration") {
  const Model model = toy_model(68);
  Loopback edge(model);
  SeededRandom rng(69);
  const auto dir = std::filesystem::temp_directory_path() / ("lepcnn-net-" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  KeyStore store(dir);
  std::vector<KeySet> sets{keygen(model, rng), keygen(model, rng)};
  store.replenish(make_batch(sets));
  int frames = 0;
  ClientOptions opts{edge.endpoint(), {}, {}, std::chrono::seconds(10),
                     [&](Direction, const Frame&) { ++frames; }};
  const Tensor3 input = random_input(model.net.input, 20, rng);
  for (int i = 0; i < 2; ++i) {
    const InferenceResult r = infer_offloaded(input, model, store, opts, rng);
    CHECK(r.output == infer_plain(input, model));
    CHECK(store.available() == static_cast<size_t>(1 - i));
  }
  CHECK(store.consumed_ids().size() == 2);
  frames = 0;
  CHECK_THROWS_AS(infer_offloaded(input, model, store, opts, rng), KeyExhausted);
  CHECK(frames == 0);
  std::filesystem::remove_all(dir);
}

TEST_CASE("a dropped connection is retried once") {
  const Model model = toy_model(70);
  auto handler = std::make_shared<EdgeHandler>(model);
  // Flaky edge: the first connection dies on its first JOB, later ones work.
  detail::Socket listener = detail::Socket::listen(detail::parse_endpoint("127.0.0.1:0"));
  const std::string endpoint = "127.0.0.1:" + std::to_string(listener.local_port());
  std::atomic<int> connections{0};
  std::atomic<int> drop_budget{1};
  std::thread server([&] {
    for (;;) {
      const int fd = ::accept(listener.fd(), nullptr, nullptr);
      if (fd < 0) return;
      ++connections;
      detail::Socket s(fd);
      EdgeHandler::Connection state;
      try {
        while (auto f = detail::recv_frame(s)) {
          if (f->type == MessageType::kJob && drop_budget.fetch_sub(1) > 0) break;
          detail::send_frame(s, handler->handle(*f, state));
        }
      } catch (const Error&) {
      }
    }
  });
  SeededRandom rng(71);
  const Tensor3 input = random_input(model.net.input, 20, rng);
  const InferenceResult r = infer_offloaded(input, model, keygen(model, rng),
                                            {endpoint, {}, {}, std::chrono::seconds(10), {}}, rng);
  CHECK(r.output == infer_plain(input, model));
  CHECK(r.traffic[0].attempts == 2);
  CHECK(r.traffic[1].attempts == 1);
  CHECK(connections == 2);

  drop_budget = 100;
  CHECK_THROWS_AS(infer_offloaded(input, model, keygen(model, rng),
                                  {endpoint, {}, {}, std::chrono::seconds(10), {}}, rng),
                  NetworkError);
  listener.shutdown();
  server.join();
}
