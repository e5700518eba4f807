#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "lepcnn/client.hpp"
#include "lepcnn/detail/fileio.hpp"
#include "lepcnn/edge.hpp"
#include "lepcnn/engine.hpp"
#include "lepcnn/errors.hpp"
#include "lepcnn/integrity.hpp"
#include "lepcnn/keystore.hpp"
#include "lepcnn/masking.hpp"
#include "lepcnn/metrics.hpp"
#include "lepcnn/model_file.hpp"

using namespace lepcnn;

namespace {

enum Exit : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kParamViolation = 3,
  kKeyExhausted = 4,
  kAuditFailure = 5,
  kProtocolError = 6,
  kNetworkError = 7,
  kIntegrityError = 8,
  kDuplicateKey = 9,
  kDimensionError = 10,
};

class UsageError : public Error {
 public:
  using Error::Error;
};

// "theta=0.5" -> 0.5 for key "theta".
double keyed_value(const std::string& text, const std::string& key) {
  const std::string prefix = key + "=";
  if (text.rfind(prefix, 0) != 0) throw UsageError("expected " + prefix + "<value>, got " + text);
  try {
    size_t used = 0;
    const double v = std::stod(text.substr(prefix.size()), &used);
    if (used != text.size() - prefix.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw UsageError("bad number in " + text);
  }
}

// "r=0.002,0.003" -> {0.002, 0.003}. Bare numbers are accepted too.
std::vector<double> rate_list(const std::vector<std::string>& items, const std::string& key) {
  std::vector<double> out;
  for (std::string item : items) {
    if (item.rfind(key + "=", 0) == 0) item = item.substr(key.size() + 1);
    std::stringstream ss(item);
    for (std::string part; std::getline(ss, part, ',');) {
      if (part.empty()) continue;
      out.push_back(keyed_value(key + "=" + part, key));
    }
  }
  return out;
}

std::unique_ptr<RandomSource> make_rng(const std::optional<uint64_t>& seed) {
  if (seed) return std::make_unique<SeededRandom>(*seed);
  return std::make_unique<SecureRandom>();
}

std::string slurp_text(const std::string& path) {
  const std::vector<uint8_t> bytes = detail::read_file(path);
  return {bytes.begin(), bytes.end()};
}

NetworkSpec load_net(const std::string& arch, const std::string& model, bool alexnet) {
  const int given = !arch.empty() + !model.empty() + alexnet;
  if (given != 1) throw UsageError("give exactly one of --arch, --model, --alexnet");
  if (alexnet) return alexnet_spec();
  if (!arch.empty()) return parse_architecture(slurp_text(arch));
  return load_model(model).net;
}

// Whitespace separated real values in (row, column, channel) order.
Tensor3 read_input(const std::string& path, const NetworkSpec& net) {
  std::istringstream in(slurp_text(path));
  std::vector<Int256> values;
  for (double v; in >> v;) values.emplace_back(encode(v, net.fp));
  if (!in.eof()) throw UsageError("input file " + path + " holds a non-number");
  if (values.size() != net.input.size()) {
    throw DimensionError("input file has " + std::to_string(values.size()) + " values, network takes " +
                         std::to_string(net.input.size()));
  }
  return Tensor3(net.input, std::move(values));
}

void print_output(const Tensor3& out, const FpParams& fp) {
  std::printf("index,value,raw\n");
  for (size_t i = 0; i < out.size(); ++i) {
    std::printf("%zu,%.6f,%s\n", i, decode(out[i], fp), out[i].to_string().c_str());
  }
}

int run(int argc, char** argv) {
  CLI::App app{"Privacy-preserving CNN offloading with one-time additive masks"};
  app.require_subcommand(1);

  std::optional<uint64_t> seed;
  bool insecure = false;

  // compile-model
  std::string cm_arch, cm_out;
  double cm_gain = 1.0;
  auto* compile = app.add_subcommand("compile-model", "Compile a text architecture into an LEPM model with random weights");
  compile->add_option("--arch", cm_arch, "Architecture description")->required()->check(CLI::ExistingFile);
  compile->add_option("--out", cm_out, "Model file to write")->required();
  compile->add_option("--gain", cm_gain, "Per-layer weight gain bound")->check(CLI::PositiveNumber);
  compile->add_option("--seed", seed, "Deterministic weights");

  // keygen
  std::string kg_model, kg_out;
  uint64_t kg_count = 1;
  auto* keygen_cmd = app.add_subcommand("keygen", "Generate one-time key sets into a batch file");
  keygen_cmd->add_option("--model", kg_model, "Model file")->required()->check(CLI::ExistingFile);
  keygen_cmd->add_option("--count", kg_count, "Number of key sets");
  keygen_cmd->add_option("--out", kg_out, "Batch file to write")->required();
  keygen_cmd->add_option("--seed", seed, "Deterministic keys (needs --insecure-test-keys)");
  keygen_cmd->add_flag("--insecure-test-keys", insecure, "Allow --seed for key material");

  // replenish
  std::string rp_store, rp_batch;
  auto* replenish = app.add_subcommand("replenish", "Import a key batch into a key store");
  replenish->add_option("--keystore", rp_store, "Key store directory")->required();
  replenish->add_option("--batch", rp_batch, "Batch file")->required()->check(CLI::ExistingFile);

  // serve
  std::string sv_model, sv_bind = "127.0.0.1:7070", sv_dishonest;
  auto* serve = app.add_subcommand("serve", "Run an edge server");
  serve->add_option("--model", sv_model, "Model file")->required()->check(CLI::ExistingFile);
  serve->add_option("--bind", sv_bind, "host:port to listen on");
  serve->add_option("--dishonest", sv_dishonest, "theta=<f>: corrupt that fraction of every result");
  serve->add_option("--seed", seed, "Deterministic corruption");

  // infer
  std::string in_model, in_store, in_endpoint, in_input;
  std::vector<std::string> in_audit, in_audit_fc;
  bool in_check = false;
  int in_input_bits = 16;
  auto* infer = app.add_subcommand("infer", "Run one inference with conv and fc layers offloaded");
  infer->add_option("--model", in_model, "Model file")->required()->check(CLI::ExistingFile);
  infer->add_option("--keystore", in_store, "Key store directory")->required();
  infer->add_option("--endpoint", in_endpoint, "Edge host:port")->required();
  infer->add_option("--input", in_input, "Input values (text); random when omitted");
  infer->add_option("--random-input-bits", in_input_bits, "Magnitude of the random input");
  infer->add_option("--audit", in_audit, "r=<rate>[,<rate>...] per conv layer");
  infer->add_option("--audit-fc", in_audit_fc, "r=<rate>[,<rate>...] per fc layer");
  infer->add_flag("--check", in_check, "Also run locally and compare");
  infer->add_option("--seed", seed, "Deterministic input and audit sampling");

  // analyze
  std::string an_arch, an_model;
  bool an_alexnet = false, an_csv = false;
  std::vector<std::string> an_audit;
  std::string an_theta = "theta=0.01";
  auto* analyze_cmd = app.add_subcommand("analyze", "Cost model: FLOPs, offload share, communication, storage");
  analyze_cmd->add_option("--arch", an_arch, "Architecture description")->check(CLI::ExistingFile);
  analyze_cmd->add_option("--model", an_model, "Model file")->check(CLI::ExistingFile);
  analyze_cmd->add_flag("--alexnet", an_alexnet, "Built-in AlexNet");
  analyze_cmd->add_option("--audit", an_audit, "r=<rate>[,<rate>...] per conv layer");
  analyze_cmd->add_option("--theta", an_theta, "theta=<f>, recorded with the audit settings");
  analyze_cmd->add_flag("--csv", an_csv, "CSV instead of a table");

  // capacity
  std::string cp_arch, cp_model;
  bool cp_alexnet = false;
  std::vector<uint64_t> cp_budgets;
  auto* capacity = app.add_subcommand("capacity", "Requests a key storage budget supports");
  capacity->add_option("--arch", cp_arch, "Architecture description")->check(CLI::ExistingFile);
  capacity->add_option("--model", cp_model, "Model file")->check(CLI::ExistingFile);
  capacity->add_flag("--alexnet", cp_alexnet, "Built-in AlexNet");
  capacity->add_option("--budget", cp_budgets, "Bytes; default 32e9 and 32 GiB");

  // detect
  uint64_t dt_n = 0;
  std::vector<double> dt_thetas{0.01};
  double dt_from = 0.0001, dt_to = 0.02, dt_step = 0.0001;
  std::optional<double> dt_target;
  auto* detect = app.add_subcommand("detect", "Detection probability grid, or the minimum sample rate");
  detect->add_option("--n", dt_n, "Returned element count")->required();
  detect->add_option("--theta", dt_thetas, "Error rates")->expected(1, -1);
  detect->add_option("--from", dt_from, "First sample rate");
  detect->add_option("--to", dt_to, "Last sample rate");
  detect->add_option("--step", dt_step, "Sample rate step");
  detect->add_option("--target", dt_target, "Print the smallest grid rate reaching this probability");

  // simulate
  std::string sm_arch, sm_model, sm_dishonest = "theta=0.01";
  std::vector<std::string> sm_audit;
  uint32_t sm_layer = 0;
  int sm_trials = 1000;
  auto* simulate = app.add_subcommand("simulate", "Monte-Carlo audit of a dishonest loopback edge");
  simulate->add_option("--arch", sm_arch, "Architecture description")->check(CLI::ExistingFile);
  simulate->add_option("--model", sm_model, "Model file")->check(CLI::ExistingFile);
  simulate->add_option("--layer", sm_layer, "Offloaded conv layer index in the layer list");
  simulate->add_option("--dishonest", sm_dishonest, "theta=<f>");
  simulate->add_option("--audit", sm_audit, "r=<rate>")->required();
  simulate->add_option("--trials", sm_trials, "Number of corrupted results")->check(CLI::PositiveNumber);
  simulate->add_option("--seed", seed, "Deterministic run");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  if (compile->parsed()) {
    const NetworkSpec net = parse_architecture(slurp_text(cm_arch));
    auto rng = make_rng(seed);
    RandomModelOptions opts;
    opts.gain = cm_gain;
    const Model model = random_model(net, *rng, opts);
    save_model(model, cm_out);
    std::printf("wrote %s (%zu layers, digest %s)\n", cm_out.c_str(), net.layers.size(),
                to_hex(model_digest(model)).c_str());
    return kOk;
  }

  if (keygen_cmd->parsed()) {
    if (seed && !insecure) {
      throw ParamViolation("--seed makes keys predictable; add --insecure-test-keys to allow it");
    }
    const Model model = load_model(kg_model);
    auto rng = make_rng(seed);
    std::vector<KeySet> sets;
    sets.reserve(kg_count);
    for (uint64_t i = 0; i < kg_count; ++i) sets.push_back(keygen(model, *rng));
    const std::vector<uint8_t> batch = make_batch(sets);
    detail::write_file_durable(kg_out, batch);
    std::printf("wrote %llu key sets to %s (%zu bytes)\n", static_cast<unsigned long long>(kg_count),
                kg_out.c_str(), batch.size());
    return kOk;
  }

  if (replenish->parsed()) {
    KeyStore store(rp_store);
    const size_t added = store.replenish(std::filesystem::path(rp_batch));
    std::printf("added %zu key sets, %zu available\n", added, store.available());
    return kOk;
  }

  if (serve->parsed()) {
    std::optional<AdversaryConfig> adversary;
    if (!sv_dishonest.empty()) adversary = AdversaryConfig{keyed_value(sv_dishonest, "theta")};
    if (adversary && !(adversary->theta >= 0.0 && adversary->theta <= 1.0)) {
      throw UsageError("theta must lie in [0, 1]");
    }
    auto handler = std::make_shared<EdgeHandler>(load_model(sv_model), adversary, make_rng(seed));
    EdgeServer server(handler, sv_bind);
    std::fprintf(stderr, "edge serving model %s on port %u%s\n",
                 to_hex(handler->digest()).substr(0, 16).c_str(), server.port(),
                 adversary ? " (dishonest)" : "");
    server.run();
    return kOk;
  }

  if (infer->parsed()) {
    const Model model = load_model(in_model);
    auto rng = make_rng(seed);
    const Tensor3 input = in_input.empty()
                              ? random_input(model.net.input, static_cast<unsigned>(in_input_bits), *rng)
                              : read_input(in_input, model.net);
    KeyStore store(in_store);
    ClientOptions opts;
    opts.endpoint = in_endpoint;
    opts.conv_audit_rates = rate_list(in_audit, "r");
    opts.fc_audit_rates = rate_list(in_audit_fc, "r");
    const InferenceResult r = infer_offloaded(input, model, store, opts, *rng);
    for (const LayerTraffic& t : r.traffic) {
      std::fprintf(stderr, "layer %u: sent %llu elements, received %llu, edge %.3f ms, attempts %d\n",
                   t.layer_index, static_cast<unsigned long long>(t.elements_sent),
                   static_cast<unsigned long long>(t.elements_received), t.edge_compute_ns / 1e6,
                   t.attempts);
    }
    for (const LayerAudit& a : r.audits) {
      std::fprintf(stderr, "layer %u: audit passed, %llu of %llu elements, %llu FLOPs\n",
                   a.layer_index, static_cast<unsigned long long>(a.samples),
                   static_cast<unsigned long long>(a.returned),
                   static_cast<unsigned long long>(a.flops));
    }
    print_output(r.output, model.net.fp);
    if (in_check) {
      const bool same = r.output == infer_plain(input, model);
      std::fprintf(stderr, "local check: %s\n", same ? "identical" : "DIFFERENT");
      if (!same) return kFailure;
    }
    return kOk;
  }

  if (analyze_cmd->parsed()) {
    const NetworkSpec net = load_net(an_arch, an_model, an_alexnet);
    std::optional<AuditSettings> audit;
    if (!an_audit.empty()) audit = AuditSettings{keyed_value(an_theta, "theta"), rate_list(an_audit, "r")};
    const CostReport report = analyze(net, audit);
    std::fputs(an_csv ? report.to_csv().c_str() : report.to_table().c_str(), stdout);
    return kOk;
  }

  if (capacity->parsed()) {
    const NetworkSpec net = load_net(cp_arch, cp_model, cp_alexnet);
    if (cp_budgets.empty()) cp_budgets = {32'000'000'000ull, 32ull << 30};
    std::printf("budget_bytes,bytes_per_request,requests\n");
    for (uint64_t b : cp_budgets) {
      std::printf("%llu,%llu,%llu\n", static_cast<unsigned long long>(b),
                  static_cast<unsigned long long>(key_elements_per_request(net) * kAccountingBytesPerElement),
                  static_cast<unsigned long long>(capacity_report(net, b)));
    }
    return kOk;
  }

  if (detect->parsed()) {
    if (dt_target) {
      std::printf("n,theta,target,min_rate,pr_ed\n");
      for (double theta : dt_thetas) {
        const double r = min_sample_rate(dt_n, theta, *dt_target, dt_step);
        std::printf("%llu,%g,%g,%g,%.6f\n", static_cast<unsigned long long>(dt_n), theta, *dt_target, r,
                    detection_probability(dt_n, theta, r));
      }
      return kOk;
    }
    if (!(dt_step > 0)) throw UsageError("--step must be positive");
    std::printf("n,theta,r,pr_ed\n");
    for (double theta : dt_thetas) {
      const auto points = static_cast<uint64_t>((dt_to - dt_from) / dt_step + 1e-9);
      for (uint64_t k = 0; k <= points; ++k) {
        const double r = dt_from + k * dt_step;
        std::printf("%llu,%g,%g,%.6f\n", static_cast<unsigned long long>(dt_n), theta, r,
                    detection_probability(dt_n, theta, r));
      }
    }
    return kOk;
  }

  if (simulate->parsed()) {
    auto rng = make_rng(seed);
    Model model;
    if (!sm_model.empty() == !sm_arch.empty()) throw UsageError("give exactly one of --arch, --model");
    model = sm_model.empty() ? random_model(parse_architecture(slurp_text(sm_arch)), *rng) : load_model(sm_model);
    if (sm_layer >= model.net.layers.size() || !std::holds_alternative<ConvLayerSpec>(model.net.layers[sm_layer])) {
      throw UsageError("--layer must name a conv layer");
    }
    const auto& spec = std::get<ConvLayerSpec>(model.net.layers[sm_layer]);
    const double theta = keyed_value(sm_dishonest, "theta");
    const std::vector<double> rates = rate_list(sm_audit, "r");
    if (rates.size() != 1) throw UsageError("--audit takes one rate for simulate");

    // One honest masked round trip through a loopback edge; every trial
    // then corrupts a fresh copy of that result and audits it.
    auto handler = std::make_shared<EdgeHandler>(model);
    EdgeServer server(handler, "127.0.0.1:0");
    server.start();
    ConvKeyPair key = keygen_conv(spec, model.conv_params(sm_layer), model.net.fp, *rng, sm_layer);
    const Tensor3 masked = ppcl_encrypt(random_input(spec.input_shape(), 16, *rng), key, model.net.fp);
    EdgeConnection conn("127.0.0.1:" + std::to_string(server.port()), handler->digest());
    conn.send(make_job(rng->next_u64(), {sm_layer, JobKind::kConv, masked}));
    const Tensor3 honest = parse_result(conn.receive()).masked;
    server.stop();

    const uint64_t n = honest.size();
    Tensor3 work = honest;
    int detected = 0;
    for (int t = 0; t < sm_trials; ++t) {
      const auto replaced = corrupt(work.elements(), {theta}, model.net.fp.lambda, *rng);
      detected += !audit_conv(work, make_audit_plan(n, rates[0], *rng), masked, spec,
                              model.conv_params(sm_layer))
                       .passed;
      for (uint64_t i : replaced) work[i] = honest[i];
    }
    std::printf("layer,n,theta,r,trials,detected,empirical,predicted\n");
    std::printf("%u,%llu,%g,%g,%d,%d,%.6f,%.6f\n", sm_layer, static_cast<unsigned long long>(n), theta,
                rates[0], sm_trials, detected, static_cast<double>(detected) / sm_trials,
                detection_probability(n, theta, rates[0]));
    return kOk;
  }
  return kUsage;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  } catch (const ParamViolation& e) {
    std::fprintf(stderr, "parameter violation: %s\n", e.what());
    return kParamViolation;
  } catch (const KeyExhausted& e) {
    std::fprintf(stderr, "keys exhausted: %s\n", e.what());
    return kKeyExhausted;
  } catch (const AuditFailure& e) {
    std::fprintf(stderr, "audit failure: %s\n", e.what());
    return kAuditFailure;
  } catch (const ProtocolError& e) {
    std::fprintf(stderr, "protocol error: %s\n", e.what());
    return kProtocolError;
  } catch (const NetworkError& e) {
    std::fprintf(stderr, "network error: %s\n", e.what());
    return kNetworkError;
  } catch (const IntegrityError& e) {
    std::fprintf(stderr, "integrity error: %s\n", e.what());
    return kIntegrityError;
  } catch (const DuplicateKeyError& e) {
    std::fprintf(stderr, "duplicate key: %s\n", e.what());
    return kDuplicateKey;
  } catch (const DimensionError& e) {
    std::fprintf(stderr, "dimension error: %s\n", e.what());
    return kDimensionError;
  } catch (const RangeError& e) {
    std::fprintf(stderr, "range error: %s\n", e.what());
    return kDimensionError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kFailure;
  }
}
