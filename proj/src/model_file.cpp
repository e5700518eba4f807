#include "lepcnn/model_file.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstring>
#include <map>
#include <optional>
#include <sstream>

#include "lepcnn/detail/bytes.hpp"
#include "lepcnn/detail/fileio.hpp"
#include "lepcnn/detail/overloaded.hpp"
#include "lepcnn/errors.hpp"

namespace lepcnn {
namespace {

enum class LayerKind : uint8_t { kConv = 0, kFc = 1, kRelu = 2, kPool = 3 };

static_assert(std::endian::native == std::endian::little,
              "model file arrays are copied as little-endian host integers");

template <class T>
void write_array(detail::ByteWriter& w, const std::vector<T>& values) {
  std::vector<uint8_t>& out = w.bytes();
  const size_t at = out.size();
  out.resize(at + values.size() * sizeof(T));
  std::memcpy(out.data() + at, values.data(), values.size() * sizeof(T));
}

template <class T>
std::vector<T> read_array(detail::ByteReader<IntegrityError>& r, uint64_t count) {
  r.need_items(count, sizeof(T));
  const auto bytes = r.raw(count * sizeof(T));
  std::vector<T> out(count);
  std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

}  // namespace

std::vector<uint8_t> serialize_model(const Model& model) {
  model.validate();
  detail::ByteWriter w;
  w.tag("LEPM");
  w.u16(kModelFileVersion);
  const FpParams& fp = model.net.fp;
  w.u16(static_cast<uint16_t>(fp.gamma));
  w.u16(static_cast<uint16_t>(fp.lambda));
  w.u16(static_cast<uint16_t>(fp.scale_exponent));
  w.u16(static_cast<uint16_t>(fp.weight_bits));
  w.u32(model.net.input.height);
  w.u32(model.net.input.width);
  w.u32(model.net.input.depth);
  w.u32(static_cast<uint32_t>(model.net.layers.size()));
  for (size_t i = 0; i < model.net.layers.size(); ++i) {
    std::visit(detail::Overloaded{
                   [&](const ConvLayerSpec& c) {
                     w.u8(static_cast<uint8_t>(LayerKind::kConv));
                     for (uint32_t v : {c.input_side, c.input_depth, c.kernel_side,
                                        c.kernel_count, c.stride, c.padding}) {
                       w.u32(v);
                     }
                     const ConvParams& p = std::get<ConvParams>(model.params[i]);
                     write_array(w, p.kernels);
                     write_array(w, p.bias);
                   },
                   [&](const FcLayerSpec& f) {
                     w.u8(static_cast<uint8_t>(LayerKind::kFc));
                     w.u32(f.input_length);
                     w.u32(f.neuron_count);
                     const FcParams& p = std::get<FcParams>(model.params[i]);
                     write_array(w, p.weights);
                     write_array(w, p.bias);
                   },
                   [&](const ReluSpec&) { w.u8(static_cast<uint8_t>(LayerKind::kRelu)); },
                   [&](const PoolSpec& p) {
                     w.u8(static_cast<uint8_t>(LayerKind::kPool));
                     w.u8(static_cast<uint8_t>(p.kind));
                     w.u32(p.size);
                     w.u32(p.stride);
                   }},
               model.net.layers[i]);
  }
  const Digest d = sha256(w.bytes());
  w.raw(d);
  return w.take();
}

Model parse_model(std::span<const uint8_t> data) {
  if (data.size() < 32) throw IntegrityError("model file too short");
  const auto body = data.first(data.size() - 32);
  const Digest d = sha256(body);
  if (!std::equal(d.begin(), d.end(), data.end() - 32)) {
    throw IntegrityError("model file checksum mismatch");
  }
  detail::ByteReader<IntegrityError> r(body);
  r.expect_tag("LEPM");
  const uint16_t version = r.u16();
  if (version != kModelFileVersion) {
    throw IntegrityError("unsupported model file version " + std::to_string(version));
  }
  Model model;
  FpParams& fp = model.net.fp;
  fp.gamma = r.u16();
  fp.lambda = r.u16();
  fp.scale_exponent = r.u16();
  fp.weight_bits = r.u16();
  model.net.input.height = r.u32();
  model.net.input.width = r.u32();
  model.net.input.depth = r.u32();
  const uint32_t count = r.u32();
  r.need_items(count, 1);
  for (uint32_t i = 0; i < count; ++i) {
    const uint8_t kind = r.u8();
    switch (static_cast<LayerKind>(kind)) {
      case LayerKind::kConv: {
        ConvLayerSpec c;
        c.input_side = r.u32();
        c.input_depth = r.u32();
        c.kernel_side = r.u32();
        c.kernel_count = r.u32();
        c.stride = r.u32();
        c.padding = r.u32();
        try {
          c.validate();
        } catch (const Error& e) {
          throw IntegrityError("layer " + std::to_string(i) + ": " + e.what());
        }
        ConvParams p;
        p.kernels = read_array<int32_t>(r, uint64_t{c.kernel_count} * c.fan_in());
        p.bias = read_array<int64_t>(r, c.kernel_count);
        model.net.layers.emplace_back(c);
        model.params.emplace_back(std::move(p));
        break;
      }
      case LayerKind::kFc: {
        FcLayerSpec f;
        f.input_length = r.u32();
        f.neuron_count = r.u32();
        try {
          f.validate();
        } catch (const Error& e) {
          throw IntegrityError("layer " + std::to_string(i) + ": " + e.what());
        }
        FcParams p;
        p.weights = read_array<int32_t>(r, uint64_t{f.input_length} * f.neuron_count);
        p.bias = read_array<int64_t>(r, f.neuron_count);
        model.net.layers.emplace_back(f);
        model.params.emplace_back(std::move(p));
        break;
      }
      case LayerKind::kRelu:
        model.net.layers.emplace_back(ReluSpec{});
        model.params.emplace_back(NoParams{});
        break;
      case LayerKind::kPool: {
        const uint8_t pk = r.u8();
        if (pk > 1) throw IntegrityError("unknown pool kind " + std::to_string(pk));
        PoolSpec p{static_cast<PoolKind>(pk), 0, 0};
        p.size = r.u32();
        p.stride = r.u32();
        model.net.layers.emplace_back(p);
        model.params.emplace_back(NoParams{});
        break;
      }
      default:
        throw IntegrityError("unknown layer kind " + std::to_string(kind));
    }
  }
  if (!r.done()) throw IntegrityError("trailing bytes in model file");
  try {
    model.validate();
  } catch (const IntegrityError&) {
    throw;
  } catch (const Error& e) {
    throw IntegrityError(std::string("model file: ") + e.what());
  }
  return model;
}

void save_model(const Model& model, const std::filesystem::path& path) {
  detail::write_file_durable(path, serialize_model(model));
}

Model load_model(const std::filesystem::path& path) {
  return parse_model(detail::read_file(path));
}

Digest model_digest(const Model& model) {
  const std::vector<uint8_t> bytes = serialize_model(model);
  Digest d;
  std::copy(bytes.end() - 32, bytes.end(), d.begin());
  return d;
}

namespace {

struct Line {
  size_t number;
  std::string op;
  std::vector<std::string> positional;
  std::map<std::string, std::string> named;
};

[[noreturn]] void syntax(const Line& line, const std::string& what) {
  throw ParamViolation("architecture line " + std::to_string(line.number) + ": " + what);
}

uint32_t to_u32(const Line& line, const std::string& text) {
  uint32_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    syntax(line, "expected an unsigned integer, got \"" + text + "\"");
  }
  return v;
}

uint32_t take(Line& line, const std::string& key, std::optional<uint32_t> fallback = {}) {
  const auto it = line.named.find(key);
  if (it == line.named.end()) {
    if (!fallback) syntax(line, line.op + " needs " + key + "=");
    return *fallback;
  }
  const uint32_t v = to_u32(line, it->second);
  line.named.erase(it);
  return v;
}

void finish(const Line& line, size_t positional) {
  if (line.positional.size() != positional) {
    syntax(line, line.op + " takes " + std::to_string(positional) + " plain arguments");
  }
  if (!line.named.empty()) syntax(line, "unknown option " + line.named.begin()->first);
}

}  // namespace

NetworkSpec parse_architecture(std::string_view text) {
  NetworkSpec net;
  bool have_input = false;
  Shape3 current;
  std::istringstream in{std::string(text)};
  std::string raw;
  size_t number = 0;
  while (std::getline(in, raw)) {
    ++number;
    raw = raw.substr(0, raw.find('#'));
    std::istringstream words(raw);
    Line line{number, {}, {}, {}};
    if (!(words >> line.op)) continue;
    for (std::string word; words >> word;) {
      const size_t eq = word.find('=');
      if (eq == std::string::npos) {
        line.positional.push_back(word);
      } else if (!line.named.emplace(word.substr(0, eq), word.substr(eq + 1)).second) {
        syntax(line, "repeated option " + word.substr(0, eq));
      }
    }
    if (line.op == "input") {
      finish(line, 3);
      if (have_input) syntax(line, "input given twice");
      net.input = {to_u32(line, line.positional[0]), to_u32(line, line.positional[1]),
                   to_u32(line, line.positional[2])};
      current = net.input;
      have_input = true;
      continue;
    }
    if (line.op == "fixed") {
      net.fp.gamma = take(line, "gamma", net.fp.gamma);
      net.fp.lambda = take(line, "lambda", net.fp.lambda);
      net.fp.scale_exponent = take(line, "scale", net.fp.scale_exponent);
      net.fp.weight_bits = take(line, "weight_bits", net.fp.weight_bits);
      finish(line, 0);
      continue;
    }
    if (!have_input) syntax(line, "layers must follow the input line");
    if (line.op == "conv") {
      if (current.height != current.width) {
        throw DimensionError("architecture line " + std::to_string(number) +
                             ": conv needs a square input, got " + current.to_string());
      }
      ConvLayerSpec c;
      c.input_side = current.height;
      c.input_depth = current.depth;
      c.kernel_count = take(line, "kernels");
      c.kernel_side = take(line, "size");
      c.stride = take(line, "stride", 1);
      c.padding = take(line, "pad", 0);
      finish(line, 0);
      net.layers.emplace_back(c);
    } else if (line.op == "fc") {
      finish(line, 1);
      const uint64_t m = current.size();
      if (m > UINT32_MAX) throw DimensionError("fc input too long");
      net.layers.emplace_back(
          FcLayerSpec{static_cast<uint32_t>(m), to_u32(line, line.positional[0])});
    } else if (line.op == "relu") {
      finish(line, 0);
      net.layers.emplace_back(ReluSpec{});
    } else if (line.op == "maxpool" || line.op == "avgpool") {
      PoolSpec p{line.op == "maxpool" ? PoolKind::kMax : PoolKind::kAvg, 0, 0};
      p.size = take(line, "size");
      p.stride = take(line, "stride", p.size);
      finish(line, 0);
      net.layers.emplace_back(p);
    } else {
      syntax(line, "unknown layer \"" + line.op + "\"");
    }
    current = net.shapes().back();
  }
  if (!have_input) throw ParamViolation("architecture has no input line");
  net.validate();
  return net;
}

std::string format_architecture(const NetworkSpec& net) {
  std::ostringstream out;
  out << "input " << net.input.height << ' ' << net.input.width << ' ' << net.input.depth
      << '\n';
  out << "fixed gamma=" << net.fp.gamma << " lambda=" << net.fp.lambda
      << " scale=" << net.fp.scale_exponent << " weight_bits=" << net.fp.weight_bits << '\n';
  for (const LayerSpec& layer : net.layers) {
    std::visit(detail::Overloaded{
                   [&](const ConvLayerSpec& c) {
                     out << "conv kernels=" << c.kernel_count << " size=" << c.kernel_side
                         << " stride=" << c.stride << " pad=" << c.padding << '\n';
                   },
                   [&](const FcLayerSpec& f) { out << "fc " << f.neuron_count << '\n'; },
                   [&](const ReluSpec&) { out << "relu\n"; },
                   [&](const PoolSpec& p) {
                     out << (p.kind == PoolKind::kMax ? "maxpool" : "avgpool")
                         << " size=" << p.size << " stride=" << p.stride << '\n';
                   }},
               layer);
  }
  return out.str();
}

}  // namespace lepcnn
