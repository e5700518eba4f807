#include "lepcnn/model_file.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "lepcnn/engine.hpp"
#include "lepcnn/errors.hpp"

using namespace lepcnn;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Model toy(uint64_t seed) {
  SeededRandom rng(seed);
  return random_model(parse_architecture(slurp(LEPCNN_MODELS_DIR "/toy.arch")), rng);
}

}  // namespace

TEST_CASE("architecture text") {
  SUBCASE("alexnet file describes the alexnet chain") {
    CHECK(parse_architecture(slurp(LEPCNN_MODELS_DIR "/alexnet.arch")) == alexnet_spec());
  }
  SUBCASE("format then parse is the identity") {
    const NetworkSpec net = alexnet_spec();
    CHECK(parse_architecture(format_architecture(net)) == net);
    const NetworkSpec t = toy(1).net;
    CHECK(parse_architecture(format_architecture(t)) == t);
    CHECK(t.shapes().back() == Shape3{1, 1, 10});
  }
  SUBCASE("defaults") {
    const NetworkSpec net = parse_architecture("input 4 4 1\nconv kernels=2 size=3\nmaxpool size=2\n");
    const auto& c = std::get<ConvLayerSpec>(net.layers[0]);
    CHECK(c.stride == 1);
    CHECK(c.padding == 0);
    CHECK(std::get<PoolSpec>(net.layers[1]).stride == 2);
    CHECK(net.fp == FpParams{});
  }
  SUBCASE("errors carry line numbers") {
    const auto message = [](std::string_view text) {
      try {
        parse_architecture(text);
      } catch (const Error& e) {
        return std::string(e.what());
      }
      return std::string("no error");
    };
    CHECK(message("input 4 4 1\nconv size=3\n").find("line 2") != std::string::npos);
    CHECK(message("input 4 4 1\n\nblur\n").find("line 3") != std::string::npos);
    CHECK(message("conv kernels=1 size=1\n").find("line 1") != std::string::npos);
    CHECK_THROWS_AS(parse_architecture(""), ParamViolation);
    CHECK_THROWS_AS(parse_architecture("input 4 4 1\nconv kernels=1 size=3 bogus=2\n"),
                    ParamViolation);
    CHECK_THROWS_AS(parse_architecture("input 4 4 1\nconv kernels=1 size=x\n"), ParamViolation);
    CHECK_THROWS_AS(parse_architecture("input 4 4 1\nconv kernels=1 size=3 stride=2\n"),
                    DimensionError);
    CHECK_THROWS_AS(parse_architecture("input 4 3 1\nconv kernels=1 size=3\n"), DimensionError);
    CHECK_THROWS_AS(parse_architecture("input 4 4 1\nfixed gamma=31 lambda=160\n"),
                    ParamViolation);
  }
}

TEST_CASE("model file") {
  const Model model = toy(2);
  const std::vector<uint8_t> bytes = serialize_model(model);
  SUBCASE("round trip") {
    const Model back = parse_model(bytes);
    CHECK(back == model);
    CHECK(serialize_model(back) == bytes);
    CHECK(model_digest(back) == model_digest(model));
    CHECK(model_digest(toy(3)) != model_digest(model));
  }
  SUBCASE("save and load") {
    const auto path = std::filesystem::temp_directory_path() / "lepcnn-model-test.lepm";
    save_model(model, path);
    CHECK(load_model(path) == model);
    std::filesystem::remove(path);
  }
  SUBCASE("a flipped bit anywhere is caught") {
    for (size_t i = 0; i < bytes.size(); i += 131) {
      std::vector<uint8_t> bad = bytes;
      bad[i] ^= 0x10;
      CHECK_THROWS_AS(parse_model(bad), IntegrityError);
    }
  }
  SUBCASE("truncation") {
    for (size_t cut : {size_t{0}, size_t{10}, bytes.size() / 2, bytes.size() - 1}) {
      CHECK_THROWS_AS(parse_model(std::span(bytes).first(cut)), IntegrityError);
    }
  }
  SUBCASE("weights too wide for the declared width are refused") {
    Model wide = model;
    std::get<ConvParams>(wide.params[0]).kernels[0] = 1 << 20;
    CHECK_THROWS_AS(serialize_model(wide), ParamViolation);
  }
}
