#include "lepcnn/int256.hpp"

#include <array>
#include <random>

#include "doctest.h"
#include "lepcnn/errors.hpp"

using lepcnn::Int256;

namespace {

Int256 from_i128(__int128 v) {
  const auto u = static_cast<unsigned __int128>(v);
  const uint64_t fill = v < 0 ? ~0ULL : 0ULL;
  return Int256::from_limbs({static_cast<uint64_t>(u),
                             static_cast<uint64_t>(u >> 64), fill, fill});
}

}  // namespace

TEST_CASE("arithmetic agrees with __int128 on random operands") {
  std::mt19937_64 gen(7);
  for (int i = 0; i < 20000; ++i) {
    const auto a = static_cast<int64_t>(gen());
    const auto b = static_cast<int64_t>(gen());
    const auto w = static_cast<int64_t>(gen()) >> (gen() % 63);
    CHECK(Int256(a) + Int256(b) == from_i128(static_cast<__int128>(a) + b));
    CHECK(Int256(a) - Int256(b) == from_i128(static_cast<__int128>(a) - b));
    CHECK(Int256(a) * w == from_i128(static_cast<__int128>(a) * w));
    CHECK((Int256(a) < Int256(b)) == (a < b));
    CHECK(Int256(a).to_int64() == a);
  }
}

TEST_CASE("add_product accumulates large magnitudes") {
  const Int256 big = Int256::power_of_two(160) + Int256(12345);
  Int256 acc;
  acc.add_product(big, -3);
  acc.add_product(big, 5);
  CHECK(acc == big * 2);
  acc.add_product(big, INT64_MIN);
  CHECK(acc == big * 2 - (big << 63));
}

TEST_CASE("decimal rendering") {
  CHECK(Int256().to_string() == "0");
  CHECK(Int256(-42).to_string() == "-42");
  CHECK(Int256::power_of_two(160).to_string() ==
        "1461501637330902918203684832716283019655932542976");
  CHECK((-Int256::power_of_two(200) + Int256(12345)).to_string() ==
        "-1606938044258990275541962092341162602522202993782792835289031");
}

TEST_CASE("shifts are arithmetic") {
  CHECK((Int256(-7) >> 1) == Int256(-4));
  CHECK((Int256(7) >> 1) == Int256(3));
  CHECK((Int256(-1) >> 200) == Int256(-1));
  const Int256 x = Int256(-123456789) << 150;
  CHECK((x >> 150) == Int256(-123456789));
  CHECK(x.is_negative());
}

TEST_CASE("width predicates") {
  CHECK(Int256::power_of_two(159).fits_unsigned(160));
  CHECK_FALSE(Int256::power_of_two(160).fits_unsigned(160));
  CHECK(Int256(-128).fits_signed(8));
  CHECK_FALSE(Int256(128).fits_signed(8));
  CHECK_FALSE(Int256(-1).fits_unsigned(8));
  CHECK(Int256(0).magnitude_bits() == 0);
  CHECK(Int256(-8).magnitude_bits() == 4);
  CHECK(Int256::power_of_two(191).magnitude_bits() == 192);
}

TEST_CASE("little-endian encoding round-trips and rejects overflow") {
  std::mt19937_64 gen(11);
  for (int i = 0; i < 1000; ++i) {
    const Int256 v = Int256::from_limbs({gen(), gen(), gen() >> 1, 0});
    std::array<uint8_t, 24> b24;
    v.to_le_bytes(b24, false);
    CHECK(Int256::from_le_bytes(b24, false) == v);

    const Int256 s = (gen() & 1) ? -v : v;
    std::array<uint8_t, 32> b32;
    s.to_le_bytes(b32, true);
    CHECK(Int256::from_le_bytes(b32, true) == s);
  }
  std::array<uint8_t, 24> b;
  CHECK_THROWS_AS(Int256::power_of_two(192).to_le_bytes(b, false),
                  lepcnn::RangeError);
  CHECK_THROWS_AS(Int256(-1).to_le_bytes(b, false), lepcnn::RangeError);
  CHECK_THROWS_AS(Int256::power_of_two(200).to_int64(), lepcnn::RangeError);
}
