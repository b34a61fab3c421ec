#include <algorithm>
#include <cmath>

#include "check.hpp"
#include "fcgs/geometry.hpp"
#include "fcgs/rng.hpp"

using namespace fcgs;

namespace {

std::uint64_t morton_oracle(const Index3& p) {
  std::uint64_t code = 0;
  for (int i = 0; i < 16; ++i) {
    code |= std::uint64_t((p[0] >> i) & 1) << (3 * i + 2);
    code |= std::uint64_t((p[1] >> i) & 1) << (3 * i + 1);
    code |= std::uint64_t((p[2] >> i) & 1) << (3 * i);
  }
  return code;
}

std::vector<Index3> sorted_by_code(std::vector<Index3> v) {
  std::stable_sort(v.begin(), v.end(), [](const Index3& a, const Index3& b) { return morton_oracle(a) < morton_oracle(b); });
  return v;
}

std::vector<Index3> random_points(std::size_t n, std::uint64_t seed, std::uint32_t span) {
  Xoshiro256 rng(seed);
  std::vector<Index3> v(n);
  for (auto& p : v) {
    for (auto& c : p) c = static_cast<std::uint16_t>(rng.below(span));
  }
  return v;
}

}  // namespace

TEST_CASE("lattice end points are the box corners") {
  const double lo = -2.5, hi = 7.25;
  CHECK(quantize_coord(lo, lo, hi) == 0);
  CHECK(quantize_coord(hi, lo, hi) == kLatticeMax);
  CHECK(dequantize_coord(0, lo, hi) == lo);
  CHECK(dequantize_coord(kLatticeMax, lo, hi) == hi);
  CHECK(quantize_coord(lo - 1, lo, hi) == 0);
  CHECK(quantize_coord(hi + 1, lo, hi) == kLatticeMax);
}

TEST_CASE("quantization error is at most half a lattice step") {
  Xoshiro256 rng(3);
  const double lo = -1.0, hi = 3.0;
  const double step = (hi - lo) / kLatticeMax;
  for (int i = 0; i < 100000; ++i) {
    const double p = rng.uniform(lo, hi);
    const std::uint16_t k = quantize_coord(p, lo, hi);
    CHECK(k == static_cast<std::uint16_t>(std::floor((p - lo) / (hi - lo) * 65535 + 0.5)));
    CHECK(std::abs(dequantize_coord(k, lo, hi) - p) <= 0.5 * step * (1 + 1e-9));
  }
}

TEST_CASE("requantizing a dequantized coordinate is the identity") {
  const double lo = -0.731, hi = 12.9;
  for (std::uint32_t k = 0; k <= kLatticeMax; ++k) {
    const auto idx = static_cast<std::uint16_t>(k);
    REQUIRE(quantize_coord(dequantize_coord(idx, lo, hi), lo, hi) == idx);
    // also through float storage
    REQUIRE(quantize_coord(static_cast<float>(dequantize_coord(idx, lo, hi)), lo, hi) == idx);
  }
}

TEST_CASE("morton code interleaves x above y above z") {
  CHECK(morton_code({1, 0, 0}) == 4);
  CHECK(morton_code({0, 1, 0}) == 2);
  CHECK(morton_code({0, 0, 1}) == 1);
  CHECK(morton_code({0xFFFF, 0xFFFF, 0xFFFF}) == (std::uint64_t{1} << 48) - 1);
  for (const auto& p : random_points(5000, 4, 65536)) CHECK(morton_code(p) == morton_oracle(p));
}

TEST_CASE("morton order is stable") {
  std::vector<Index3> pts = {{5, 5, 5}, {1, 1, 1}, {5, 5, 5}, {0, 0, 0}, {1, 1, 1}};
  const auto order = morton_order(pts);
  CHECK(order == std::vector<std::uint32_t>{3, 1, 4, 0, 2});
}

TEST_CASE("octree round trip") {
  for (std::uint32_t span : {2u, 64u, 65536u}) {
    for (std::size_t n : {1ul, 2ul, 7ul, 3000ul}) {
      CAPTURE(span);
      CAPTURE(n);
      const auto pts = random_points(n, span * 31 + n, span);
      const Bytes b = encode_positions(pts);
      CHECK(decode_positions(b) == sorted_by_code(pts));
    }
  }
}

TEST_CASE("clustered points code well below raw size") {
  auto pts = random_points(20000, 9, 256);
  for (auto& p : pts) {
    for (auto& c : p) c = static_cast<std::uint16_t>(c + 30000);
  }
  const Bytes b = encode_positions(pts);
  CHECK(b[0] == 0);
  CHECK(b.size() < 6 * pts.size() / 2);
  CHECK(decode_positions(b) == sorted_by_code(pts));
}

TEST_CASE("duplicates are kept") {
  std::vector<Index3> pts = {{3, 3, 3}, {3, 3, 3}, {3, 3, 3}, {9, 0, 1}, {9, 0, 1}, {70, 70, 70}};
  const Bytes b = encode_positions(pts);
  CHECK(decode_positions(b) == sorted_by_code(pts));
}

TEST_CASE("sparse random points fall back to raw coding") {
  const auto pts = random_points(3, 12, 65536);
  const Bytes b = encode_positions(pts);
  if (b[0] == 1) CHECK(b.size() == 5 + 6 * pts.size());
  CHECK(decode_positions(b) == sorted_by_code(pts));
}

TEST_CASE("bad position sections are rejected") {
  const auto pts = random_points(500, 13, 128);
  const Bytes good = encode_positions(pts);
  REQUIRE(good[0] == 0);
  {
    Bytes b = good;
    b[0] = 7;
    CHECK_FAILS_MENTIONING(decode_positions(b), ErrorKind::Corruption, "mode");
  }
  {
    Bytes b = good;
    b.push_back(0);
    CHECK_FAILS_WITH(decode_positions(b), ErrorKind::Corruption);
  }
  {
    Bytes b = good;
    b[1] = b[1] ^ 1;  // point count
    CHECK_FAILS_WITH(decode_positions(b), ErrorKind::Corruption);
  }
  {
    Bytes b = good;
    b[5] = 4;  // flags
    CHECK_FAILS_WITH(decode_positions(b), ErrorKind::Corruption);
  }
  {
    Bytes b(good.begin(), good.begin() + 20);
    CHECK_THROWS_AS(decode_positions(b), Error);
  }
  CHECK_FAILS_WITH(encode_positions(std::vector<Index3>{}), ErrorKind::InvalidArgument);
}
