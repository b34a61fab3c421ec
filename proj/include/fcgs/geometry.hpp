#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "fcgs/bytes.hpp"
#include "fcgs/matrix.hpp"
#include "fcgs/ply.hpp"

namespace fcgs {

using Index3 = std::array<std::uint16_t, 3>;
inline constexpr int kLatticeBits = 16;
inline constexpr std::uint32_t kLatticeMax = (1u << kLatticeBits) - 1;

// Lattice of 2^16 points per axis whose end points are exactly bbox.min and
// bbox.max: index = floor((p - min) / (max - min) * 65535 + 1/2). This is the
// floor((p - A) / E * 2^16) rule on the box [A, A + E] that extends the data
// box by half a lattice step on each side.
std::uint16_t quantize_coord(double p, double lo, double hi);
double dequantize_coord(std::uint16_t k, double lo, double hi);

struct QuantizedPositions {
  std::vector<Index3> indices;
  SceneBBox bbox;
};

QuantizedPositions quantize_positions(const Matrix& positions, const SceneBBox& bbox);
Matrix dequantize_positions(const QuantizedPositions& qp);

// Bit i of x, y, z lands at bits 3i+2, 3i+1, 3i.
std::uint64_t morton_code(const Index3& p);
// Stable: equal codes keep their input order.
std::vector<std::uint32_t> morton_order(std::span<const Index3> points);

// Lossless coding of the index multiset. Output is in Morton order.
Bytes encode_positions(std::span<const Index3> points);
std::vector<Index3> decode_positions(ByteView section);

}  // namespace fcgs
