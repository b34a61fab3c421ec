#pragma once

#include <array>
#include <cstddef>

#include "fcgs/bytes.hpp"
#include "fcgs/matrix.hpp"

namespace fcgs {

inline constexpr std::size_t kGeoDim = 8;    // opacity, scale x3, rotation x4
inline constexpr std::size_t kColDim = 48;   // degree-3 SH, 16 per colour component
inline constexpr std::size_t kGauDim = kGeoDim + kColDim;
inline constexpr std::size_t kPlyScalars = 62;  // xyz, normals, 48 SH, 8 geometry

// A 3DGS scene. Attributes are kept pre-activation, exactly as stored on disk.
//
// f_geo columns: opacity, scale_0..2, rot_0..3.
// f_col columns: component-major SH, i.e. for colour i in {R,G,B} the 16
// coefficients [f_dc_i, f_rest_{15i}, ..., f_rest_{15i+14}].
struct GaussianCloud {
  Matrix positions;  // N x 3
  Matrix f_geo;      // N x 8
  Matrix f_col;      // N x 48

  GaussianCloud() = default;
  explicit GaussianCloud(std::size_t n) : positions(n, 3), f_geo(n, kGeoDim), f_col(n, kColDim) {}

  std::size_t size() const { return positions.rows; }

  // [f_geo | f_col], N x 56.
  Matrix f_gau() const;

  // Throws InvalidArgument when N == 0, shapes disagree or a value is not finite.
  void validate() const;
};

struct SceneBBox {
  std::array<double, 3> min{};
  std::array<double, 3> max{};

  double extent(int axis) const { return max[axis] - min[axis]; }
};

inline constexpr double kDegenerateExtent = 1e-6;

GaussianCloud parse_ply(ByteView bytes);
Bytes write_ply(const GaussianCloud& cloud);

// Componentwise min/max of positions, no padding.
SceneBBox scan_bbox(const Matrix& positions);

// Collapsed axes get max = min + kDegenerateExtent. Padding is one-sided so
// that the single coordinate on such an axis stays a lattice point.
SceneBBox pad_degenerate(SceneBBox box);

SceneBBox compute_bbox(const GaussianCloud& cloud);

// Length in bytes of the canonical PLY header written by write_ply for n Gaussians.
std::size_t ply_header_size(std::size_t n);

}  // namespace fcgs
