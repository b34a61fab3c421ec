// Independent reference computations for codec round-trip checks.
#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "fcgs/ply.hpp"

namespace fcgs::testing {

struct Reference {
  std::vector<std::uint32_t> order;  // decoded row i holds original row order[i]
  Matrix positions;                  // expected decoded positions, decoded order
};

// Lattice of 65536 points per axis spanning the data box; the decoder emits
// points sorted by their interleaved (x above y above z) lattice code, ties
// in input order.
inline Reference reference_order(const Matrix& pos) {
  const std::size_t n = pos.rows;
  double lo[3], hi[3];
  for (int a = 0; a < 3; ++a) {
    lo[a] = hi[a] = pos(0, a);
    for (std::size_t i = 1; i < n; ++i) lo[a] = std::min(lo[a], pos(i, a)), hi[a] = std::max(hi[a], pos(i, a));
    if (hi[a] - lo[a] < 1e-6) hi[a] = lo[a] + 1e-6;
  }
  std::vector<std::uint64_t> code(n, 0);
  std::vector<std::array<std::uint32_t, 3>> idx(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (int a = 0; a < 3; ++a) {
      const double t = std::floor((pos(i, a) - lo[a]) / (hi[a] - lo[a]) * 65535.0 + 0.5);
      idx[i][a] = static_cast<std::uint32_t>(std::clamp(t, 0.0, 65535.0));
    }
    for (int bit = 15; bit >= 0; --bit) {
      for (int a = 0; a < 3; ++a) code[i] = code[i] << 1 | ((idx[i][a] >> bit) & 1);
    }
  }
  Reference r;
  r.order.resize(n);
  std::iota(r.order.begin(), r.order.end(), 0u);
  std::stable_sort(r.order.begin(), r.order.end(), [&](auto x, auto y) { return code[x] < code[y]; });
  r.positions = Matrix(n, 3);
  for (std::size_t i = 0; i < n; ++i) {
    for (int a = 0; a < 3; ++a) {
      const auto k = idx[r.order[i]][a];
      r.positions(i, a) = k == 65535 ? hi[a] : lo[a] + (hi[a] - lo[a]) * (double(k) / 65535.0);
    }
  }
  return r;
}

struct RoundTripErrors {
  bool positions_exact = true;
  double geo = 0;        // max |error| / step
  double col_plain = 0;  // same for the colours of rows coded without transform
  std::size_t plain_rows = 0;
};

// Errors of `decoded` against `original`, as multiples of the step sizes.
inline RoundTripErrors round_trip_errors(const GaussianCloud& original, const GaussianCloud& decoded,
                                         const Reference& ref, const std::vector<double>& q_geo,
                                         const std::vector<double>& q_col) {
  RoundTripErrors e;
  const float threshold = 1.0f / 128;
  for (std::size_t i = 0; i < decoded.size(); ++i) {
    const std::size_t r = ref.order[i];
    for (int a = 0; a < 3; ++a) e.positions_exact &= decoded.positions(i, a) == ref.positions(i, a);
    for (std::size_t k = 0; k < kGeoDim; ++k) {
      e.geo = std::max(e.geo, std::abs(decoded.f_geo(i, k) - original.f_geo(r, k)) / q_geo[k]);
    }
    if (static_cast<float>(original.f_geo(r, 0)) < threshold) {
      ++e.plain_rows;
      for (std::size_t k = 0; k < kColDim; ++k) {
        e.col_plain = std::max(e.col_plain, std::abs(decoded.f_col(i, k) - original.f_col(r, k)) / q_col[k]);
      }
    }
  }
  return e;
}

}  // namespace fcgs::testing
