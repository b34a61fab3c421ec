#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "fcgs/matrix.hpp"
#include "fcgs/weights.hpp"

namespace fcgs {

// ---- batches ---------------------------------------------------------------

struct BatchAssignment {
  std::vector<std::uint8_t> batch_of;               // per Gaussian
  std::vector<std::vector<std::uint32_t>> members;  // ascending indices per batch
  std::array<Ratio, 4> ratios{};
  std::uint64_t seed = 0;

  std::size_t n_batches() const { return members.size(); }
};

// Seeded Fisher-Yates permutation of [0, n) cut into runs of floor(n * r_i)
// for all but the last ratio; the last batch takes the remainder.
BatchAssignment split_batches(std::size_t n, std::uint64_t seed,
                              const std::array<Ratio, 4>& ratios = {Ratio{1, 6}, Ratio{1, 6}, Ratio{1, 3},
                                                                    Ratio{1, 3}});

// ---- grids -----------------------------------------------------------------

struct GridSpec {
  int dims = 3;               // 3 or 2
  std::array<int, 3> axes{};  // coordinate axes used, first `dims` entries
  std::size_t res = 2;

  std::size_t voxels() const { return dims == 3 ? res * res * res : res * res; }
};

// The 12 grids in interpolation order: 3D res_3d[0..2], then planes xy, xz,
// yz, each at res_2d[0..2].
std::vector<GridSpec> grid_specs(const std::array<std::size_t, 3>& res_3d, const std::array<std::size_t, 3>& res_2d);
std::vector<GridSpec> grid_specs(const ModelWeights& w);

// Interpolation weight between a point and a vertex in grid-index space:
// prod over axes of (1 - |g - v|), zero outside the unit range.
double grid_weight(const double* g, const std::int64_t* v, int dims);

// Read-only latent rows: either int16 symbols times a per-channel step or plain reals.
struct LatentView {
  const std::int16_t* symbols = nullptr;
  const double* step = nullptr;
  const double* real = nullptr;
  std::size_t dim = 0;

  double at(std::size_t row, std::size_t ch) const {
    return real ? real[row * dim + ch] : symbols[row * dim + ch] * step[ch];
  }
};

// Grid features evaluated on demand. A per-grid cell index lists the included
// Gaussians by ascending row; a voxel's feature is the weighted average of
// the latents in the (up to 8 or 4) cells around it, visited in a fixed order.
class GridContext {
 public:
  // channels[g] lists the feature channels grid g must produce; grids with
  // an empty list are never evaluated.
  GridContext(const Matrix& positions_norm, std::vector<GridSpec> specs, std::size_t dim,
              std::vector<std::vector<std::uint32_t>> channels);

  // Rebuild the cell index over the rows with include[row] != 0.
  void rebuild(std::span<const std::uint8_t> include, LatentView latents);

  // Writes specs.size() * dim values; channels not requested are zero.
  void interpolate(const double* position_norm, double* out);

  // Weighted-average feature of one voxel for the requested channels of
  // grid g; returns the accumulated weight.
  double voxel_feature(std::size_t g, const std::int64_t* voxel, double* out) const;

  const std::vector<GridSpec>& specs() const { return specs_; }
  std::size_t dim() const { return dim_; }
  const std::vector<std::uint32_t>& channels(std::size_t g) const { return channels_[g]; }

 private:
  struct Grid {
    std::vector<std::uint32_t> begin;  // cells + 1
    std::vector<std::uint32_t> rows;
    std::unordered_map<std::uint64_t, std::uint32_t> cache;
    std::vector<double> pool;
  };

  std::uint64_t cell_id(const GridSpec& s, const std::int64_t* c) const;
  const double* cached_voxel(std::size_t g, const std::int64_t* voxel);

  const Matrix& pos_;
  std::vector<GridSpec> specs_;
  std::size_t dim_;
  std::vector<std::vector<std::uint32_t>> channels_;
  std::vector<Grid> grids_;
  LatentView latents_;
};

// Dense grids, mainly for inspection and testing.
struct GridSet {
  std::vector<GridSpec> specs;
  std::size_t dim = 0;
  std::vector<std::vector<double>> features;  // per grid, voxels x dim
  std::vector<std::vector<double>> weights;   // per grid, accumulated weight per voxel
};

std::size_t voxel_index(const GridSpec& s, const std::int64_t* v);

// Throws Internal when a position lies outside [0, 1]^3.
GridSet build_grids(const Matrix& positions_norm, const Matrix& y_hat, std::span<const std::uint8_t> include,
                    const std::vector<GridSpec>& specs);

// Concatenation over all grids of the (tri/bi)linear interpolation.
std::vector<double> interpolate(const GridSet& grids, const double* position_norm);

// For each coordinate and k < L: sin(2^k pi p), cos(2^k pi p). Width 6L.
std::vector<double> positional_embedding(const double* position_norm, std::size_t frequencies);
void positional_embedding(const double* position_norm, std::size_t frequencies, double* out);

// ---- parameter heads -------------------------------------------------------

struct DistributionParams {
  std::vector<double> mu;
  std::vector<double> sigma;  // activated and clamped
  std::vector<double> pi;
};

// Splits a raw [mu | sigma-raw | pi] head row of width 3D.
DistributionParams split_head(const double* head, std::size_t dim, double sigma_min, double sigma_max);

DistributionParams inter_params(const ModelWeights& w, StreamKind stream, const GridSet& grids,
                                const double* position_norm);

// prefix holds the dequantised latents of chunks [0, chunk) of one Gaussian.
DistributionParams intra_params(const ModelWeights& w, StreamKind stream, std::span<const double> prefix,
                                std::size_t chunk);

// MLP_c input row: prefix zero-padded to (n-1)c, then the one-hot chunk index.
void intra_input(const StreamSpec& s, std::span<const double> prefix, std::size_t chunk, double* out);

}  // namespace fcgs
