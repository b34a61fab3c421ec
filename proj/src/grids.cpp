#include <algorithm>
#include <cmath>

#include "fcgs/context.hpp"

namespace fcgs {

namespace {

constexpr std::size_t kCacheLimit = std::size_t{1} << 22;  // doubles per grid

// Grid-index coordinates of a normalised position.
void to_grid(const GridSpec& s, const double* p, double* g) {
  const double scale = static_cast<double>(s.res - 1);
  for (int d = 0; d < s.dims; ++d) g[d] = p[s.axes[d]] * scale;
}

// Cell containing g; the top face belongs to the last cell.
void cell_of(const GridSpec& s, const double* g, std::int64_t* c) {
  const auto top = static_cast<std::int64_t>(s.res) - 2;
  for (int d = 0; d < s.dims; ++d) c[d] = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(g[d])), 0, top);
}

// Calls fn(vertex, weight) for the 2^dims vertices of the cell around p,
// in binary order of the offset bits (first axis most significant).
template <typename Fn>
void for_each_corner(const GridSpec& s, const double* p, Fn&& fn) {
  double g[3];
  std::int64_t c[3];
  to_grid(s, p, g);
  cell_of(s, g, c);
  const int corners = 1 << s.dims;
  for (int m = 0; m < corners; ++m) {
    std::int64_t v[3];
    for (int d = 0; d < s.dims; ++d) v[d] = c[d] + ((m >> (s.dims - 1 - d)) & 1);
    const double w = grid_weight(g, v, s.dims);
    if (w != 0.0) fn(v, w);
  }
}

void check_unit(const Matrix& positions) {
  for (std::size_t i = 0; i < positions.rows; ++i) {
    for (int d = 0; d < 3; ++d) {
      const double v = positions(i, d);
      if (!(v >= 0.0 && v <= 1.0)) {
        fail(ErrorKind::Internal, "normalised position of row " + std::to_string(i) + " lies outside [0, 1]");
      }
    }
  }
}

}  // namespace

std::vector<GridSpec> grid_specs(const std::array<std::size_t, 3>& res_3d, const std::array<std::size_t, 3>& res_2d) {
  std::vector<GridSpec> specs;
  for (auto r : res_3d) specs.push_back({3, {0, 1, 2}, r});
  const std::array<std::array<int, 3>, 3> planes = {{{0, 1, 0}, {0, 2, 0}, {1, 2, 0}}};
  for (const auto& axes : planes) {
    for (auto r : res_2d) specs.push_back({2, axes, r});
  }
  return specs;
}

std::vector<GridSpec> grid_specs(const ModelWeights& w) { return grid_specs(w.res_3d, w.res_2d); }

double grid_weight(const double* g, const std::int64_t* v, int dims) {
  double w = 1.0;
  for (int d = 0; d < dims; ++d) {
    const double t = 1.0 - std::fabs(g[d] - static_cast<double>(v[d]));
    if (t <= 0.0) return 0.0;
    w *= t;
  }
  return w;
}

std::size_t voxel_index(const GridSpec& s, const std::int64_t* v) {
  const auto r = static_cast<std::size_t>(s.res);
  std::size_t id = 0;
  for (int d = 0; d < s.dims; ++d) id = id * r + static_cast<std::size_t>(v[d]);
  return id;
}

// ---- lazy grids ------------------------------------------------------------

GridContext::GridContext(const Matrix& positions_norm, std::vector<GridSpec> specs, std::size_t dim,
                         std::vector<std::vector<std::uint32_t>> channels)
    : pos_(positions_norm), specs_(std::move(specs)), dim_(dim), channels_(std::move(channels)) {
  if (channels_.size() != specs_.size()) fail(ErrorKind::Internal, "one channel list per grid required");
  for (const auto& s : specs_) {
    if (s.res < 2) fail(ErrorKind::Internal, "grid resolution below 2");
  }
  check_unit(pos_);
  grids_.resize(specs_.size());
}

std::uint64_t GridContext::cell_id(const GridSpec& s, const std::int64_t* c) const {
  const std::uint64_t cells = s.res - 1;
  std::uint64_t id = 0;
  for (int d = 0; d < s.dims; ++d) id = id * cells + static_cast<std::uint64_t>(c[d]);
  return id;
}

void GridContext::rebuild(std::span<const std::uint8_t> include, LatentView latents) {
  if (include.size() != pos_.rows) fail(ErrorKind::Internal, "include mask length mismatch");
  latents_ = latents;
  for (std::size_t gi = 0; gi < specs_.size(); ++gi) {
    Grid& grid = grids_[gi];
    grid.cache.clear();
    grid.pool.clear();
    if (channels_[gi].empty()) {
      grid.begin.clear();
      grid.rows.clear();
      continue;
    }
    const GridSpec& s = specs_[gi];
    std::size_t cells = 1;
    for (int d = 0; d < s.dims; ++d) cells *= s.res - 1;
    grid.begin.assign(cells + 1, 0);
    std::vector<std::uint32_t> cell_of_row(pos_.rows);
    for (std::size_t r = 0; r < pos_.rows; ++r) {
      if (!include[r]) continue;
      double g[3];
      std::int64_t c[3];
      to_grid(s, pos_.row(r).data(), g);
      cell_of(s, g, c);
      cell_of_row[r] = static_cast<std::uint32_t>(cell_id(s, c));
      ++grid.begin[cell_of_row[r] + 1];
    }
    for (std::size_t c = 0; c < cells; ++c) grid.begin[c + 1] += grid.begin[c];
    grid.rows.assign(grid.begin.back(), 0);
    std::vector<std::uint32_t> fill(grid.begin.begin(), grid.begin.end() - 1);
    for (std::size_t r = 0; r < pos_.rows; ++r) {
      if (include[r]) grid.rows[fill[cell_of_row[r]]++] = static_cast<std::uint32_t>(r);
    }
  }
}

double GridContext::voxel_feature(std::size_t gi, const std::int64_t* v, double* out) const {
  const GridSpec& s = specs_[gi];
  const Grid& grid = grids_[gi];
  const auto& ch = channels_[gi];
  const std::size_t nch = ch.size();
  std::fill(out, out + nch, 0.0);
  if (grid.begin.empty()) return 0.0;

  const auto top = static_cast<std::int64_t>(s.res) - 2;
  double wsum = 0.0;
  const int around = 1 << s.dims;
  for (int m = 0; m < around; ++m) {
    std::int64_t c[3];
    bool valid = true;
    for (int d = 0; d < s.dims; ++d) {
      c[d] = v[d] - 1 + ((m >> (s.dims - 1 - d)) & 1);
      if (c[d] < 0 || c[d] > top) valid = false;
    }
    if (!valid) continue;
    const std::uint64_t id = cell_id(s, c);
    for (std::uint32_t k = grid.begin[id]; k < grid.begin[id + 1]; ++k) {
      const std::uint32_t row = grid.rows[k];
      double g[3];
      to_grid(s, pos_.row(row).data(), g);
      const double w = grid_weight(g, v, s.dims);
      if (w <= 0.0) continue;
      wsum += w;
      for (std::size_t i = 0; i < nch; ++i) out[i] += w * latents_.at(row, ch[i]);
    }
  }
  if (wsum > 0.0) {
    for (std::size_t i = 0; i < nch; ++i) out[i] /= wsum;
  }
  return wsum;
}

const double* GridContext::cached_voxel(std::size_t gi, const std::int64_t* v) {
  Grid& grid = grids_[gi];
  const std::size_t nch = channels_[gi].size();
  const std::uint64_t key = voxel_index(specs_[gi], v);
  auto it = grid.cache.find(key);
  if (it != grid.cache.end()) return grid.pool.data() + it->second;
  if (grid.pool.size() + nch > kCacheLimit) {
    grid.cache.clear();
    grid.pool.clear();
  }
  const auto offset = static_cast<std::uint32_t>(grid.pool.size());
  grid.pool.resize(grid.pool.size() + nch);
  voxel_feature(gi, v, grid.pool.data() + offset);
  grid.cache.emplace(key, offset);
  return grid.pool.data() + offset;
}

void GridContext::interpolate(const double* p, double* out) {
  std::fill(out, out + specs_.size() * dim_, 0.0);
  for (std::size_t gi = 0; gi < specs_.size(); ++gi) {
    const auto& ch = channels_[gi];
    if (ch.empty()) continue;
    double* dst = out + gi * dim_;
    for_each_corner(specs_[gi], p, [&](const std::int64_t* v, double w) {
      const double* f = cached_voxel(gi, v);
      for (std::size_t i = 0; i < ch.size(); ++i) dst[ch[i]] += w * f[i];
    });
  }
}

// ---- dense grids -----------------------------------------------------------

GridSet build_grids(const Matrix& positions_norm, const Matrix& y_hat, std::span<const std::uint8_t> include,
                    const std::vector<GridSpec>& specs) {
  if (y_hat.rows != positions_norm.rows || include.size() != positions_norm.rows) {
    fail(ErrorKind::InvalidArgument, "build_grids: positions, latents and include disagree in length");
  }
  const std::size_t dim = y_hat.cols;
  std::vector<std::uint32_t> all(dim);
  for (std::size_t c = 0; c < dim; ++c) all[c] = static_cast<std::uint32_t>(c);
  GridContext ctx(positions_norm, specs, dim, std::vector<std::vector<std::uint32_t>>(specs.size(), all));
  LatentView view;
  view.real = y_hat.data.data();
  view.dim = dim;
  ctx.rebuild(include, view);

  GridSet set;
  set.specs = specs;
  set.dim = dim;
  set.features.resize(specs.size());
  set.weights.resize(specs.size());
  for (std::size_t gi = 0; gi < specs.size(); ++gi) {
    const GridSpec& s = specs[gi];
    const std::size_t n = s.voxels();
    set.features[gi].assign(n * dim, 0.0);
    set.weights[gi].assign(n, 0.0);
    std::int64_t v[3] = {0, 0, 0};
    for (std::size_t id = 0; id < n; ++id) {
      std::size_t rest = id;
      for (int d = s.dims - 1; d >= 0; --d) {
        v[d] = static_cast<std::int64_t>(rest % s.res);
        rest /= s.res;
      }
      set.weights[gi][id] = ctx.voxel_feature(gi, v, set.features[gi].data() + id * dim);
    }
  }
  return set;
}

std::vector<double> interpolate(const GridSet& grids, const double* p) {
  for (int d = 0; d < 3; ++d) {
    if (!(p[d] >= 0.0 && p[d] <= 1.0)) fail(ErrorKind::Internal, "interpolation position outside [0, 1]");
  }
  const std::size_t dim = grids.dim;
  std::vector<double> out(grids.specs.size() * dim, 0.0);
  for (std::size_t gi = 0; gi < grids.specs.size(); ++gi) {
    const GridSpec& s = grids.specs[gi];
    double* dst = out.data() + gi * dim;
    for_each_corner(s, p, [&](const std::int64_t* v, double w) {
      const double* f = grids.features[gi].data() + voxel_index(s, v) * dim;
      for (std::size_t c = 0; c < dim; ++c) dst[c] += w * f[c];
    });
  }
  return out;
}

}  // namespace fcgs
