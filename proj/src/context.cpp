#include <cmath>
#include <numbers>

#include "fcgs/context.hpp"
#include "fcgs/entropy.hpp"

namespace fcgs {

void positional_embedding(const double* p, std::size_t frequencies, double* out) {
  for (int d = 0; d < 3; ++d) {
    for (std::size_t k = 0; k < frequencies; ++k) {
      const double a = std::ldexp(std::numbers::pi, static_cast<int>(k)) * p[d];
      *out++ = std::sin(a);
      *out++ = std::cos(a);
    }
  }
}

std::vector<double> positional_embedding(const double* p, std::size_t frequencies) {
  std::vector<double> out(6 * frequencies);
  positional_embedding(p, frequencies, out.data());
  return out;
}

DistributionParams split_head(const double* head, std::size_t dim, double sigma_min, double sigma_max) {
  DistributionParams d;
  d.mu.assign(head, head + dim);
  d.sigma.resize(dim);
  for (std::size_t i = 0; i < dim; ++i) d.sigma[i] = activate_sigma(head[dim + i], sigma_min, sigma_max);
  d.pi.assign(head + 2 * dim, head + 3 * dim);
  return d;
}

DistributionParams inter_params(const ModelWeights& w, StreamKind stream, const GridSet& grids, const double* p) {
  const StreamSpec& s = w.stream(stream);
  if (grids.dim != s.y_dim) fail(ErrorKind::InvalidArgument, "grid feature width does not match the stream");
  const Mlp& net = w.mlp(s.name + ".mlp_s");
  std::vector<double> x = interpolate(grids, p);
  const std::vector<double> emb = positional_embedding(p, w.embed_freqs);
  x.insert(x.end(), emb.begin(), emb.end());
  if (x.size() != net.in()) fail(ErrorKind::InvalidArgument, "inter-context input width mismatch");
  std::vector<double> head(net.out());
  net.forward(x.data(), 1, head.data());
  return split_head(head.data(), s.y_dim, w.sigma_min, w.sigma_max);
}

void intra_input(const StreamSpec& s, std::span<const double> prefix, std::size_t chunk, double* out) {
  const std::size_t c = s.chunk_width();
  const std::size_t width = (s.n_chunks - 1) * c;
  std::fill(out, out + width + s.n_chunks, 0.0);
  std::copy(prefix.begin(), prefix.end(), out);
  out[width + chunk] = 1.0;
}

DistributionParams intra_params(const ModelWeights& w, StreamKind stream, std::span<const double> prefix,
                                std::size_t chunk) {
  const StreamSpec& s = w.stream(stream);
  if (!s.has_intra()) fail(ErrorKind::InvalidArgument, "stream " + s.name + " has no intra-Gaussian context");
  if (chunk >= s.n_chunks) fail(ErrorKind::InvalidArgument, "chunk index out of range");
  const std::size_t c = s.chunk_width();
  if (prefix.size() != chunk * c) {
    fail(ErrorKind::InvalidArgument, "prefix width " + std::to_string(prefix.size()) + " does not match chunk " +
                                         std::to_string(chunk));
  }
  if (chunk == 0) return split_head(w.chunk0[static_cast<int>(stream)].data(), c, w.sigma_min, w.sigma_max);
  const Mlp& net = w.mlp(s.name + ".mlp_c");
  std::vector<double> x(net.in());
  intra_input(s, prefix, chunk, x.data());
  std::vector<double> head(net.out());
  net.forward(x.data(), 1, head.data());
  return split_head(head.data(), c, w.sigma_min, w.sigma_max);
}

}  // namespace fcgs
