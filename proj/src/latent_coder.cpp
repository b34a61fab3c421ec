// Latent and hyper-latent coding for one stream of one scene chunk. Encoder,
// decoder and rate estimate all run the same driver so their distributions
// cannot drift apart.
#include <algorithm>
#include <array>
#include <cstring>
#include <cmath>
#include <optional>
#include <string>

#include "fcgs/entropy.hpp"
#include "fcgs/pipeline.hpp"

namespace fcgs {

namespace {

enum class Mode { Encode, Decode, Estimate };

std::string section_name(std::size_t batch, std::size_t chunk) {
  return "batch " + std::to_string(batch) + ", channel chunk " + std::to_string(chunk) + ": ";
}

constexpr std::size_t kBlockRows = 256;

struct SectionState {
  RangeEncoder enc;
  std::optional<RangeDecoder> dec;
  double bits = 0;
};

// Which feature channels of each grid MLP_s actually reads.
std::vector<std::vector<std::uint32_t>> used_channels(const Mlp& mlp_s, std::size_t grids, std::size_t dim) {
  std::vector<std::vector<std::uint32_t>> used(grids);
  for (std::size_t g = 0; g < grids; ++g) {
    for (std::size_t c = 0; c < dim; ++c) {
      if (mlp_s.uses_input(g * dim + c)) used[g].push_back(static_cast<std::uint32_t>(c));
    }
  }
  return used;
}

// Remembers the last few distributions seen on one channel. Distributions
// that keep repeating (idle channels, rows without context) are coded from a
// table once the table has paid for itself.
class ChannelMemo {
 public:
  using Key = std::array<double, 9>;

  const GmmTable* lookup(const Key& k, const GmmElement& e, double q) {
    ++clock_;
    Entry* victim = &entries_[0];
    for (Entry& en : entries_) {
      if (en.used && std::memcmp(k.data(), en.key.data(), sizeof(Key)) == 0) {
        en.last = clock_;
        ++en.hits;
        if (!en.table.cum.empty()) return &en.table;
        if (en.hits * kBreakEven >= gmm_window(e, q).bins + 1) {
          en.table = make_gmm_table(e, q);
          return &en.table;
        }
        return nullptr;
      }
      if (en.last < victim->last) victim = &en;
    }
    *victim = Entry{};
    victim->key = k;
    victim->used = true;
    victim->last = clock_;
    return nullptr;
  }

 private:
  // Boundary evaluations a table lookup saves per symbol, roughly.
  static constexpr std::size_t kBreakEven = 4;

  struct Entry {
    Key key{};
    bool used = false;
    std::uint64_t last = 0;
    std::size_t hits = 0;
    GmmTable table;
  };
  std::array<Entry, 4> entries_;
  std::uint64_t clock_ = 0;
};

struct DriverIO {
  const std::vector<ByteView>* in = nullptr;  // Decode
  std::vector<Bytes>* out = nullptr;          // Encode
  std::vector<double>* bits = nullptr;        // Estimate
};

void run_driver(Mode mode, const ModelWeights& w, StreamKind kind, const Matrix& pos_norm,
                std::span<const std::uint8_t> batch_of, std::size_t batches, const SymbolArray& z, SymbolArray& y,
                DriverIO io) {
  const StreamSpec& s = w.stream(kind);
  const std::size_t rows = y.rows;
  const std::size_t dim = s.y_dim;
  const std::size_t nk = s.n_chunks;
  const std::size_t cw = s.chunk_width();
  if (y.cols != dim || z.rows != rows || z.cols != s.z_dim || pos_norm.rows != rows || batch_of.size() != rows) {
    fail(ErrorKind::Internal, "latent driver inputs for " + s.name + " disagree in shape");
  }
  const std::size_t n_sections = batches * nk;
  if (mode == Mode::Decode && io.in->size() != n_sections) fail(ErrorKind::Internal, "wrong number of latent sections");
  if (mode == Mode::Encode) io.out->assign(n_sections, {});
  if (mode == Mode::Estimate) io.bits->assign(n_sections, 0.0);

  const Mlp& mlp_s = w.mlp(s.name + ".mlp_s");
  const Mlp& h_s = w.mlp(s.name + ".h_s");
  const Mlp* mlp_c = s.has_intra() ? &w.mlp(s.name + ".mlp_c") : nullptr;
  const std::vector<double>& chunk0 = w.chunk0[static_cast<int>(kind)];
  const auto specs = grid_specs(w);
  const std::size_t grid_width = specs.size() * dim;

  GridContext grids(pos_norm, specs, dim, used_channels(mlp_s, specs.size(), dim));
  const std::vector<double>& step = y.step;

  std::vector<std::vector<std::uint32_t>> members(batches);
  for (std::size_t r = 0; r < rows; ++r) {
    if (batch_of[r] >= batches) fail(ErrorKind::Internal, "batch index out of range");
    members[batch_of[r]].push_back(static_cast<std::uint32_t>(r));
  }

  std::vector<ChannelMemo> memo(dim);
  std::vector<std::uint8_t> include(rows, 0);
  std::vector<double> xs(kBlockRows * mlp_s.in()), hs_in(kBlockRows * s.z_dim);
  std::vector<double> S(kBlockRows * 3 * dim), H(kBlockRows * 3 * dim);
  std::vector<double> xc, C;
  if (mlp_c) {
    xc.resize(kBlockRows * mlp_c->in());
    C.resize(kBlockRows * 3 * cw);
  }

  for (std::size_t b = 0; b < batches; ++b) {
    LatentView view;
    view.symbols = y.data.data();
    view.step = step.data();
    view.dim = dim;
    grids.rebuild(include, view);

    std::vector<SectionState> sec(nk);
    if (mode == Mode::Decode) {
      for (std::size_t k = 0; k < nk; ++k) {
        try {
          ByteReader reader((*io.in)[b * nk + k], "latent section");
          ByteView body = unframe(reader);
          if (!reader.at_end()) fail(ErrorKind::Corruption, "latent section has bytes after its body");
          sec[k].dec.emplace(body);
        } catch (const Error& e) {
          fail(e.kind(), section_name(b, k) + e.what());
        }
      }
    }

    const auto& m = members[b];
    for (std::size_t start = 0; start < m.size(); start += kBlockRows) {
      const std::size_t n = std::min(kBlockRows, m.size() - start);

      // Inter-Gaussian context: grids built from earlier batches plus the embedding.
      for (std::size_t i = 0; i < n; ++i) {
        const double* p = pos_norm.row(m[start + i]).data();
        double* x = xs.data() + i * mlp_s.in();
        grids.interpolate(p, x);
        positional_embedding(p, w.embed_freqs, x + grid_width);
      }
      mlp_s.forward(xs.data(), n, S.data());

      // Hyperprior.
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < s.z_dim; ++c) hs_in[i * s.z_dim + c] = z(m[start + i], c);
      }
      h_s.forward(hs_in.data(), n, H.data());

      for (std::size_t k = 0; k < nk; ++k) {
        // Intra-Gaussian context from the chunks already coded for these rows.
        if (mlp_c) {
          if (k == 0) {
            for (std::size_t i = 0; i < n; ++i) std::copy(chunk0.begin(), chunk0.end(), C.begin() + i * 3 * cw);
          } else {
            const std::size_t in = mlp_c->in();
            std::vector<double> prefix(k * cw);
            for (std::size_t i = 0; i < n; ++i) {
              const std::size_t r = m[start + i];
              for (std::size_t c = 0; c < k * cw; ++c) prefix[c] = y(r, c) * step[c];
              intra_input(s, prefix, k, xc.data() + i * in);
            }
            mlp_c->forward(xc.data(), n, C.data());
          }
        }

        SectionState& st = sec[k];
        try {
          for (std::size_t i = 0; i < n; ++i) {
            const std::size_t r = m[start + i];
            const double* h = H.data() + i * 3 * dim;
            const double* sp = S.data() + i * 3 * dim;
            const double* cp = mlp_c ? C.data() + i * 3 * cw : nullptr;
            for (std::size_t jj = 0; jj < cw; ++jj) {
              const std::size_t j = k * cw + jj;
              double mu[3] = {h[j], sp[j], 0.0};
              double sigma[3] = {activate_sigma(h[dim + j], w.sigma_min, w.sigma_max),
                                 activate_sigma(sp[dim + j], w.sigma_min, w.sigma_max), 1.0};
              double pi[3] = {h[2 * dim + j], sp[2 * dim + j], 0.0};
              if (cp) {
                mu[2] = cp[jj];
                sigma[2] = activate_sigma(cp[cw + jj], w.sigma_min, w.sigma_max);
                pi[2] = cp[2 * cw + jj];
              }
              const GmmElement e = make_element(s.sources, mu, sigma, pi);
              const std::array<double, 9> key = {mu[0], mu[1], mu[2], sigma[0], sigma[1], sigma[2], pi[0], pi[1], pi[2]};
              if (const GmmTable* t = memo[j].lookup(key, e, step[j])) {
                switch (mode) {
                  case Mode::Encode: gmm_encode(st.enc, *t, y(r, j)); break;
                  case Mode::Decode: y(r, j) = static_cast<std::int16_t>(gmm_decode(*st.dec, *t)); break;
                  case Mode::Estimate: st.bits += gmm_cost_bits(*t, y(r, j)); break;
                }
                continue;
              }
              switch (mode) {
                case Mode::Encode: gmm_encode(st.enc, e, step[j], y(r, j)); break;
                case Mode::Decode: y(r, j) = static_cast<std::int16_t>(gmm_decode(*st.dec, e, step[j])); break;
                case Mode::Estimate: st.bits += gmm_cost_bits(e, step[j], y(r, j)); break;
              }
            }
          }
        } catch (const Error& e) {
          fail(e.kind(), section_name(b, k) + e.what());
        }
      }
    }

    for (std::size_t k = 0; k < nk; ++k) {
      if (mode == Mode::Encode) (*io.out)[b * nk + k] = frame(sec[k].enc.finish());
      if (mode == Mode::Estimate) (*io.bits)[b * nk + k] = sec[k].bits;
    }
    for (auto r : m) include[r] = 1;
  }
}

}  // namespace

std::vector<Bytes> encode_stream_latents(const ModelWeights& w, StreamKind stream, const Matrix& pos_norm,
                                         std::span<const std::uint8_t> batch_of, std::size_t batches,
                                         const SymbolArray& z, const SymbolArray& y) {
  std::vector<Bytes> out;
  DriverIO io;
  io.out = &out;
  run_driver(Mode::Encode, w, stream, pos_norm, batch_of, batches, z, const_cast<SymbolArray&>(y), io);
  return out;
}

SymbolArray decode_stream_latents(const ModelWeights& w, StreamKind stream, const Matrix& pos_norm,
                                  std::span<const std::uint8_t> batch_of, std::size_t batches, const SymbolArray& z,
                                  const std::vector<ByteView>& sections) {
  const StreamSpec& s = w.stream(stream);
  SymbolArray y(z.rows, s.y_dim, w.steps(stream));
  DriverIO io;
  io.in = &sections;
  run_driver(Mode::Decode, w, stream, pos_norm, batch_of, batches, z, y, io);
  return y;
}

std::vector<double> estimate_stream_latents(const ModelWeights& w, StreamKind stream, const Matrix& pos_norm,
                                            std::span<const std::uint8_t> batch_of, std::size_t batches,
                                            const SymbolArray& z, const SymbolArray& y) {
  std::vector<double> bits;
  DriverIO io;
  io.bits = &bits;
  run_driver(Mode::Estimate, w, stream, pos_norm, batch_of, batches, z, const_cast<SymbolArray&>(y), io);
  return bits;
}

// ---- hyper-latents ---------------------------------------------------------

SymbolArray hyper_latents(const ModelWeights& w, StreamKind stream, const SymbolArray& y, std::uint64_t* clamps) {
  const StreamSpec& s = w.stream(stream);
  SymbolArray z(y.rows, s.z_dim, std::vector<double>(s.z_dim, 1.0));
  if (y.rows == 0) return z;
  const Mlp& h_a = w.mlp(s.name + ".h_a");
  std::vector<double> in(kBlockRows * s.y_dim), out(kBlockRows * s.z_dim);
  for (std::size_t start = 0; start < y.rows; start += kBlockRows) {
    const std::size_t n = std::min(kBlockRows, y.rows - start);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < s.y_dim; ++c) in[i * s.y_dim + c] = y(start + i, c) * y.step[c];
    }
    h_a.forward(in.data(), n, out.data());
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < s.z_dim; ++c) {
        double v = std::round(out[i * s.z_dim + c]);
        if (std::isnan(v)) v = 0.0;
        if (v > w.z_bound || v < -w.z_bound) {
          v = v > 0 ? w.z_bound : -w.z_bound;
          if (clamps) ++*clamps;
        }
        z(start + i, c) = static_cast<std::int16_t>(v);
      }
    }
  }
  return z;
}

Bytes encode_hyper(const FactorizedPrior& prior, const SymbolArray& z) {
  RangeEncoder enc;
  for (std::size_t r = 0; r < z.rows; ++r) {
    for (std::size_t c = 0; c < z.cols; ++c) factorized_encode(enc, prior, z(r, c), c);
  }
  return frame(enc.finish());
}

SymbolArray decode_hyper(const FactorizedPrior& prior, ByteView framed, std::size_t rows) {
  ByteReader reader(framed, "hyper-latent section");
  ByteView body = unframe(reader);
  if (!reader.at_end()) fail(ErrorKind::Corruption, "hyper-latent section has bytes after its body");
  RangeDecoder dec(body);
  SymbolArray z(rows, prior.channels, std::vector<double>(prior.channels, 1.0));
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < prior.channels; ++c) z(r, c) = static_cast<std::int16_t>(factorized_decode(dec, prior, c));
  }
  return z;
}

double estimate_hyper_bits(const FactorizedPrior& prior, const SymbolArray& z) {
  double bits = 0;
  for (std::size_t r = 0; r < z.rows; ++r) {
    for (std::size_t c = 0; c < z.cols; ++c) bits += factorized_cost_bits(prior, z(r, c), c);
  }
  return bits;
}

}  // namespace fcgs
