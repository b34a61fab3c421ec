// Deterministic stand-in weights. Every network is hand-wired so the codec
// behaves like a sensible model on smooth scenes:
//
//   mask    bit = opacity >= 1/128, exactly, for any float input
//   g_a     y = 16 x on the first 48 latent channels, ~0 elsewhere
//   g_s     x = y / 16
//   mlp_s   mean of the 70^3 and 80^3 grid features, with a gate that hands
//           the mixture to the hyperprior when no context is available
//   mlp_c   previous colour chunk as the prediction for the current one
//   h_a/h_s near-zero hyper-latents, broad fixed scales
//
// On top of the wiring, sparse random units keep every layer busy without
// affecting correctness.
#include <cmath>

#include "fcgs/ply.hpp"
#include "fcgs/range_coder.hpp"
#include "fcgs/rng.hpp"
#include "fcgs/weights.hpp"

namespace fcgs {

namespace {

struct Layer {
  std::size_t in = 0;
  std::size_t out = 0;
  Activation act = Activation::Relu;
  std::vector<float> w;
  std::vector<float> b;

  Layer(std::size_t i, std::size_t o, Activation a) : in(i), out(o), act(a), w(i * o, 0.0f), b(o, 0.0f) {}
  void set(std::size_t k, std::size_t j, double v) { w[k * out + j] = static_cast<float>(v); }
};

using Net = std::vector<Layer>;

// Random sparse connections: every column in [c0, c1) reads `reads` rows of [r0, r1).
void sprinkle(Layer& l, Xoshiro256& rng, std::size_t r0, std::size_t r1, std::size_t c0, std::size_t c1,
              std::size_t reads, double scale) {
  if (r1 <= r0) return;
  for (std::size_t j = c0; j < c1; ++j) {
    for (std::size_t n = 0; n < reads; ++n) {
      const std::size_t k = r0 + rng.below(r1 - r0);
      l.set(k, j, rng.uniform(-0.3, 0.3) / std::sqrt(double(reads)) * scale);
    }
  }
}

void put(ModelWeights& w, const std::string& name, const Net& net) {
  std::vector<LayerSpec> specs;
  for (std::size_t l = 0; l < net.size(); ++l) {
    const Layer& L = net[l];
    specs.push_back({L.in, L.out, L.act});
    Tensor wt;
    wt.shape = {L.in, L.out};
    wt.f32 = L.w;
    Tensor bt;
    bt.shape = {L.out};
    bt.f32 = L.b;
    w.tensors[name + "." + std::to_string(l) + ".weight"] = std::move(wt);
    w.tensors[name + "." + std::to_string(l) + ".bias"] = std::move(bt);
  }
  w.nets[name] = specs;
}

// Smallest float bias whose sigmoid lies strictly above `eps`.
float logit_above(double eps) {
  float b = static_cast<float>(std::log(eps / (1.0 - eps)));
  while (!(1.0 / (1.0 + std::exp(-double(b))) > eps)) b = std::nextafter(b, 1e30f);
  return b;
}

Net mask_net(Xoshiro256& rng, std::size_t hidden, double eps) {
  constexpr double t = 1.0 / 128;
  constexpr double gain = 65536;
  Layer l0(kGauDim, hidden, Activation::Relu), l1(hidden, 1, Activation::Identity);
  l0.set(0, 0, 1.0), l0.b[0] = static_cast<float>(-t);
  l0.set(0, 1, -1.0), l0.b[1] = static_cast<float>(t);
  sprinkle(l0, rng, 0, kGauDim, 2, hidden, 4, 1.0);
  l1.set(0, 0, gain);
  l1.set(1, 0, -gain);
  l1.b[0] = logit_above(eps);
  return {l0, l1};
}

// 4-layer pass-through: out_j = gain * in_j for j < active.
Net pass_net(Xoshiro256& rng, std::size_t in, std::size_t out, std::size_t hidden, std::size_t active, double gain,
             double noise) {
  const std::size_t p = 2 * active;
  Net net;
  net.emplace_back(in, hidden, Activation::Relu);
  net.emplace_back(hidden, hidden, Activation::Relu);
  net.emplace_back(hidden, hidden, Activation::Relu);
  net.emplace_back(hidden, out, Activation::Identity);
  for (std::size_t j = 0; j < active; ++j) {
    net[0].set(j, j, 1.0);
    net[0].set(j, active + j, -1.0);
  }
  sprinkle(net[0], rng, 0, active, p, hidden, 4, 1.0);
  for (int l = 1; l <= 2; ++l) {
    for (std::size_t j = 0; j < p; ++j) net[l].set(j, j, 1.0);
    sprinkle(net[l], rng, p, hidden, p, hidden, 4, 1.0);
  }
  for (std::size_t j = 0; j < active; ++j) {
    net[3].set(j, j, gain);
    net[3].set(active + j, j, -gain);
  }
  sprinkle(net[3], rng, p, hidden, 0, out, 2, noise);
  return net;
}

// Generic random 3-layer net with small outputs around fixed biases.
// Only the listed outputs get random connections; the rest are constant.
Net small_net(Xoshiro256& rng, std::size_t in, std::size_t out, std::size_t hidden, double out_scale,
              const std::vector<float>& bias, const std::vector<std::size_t>& outputs) {
  Net net;
  net.emplace_back(in, hidden, Activation::Relu);
  net.emplace_back(hidden, hidden, Activation::Relu);
  net.emplace_back(hidden, out, Activation::Identity);
  sprinkle(net[0], rng, 0, in, 0, hidden, 6, 1.0);
  sprinkle(net[1], rng, 0, hidden, 0, hidden, 6, 1.0);
  for (std::size_t j : outputs) {
    for (int n = 0; n < 3; ++n) net[2].set(rng.below(hidden), j, rng.uniform(-0.3, 0.3) / std::sqrt(3.0) * out_scale);
  }
  net[2].b = bias;
  return net;
}

std::vector<std::size_t> head_columns(std::size_t dim, std::size_t active) {
  std::vector<std::size_t> cols;
  for (std::size_t part = 0; part < 3; ++part) {
    for (std::size_t j = 0; j < active; ++j) cols.push_back(part * dim + j);
  }
  return cols;
}

std::vector<std::size_t> all_columns(std::size_t n) {
  std::vector<std::size_t> cols(n);
  for (std::size_t j = 0; j < n; ++j) cols[j] = j;
  return cols;
}

struct Scales {
  std::size_t active;      // latent channels carrying data
  double sigma_h;          // hyperprior scale on active channels
  double sigma_s;          // spatial-context scale on active channels
  double sigma_idle;       // every source on idle channels
};

std::vector<float> head_bias(std::size_t dim, std::size_t active, double mu, double sigma_active,
                             double sigma_idle, double pi) {
  std::vector<float> b(3 * dim);
  for (std::size_t j = 0; j < dim; ++j) {
    b[j] = static_cast<float>(mu);
    b[dim + j] = static_cast<float>(std::log(j < active ? sigma_active : sigma_idle));
    b[2 * dim + j] = static_cast<float>(pi);
  }
  return b;
}

Net spatial_net(Xoshiro256& rng, const ModelWeights& w, const StreamSpec& s, std::size_t hidden, const Scales& sc) {
  const std::size_t dim = s.y_dim;
  const std::size_t a = sc.active;
  const std::size_t p = 2 * a;
  const std::size_t gate = p;
  const std::size_t in = 12 * dim + 6 * w.embed_freqs;
  const std::size_t embed = 12 * dim;
  constexpr double kGate = 64;
  Net net;
  net.emplace_back(in, hidden, Activation::Relu);
  net.emplace_back(hidden, hidden, Activation::Relu);
  net.emplace_back(hidden, 3 * dim, Activation::Identity);

  // Mean of the first two 3D grids, split into its positive and negative part.
  for (std::size_t c = 0; c < a; ++c) {
    for (std::size_t g = 0; g < 2; ++g) {
      net[0].set(g * dim + c, 2 * c, 0.5);
      net[0].set(g * dim + c, 2 * c + 1, -0.5);
    }
  }
  for (std::size_t j = p; j < hidden; ++j) {
    for (int n = 0; n < 6; ++n) {
      const bool from_grid = rng.below(2) == 0;
      const std::size_t k = from_grid ? rng.below(2) * dim + rng.below(a) : embed + rng.below(6 * w.embed_freqs);
      net[0].set(k, j, rng.uniform(-0.3, 0.3) / std::sqrt(6.0));
    }
  }

  for (std::size_t j = 0; j < p; ++j) {
    net[1].set(j, j, 1.0);
    net[1].set(j, gate, -kGate);
  }
  net[1].b[gate] = 1.0f;
  sprinkle(net[1], rng, p, hidden, gate + 1, hidden, 4, 1.0);

  net[2].b = head_bias(dim, a, 0.0, sc.sigma_s, sc.sigma_idle, 0.0);
  for (std::size_t c = 0; c < a; ++c) {
    net[2].set(2 * c, c, 1.0);
    net[2].set(2 * c + 1, c, -1.0);
    net[2].set(gate, 2 * dim + c, -6.0);
    net[2].b[2 * dim + c] = 4.0f;
  }
  for (std::size_t j : head_columns(dim, a)) net[2].set(gate + 1 + rng.below(hidden - gate - 1), j, rng.uniform(-0.003, 0.003));
  return net;
}

// Colour chunk k > 0 is predicted by chunk k - 1: mu_j = prefix[(k - 1) * c + j].
Net intra_net(Xoshiro256& rng, const StreamSpec& s, std::size_t hidden, bool predictive, double sigma, double pi) {
  const std::size_t c = s.chunk_width();
  const std::size_t nk = s.n_chunks;
  const std::size_t width = (nk - 1) * c;
  const std::size_t in = width + nk;
  constexpr double kBig = 1024;
  Net net;
  net.emplace_back(in, hidden, Activation::Relu);
  net.emplace_back(hidden, 3 * c, Activation::Identity);
  std::size_t used = 0;
  if (predictive) {
    for (std::size_t k = 1; k < nk; ++k) {
      for (std::size_t j = 0; j < c; ++j) {
        const std::size_t src = (k - 1) * c + j;
        for (int sign = 0; sign < 2; ++sign) {
          const std::size_t u = used++;
          net[0].set(src, u, sign ? -1.0 : 1.0);
          net[0].set(width + k, u, kBig);
          net[0].b[u] = static_cast<float>(-kBig);
          net[1].set(u, j, sign ? -1.0 : 1.0);
        }
      }
    }
  }
  sprinkle(net[0], rng, 0, in, used, hidden, 4, 1.0);
  net[1].b = head_bias(c, c, 0.0, sigma, sigma, pi);
  if (predictive) sprinkle(net[1], rng, used, hidden, 0, 3 * c, 1, 0.01);
  return net;
}

Tensor zprior_tensor(std::size_t channels, std::int32_t bound, double decay) {
  std::vector<double> pmf(2 * bound + 1);
  for (std::int32_t v = -bound; v <= bound; ++v) pmf[v + bound] = std::exp(-std::abs(v) / decay);
  const QuantizedCdf cdf = quantize_pmf(pmf, -bound);
  Tensor t;
  t.dtype = Tensor::DType::U32;
  t.shape = {channels, static_cast<std::uint64_t>(2 * bound + 2)};
  for (std::size_t c = 0; c < channels; ++c) t.u32.insert(t.u32.end(), cdf.cum.begin(), cdf.cum.end());
  return t;
}

Tensor chunk0_tensor(std::size_t c, std::size_t active, double sigma_active, double sigma_idle) {
  Tensor t;
  t.shape = {3 * c};
  t.f32 = head_bias(c, active, 0.0, sigma_active, sigma_idle, -4.0);
  return t;
}

}  // namespace

ModelWeights gen_test_weights(std::uint64_t seed, const TestWeightsOptions& options) {
  ModelWeights w;
  Xoshiro256 rng(seed);
  const bool compact = options.compact;
  constexpr double q = 1.0 / 64;

  w.q_geo.assign(kGeoDim, q);
  w.q_col0.assign(kColDim, q);
  w.q_latent = 1.0;

  put(w, "mask", mask_net(rng, compact ? 16 : 64, w.eps_m));

  const StreamSpec& geo = w.stream(StreamKind::Geo);
  const StreamSpec& col0 = w.stream(StreamKind::Col0);
  const StreamSpec& col1 = w.stream(StreamKind::Col1);

  const std::size_t h_width = compact ? 16 : 64;
  const std::array<Scales, 3> scales = {Scales{geo.y_dim, 2.0, q, q}, Scales{col0.y_dim, 1.0, q, q},
                                        Scales{kColDim, 16.0, 0.6, 0.15}};
  const std::array<std::size_t, 3> s_width = {compact ? 24u : 128u, compact ? 104u : 128u, compact ? 104u : 256u};

  for (auto kind : kStreams) {
    const StreamSpec& s = w.stream(kind);
    const Scales& sc = scales[static_cast<int>(kind)];
    if (s.uses_transform) {
      const std::size_t width = compact ? 104 : 256;
      put(w, s.name + ".g_a", pass_net(rng, s.x_dim, s.y_dim, width, sc.active, 16.0, 1e-3));
      put(w, s.name + ".g_s", pass_net(rng, s.y_dim, s.x_dim, width, sc.active, 1.0 / 16, 1e-4));
    }
    put(w, s.name + ".h_a", small_net(rng, s.y_dim, s.z_dim, h_width, 0.05, std::vector<float>(s.z_dim, 0.0f),
                                      all_columns(s.z_dim)));
    put(w, s.name + ".h_s",
        small_net(rng, s.z_dim, 3 * s.y_dim, h_width, 0.01, head_bias(s.y_dim, sc.active, 0.0, sc.sigma_h, sc.sigma_idle, 0.0),
                   head_columns(s.y_dim, sc.active)));
    put(w, s.name + ".mlp_s", spatial_net(rng, w, s, s_width[static_cast<int>(kind)], sc));
    w.tensors[s.name + ".zprior"] = zprior_tensor(s.z_dim, w.z_bound, 0.15);
  }

  put(w, "col0.mlp_c", intra_net(rng, col0, compact ? 72 : 128, true, 3 * q, -1.0));
  put(w, "col1.mlp_c", intra_net(rng, col1, compact ? 16 : 64, false, 0.15, 0.0));
  w.tensors["col0.chunk0"] = chunk0_tensor(col0.chunk_width(), col0.chunk_width(), 1.0, 1.0);
  w.tensors["col1.chunk0"] = chunk0_tensor(col1.chunk_width(), kColDim, 16.0, 0.15);

  finalize_weights(w);
  return w;
}

}  // namespace fcgs
