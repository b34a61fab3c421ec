#include "fcgs/entropy.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

namespace fcgs {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;

std::uint32_t escape_distance_limit() { return static_cast<std::uint32_t>(2 * kSymbolBound); }

}  // namespace

double activate_sigma(double raw, double sigma_min, double sigma_max) {
  const double s = std::exp(raw);
  if (std::isnan(s)) return sigma_min;
  return std::clamp(s, sigma_min, sigma_max);
}

void softmax(std::span<const double> logits, std::span<double> theta) {
  double top = logits[0];
  for (double v : logits) top = std::max(top, v);
  double sum = 0.0;
  for (std::size_t l = 0; l < logits.size(); ++l) {
    theta[l] = std::exp(logits[l] - top);
    sum += theta[l];
  }
  for (std::size_t l = 0; l < logits.size(); ++l) theta[l] /= sum;
}

GmmElement make_element(int sources, const double* mu, const double* sigma, const double* pi) {
  GmmElement e;
  e.sources = sources;
  for (int l = 0; l < sources; ++l) {
    e.mu[l] = std::isfinite(mu[l]) ? mu[l] : 0.0;
    e.sigma[l] = sigma[l];
    e.inv_scale[l] = kInvSqrt2 / sigma[l];
  }
  double logits[3];
  for (int l = 0; l < sources; ++l) logits[l] = std::isfinite(pi[l]) ? pi[l] : 0.0;
  softmax({logits, static_cast<std::size_t>(sources)}, {e.theta, static_cast<std::size_t>(sources)});
  return e;
}

double gmm_cdf(const GmmElement& e, double x) {
  double f = 0.0;
  for (int l = 0; l < e.sources; ++l) f += e.theta[l] * 0.5 * std::erfc((e.mu[l] - x) * e.inv_scale[l]);
  return std::clamp(f, 0.0, 1.0);
}

double mix_probability(const GmmElement& e, std::int32_t symbol, double q) {
  const double a = (symbol - 0.5) * q;
  const double b = (symbol + 0.5) * q;
  double p = 0.0;
  for (int l = 0; l < e.sources; ++l) {
    const double mu = e.mu[l];
    const double k = e.inv_scale[l];
    double mass;
    if (a > mu) {
      mass = 0.5 * (std::erfc((a - mu) * k) - std::erfc((b - mu) * k));
    } else {
      mass = 0.5 * (std::erfc((mu - b) * k) - std::erfc((mu - a) * k));
    }
    p += e.theta[l] * mass;
  }
  return p;
}

GmmWindow gmm_window(const GmmElement& e, double q) {
  double mean = 0.0;
  double spread = 0.0;
  for (int l = 0; l < e.sources; ++l) {
    mean += e.theta[l] * e.mu[l];
    spread = std::max(spread, e.sigma[l]);
  }
  double c = mean / q;
  if (std::isnan(c)) c = 0.0;
  const auto center = static_cast<std::int32_t>(std::llround(std::clamp(c, double(-kSymbolBound), double(kSymbolBound))));
  double hw = std::ceil(kWindowSigmas * spread / q);
  if (!(hw >= 1.0)) hw = 1.0;
  const auto half = static_cast<std::int32_t>(std::min(hw, double(kMaxHalfWindow)));
  GmmWindow w;
  w.lo = std::max(center - half, -kSymbolBound);
  w.hi = std::min(center + half, kSymbolBound);
  w.bins = static_cast<std::uint32_t>(w.hi - w.lo + 3);
  return w;
}

std::uint32_t gmm_boundary(const GmmElement& e, double q, const GmmWindow& w, std::uint32_t b) {
  if (b == 0) return 0;
  if (b >= w.bins) return kProbTotal;
  const double x = (double(w.lo + static_cast<std::int32_t>(b) - 1) - 0.5) * q;
  const double f = gmm_cdf(e, x);
  return static_cast<std::uint32_t>(std::llround(f * double(kProbTotal - w.bins))) + b;
}

namespace {

std::uint32_t bin_of(const GmmWindow& w, std::int32_t symbol) {
  if (symbol < w.lo) return 0;
  if (symbol > w.hi) return w.bins - 1;
  return static_cast<std::uint32_t>(symbol - w.lo + 1);
}

void check_symbol(std::int32_t symbol) {
  if (symbol < -kSymbolBound || symbol > kSymbolBound) {
    fail(ErrorKind::InvalidArgument, "symbol " + std::to_string(symbol) + " exceeds the symbol bound");
  }
}

// The coding routines below take the boundary function `cq(b)` so the same
// code serves direct evaluation and precomputed tables.

template <typename Cq>
void encode_with(RangeEncoder& enc, const GmmWindow& w, Cq&& cq, std::int32_t symbol) {
  check_symbol(symbol);
  const std::uint32_t b = bin_of(w, symbol);
  const std::uint32_t lo = cq(b);
  const std::uint32_t hi = cq(b + 1);
  if (hi <= lo) fail(ErrorKind::Internal, "mixture CDF is not monotone");
  enc.encode(lo, hi - lo);
  if (b == 0) write_exp_golomb(enc, static_cast<std::uint32_t>(w.lo - 1 - symbol));
  if (b == w.bins - 1) write_exp_golomb(enc, static_cast<std::uint32_t>(symbol - w.hi - 1));
}

template <typename Cq>
std::int32_t decode_with(RangeDecoder& dec, const GmmWindow& w, Cq&& cq) {
  const std::uint32_t t = dec.peek();

  // Gallop outwards from the middle bin, then bisect.
  const std::uint32_t start = w.bins / 2;
  std::uint32_t lo_b = 0, hi_b = w.bins;
  std::uint32_t lo_v = 0, hi_v = kProbTotal;
  const std::uint32_t sv = cq(start);
  if (sv <= t) {
    lo_b = start;
    lo_v = sv;
    for (std::uint32_t step = 1;; step *= 2) {
      const std::uint32_t nb = start + step;
      if (nb >= w.bins) break;
      const std::uint32_t v = cq(nb);
      if (v > t) {
        hi_b = nb;
        hi_v = v;
        break;
      }
      lo_b = nb;
      lo_v = v;
    }
  } else {
    hi_b = start;
    hi_v = sv;
    for (std::uint32_t step = 1;; step *= 2) {
      if (step >= start) break;
      const std::uint32_t nb = start - step;
      const std::uint32_t v = cq(nb);
      if (v <= t) {
        lo_b = nb;
        lo_v = v;
        break;
      }
      hi_b = nb;
      hi_v = v;
    }
  }
  while (hi_b - lo_b > 1) {
    const std::uint32_t mid = lo_b + (hi_b - lo_b) / 2;
    const std::uint32_t v = cq(mid);
    if (v <= t) {
      lo_b = mid;
      lo_v = v;
    } else {
      hi_b = mid;
      hi_v = v;
    }
  }
  if (hi_v <= lo_v) fail(ErrorKind::Corruption, "mixture CDF search failed");
  dec.consume(lo_v, hi_v - lo_v);

  if (lo_b == 0) {
    const std::uint32_t d = read_exp_golomb(dec);
    const std::int64_t s = std::int64_t{w.lo} - 1 - d;
    if (d > escape_distance_limit() || s < -kSymbolBound) fail(ErrorKind::Corruption, "escape symbol below the bound");
    return static_cast<std::int32_t>(s);
  }
  if (lo_b == w.bins - 1) {
    const std::uint32_t d = read_exp_golomb(dec);
    const std::int64_t s = std::int64_t{w.hi} + 1 + d;
    if (d > escape_distance_limit() || s > kSymbolBound) fail(ErrorKind::Corruption, "escape symbol above the bound");
    return static_cast<std::int32_t>(s);
  }
  return w.lo + static_cast<std::int32_t>(lo_b) - 1;
}

template <typename Cq>
double cost_with(const GmmWindow& w, Cq&& cq, std::int32_t symbol) {
  check_symbol(symbol);
  const std::uint32_t b = bin_of(w, symbol);
  const std::uint32_t lo = cq(b);
  const std::uint32_t hi = cq(b + 1);
  if (hi <= lo) fail(ErrorKind::Internal, "mixture CDF is not monotone");
  double bits = -std::log2(double(hi - lo) / kProbTotal);
  if (b == 0) bits += exp_golomb_length(static_cast<std::uint32_t>(w.lo - 1 - symbol));
  if (b == w.bins - 1) bits += exp_golomb_length(static_cast<std::uint32_t>(symbol - w.hi - 1));
  return bits;
}

}  // namespace

void gmm_encode(RangeEncoder& enc, const GmmElement& e, double q, std::int32_t symbol) {
  const GmmWindow w = gmm_window(e, q);
  encode_with(enc, w, [&](std::uint32_t b) { return gmm_boundary(e, q, w, b); }, symbol);
}

std::int32_t gmm_decode(RangeDecoder& dec, const GmmElement& e, double q) {
  const GmmWindow w = gmm_window(e, q);
  return decode_with(dec, w, [&](std::uint32_t b) { return gmm_boundary(e, q, w, b); });
}

double gmm_cost_bits(const GmmElement& e, double q, std::int32_t symbol) {
  const GmmWindow w = gmm_window(e, q);
  return cost_with(w, [&](std::uint32_t b) { return gmm_boundary(e, q, w, b); }, symbol);
}

GmmTable make_gmm_table(const GmmElement& e, double q) {
  GmmTable t;
  t.window = gmm_window(e, q);
  t.cum.resize(t.window.bins + 1);
  for (std::uint32_t b = 0; b <= t.window.bins; ++b) t.cum[b] = gmm_boundary(e, q, t.window, b);
  return t;
}

void gmm_encode(RangeEncoder& enc, const GmmTable& t, std::int32_t symbol) {
  encode_with(enc, t.window, [&](std::uint32_t b) { return t.cum[b]; }, symbol);
}

std::int32_t gmm_decode(RangeDecoder& dec, const GmmTable& t) {
  return decode_with(dec, t.window, [&](std::uint32_t b) { return t.cum[b]; });
}

double gmm_cost_bits(const GmmTable& t, std::int32_t symbol) {
  return cost_with(t.window, [&](std::uint32_t b) { return t.cum[b]; }, symbol);
}

int exp_golomb_length(std::uint32_t value) {
  const int n = std::bit_width(std::uint64_t{value} + 1);
  return 2 * n - 1;
}

void write_exp_golomb(RangeEncoder& enc, std::uint32_t value) {
  const std::uint64_t v = std::uint64_t{value} + 1;
  const int n = std::bit_width(v);
  if (n > 32) fail(ErrorKind::Internal, "Exp-Golomb value too large");
  // One symbol per prefix bit: the reader consumes them singly and a
  // multi-bit symbol subdivides the range differently.
  for (int i = 0; i + 1 < n; ++i) enc.encode_bits(0, 1);
  enc.encode_bits(1, 1);
  enc.encode_bits(static_cast<std::uint32_t>(v), n - 1);
}

std::uint32_t read_exp_golomb(RangeDecoder& dec) {
  int zeros = 0;
  while (dec.decode_bits(1) == 0) {
    if (++zeros > 31) fail(ErrorKind::Corruption, "Exp-Golomb prefix too long");
  }
  const std::uint64_t rest = zeros ? dec.decode_bits(zeros) : 0;
  const std::uint64_t v = (std::uint64_t{1} << zeros) | rest;
  return static_cast<std::uint32_t>(v - 1);
}

// ---- factorized prior ------------------------------------------------------

void FactorizedPrior::validate() const {
  if (bound < 1) fail(ErrorKind::Weights, "factorized prior bound must be positive");
  if (cum.size() != channels * stride()) fail(ErrorKind::Weights, "factorized prior table has the wrong size");
  for (std::size_t ch = 0; ch < channels; ++ch) {
    const std::uint32_t* t = table(ch);
    if (t[0] != 0 || t[stride() - 1] != kProbTotal) {
      fail(ErrorKind::Weights, "factorized prior channel " + std::to_string(ch) + " does not span [0, 2^16]");
    }
    for (std::size_t i = 1; i < stride(); ++i) {
      if (t[i] <= t[i - 1]) {
        fail(ErrorKind::Weights, "factorized prior channel " + std::to_string(ch) + " is not strictly increasing");
      }
    }
  }
}

namespace {

std::size_t prior_bin(const FactorizedPrior& prior, std::int32_t symbol) {
  return static_cast<std::size_t>(std::clamp(symbol, -prior.bound, prior.bound) + prior.bound);
}

}  // namespace

double factorized_probability(const FactorizedPrior& prior, std::int32_t symbol, std::size_t channel) {
  const std::uint32_t* t = prior.table(channel);
  const std::size_t b = prior_bin(prior, symbol);
  return double(t[b + 1] - t[b]) / kProbTotal;
}

void factorized_encode(RangeEncoder& enc, const FactorizedPrior& prior, std::int32_t symbol, std::size_t channel) {
  if (symbol < -prior.bound || symbol > prior.bound) {
    fail(ErrorKind::Internal, "hyper-latent symbol outside the prior range");
  }
  const std::uint32_t* t = prior.table(channel);
  const std::size_t b = prior_bin(prior, symbol);
  enc.encode(t[b], t[b + 1] - t[b]);
}

std::int32_t factorized_decode(RangeDecoder& dec, const FactorizedPrior& prior, std::size_t channel) {
  const std::uint32_t* t = prior.table(channel);
  const std::uint32_t target = dec.peek();
  const std::uint32_t* it = std::upper_bound(t, t + prior.stride(), target);
  const auto b = static_cast<std::size_t>(it - t) - 1;
  dec.consume(t[b], t[b + 1] - t[b]);
  return static_cast<std::int32_t>(b) - prior.bound;
}

double factorized_cost_bits(const FactorizedPrior& prior, std::int32_t symbol, std::size_t channel) {
  return -std::log2(factorized_probability(prior, symbol, channel));
}

double estimate_bits(std::span<const double> probabilities) {
  double bits = 0.0;
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    const double p = probabilities[i];
    if (!(p > 0.0) || p > 1.0) {
      fail(ErrorKind::InvalidArgument, "probability at index " + std::to_string(i) + " is not in (0, 1]");
    }
    bits -= std::log2(p);
  }
  return bits;
}

}  // namespace fcgs
