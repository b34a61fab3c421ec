#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fcgs/range_coder.hpp"

namespace fcgs {

inline constexpr std::int32_t kSymbolBound = 32767;
inline constexpr std::int32_t kMaxHalfWindow = 2047;
inline constexpr double kWindowSigmas = 16.0;

// Mixture for one element: up to three sources (h, s, c) weighted by a
// softmax over their logits.
struct GmmElement {
  int sources = 0;
  double mu[3] = {};
  double sigma[3] = {};
  double theta[3] = {};
  double inv_scale[3] = {};  // 1 / (sigma * sqrt 2)
};

double activate_sigma(double raw, double sigma_min, double sigma_max);

// theta_l = exp(pi_l) / sum exp(pi); computed with the max subtracted.
void softmax(std::span<const double> logits, std::span<double> theta);

GmmElement make_element(int sources, const double* mu, const double* sigma, const double* pi);

// Mixture CDF at x (in value units, not symbols).
double gmm_cdf(const GmmElement& e, double x);

// Probability mass of the interval [(s - 1/2) q, (s + 1/2) q]. Upper tails
// are evaluated through the survival function so small masses keep their
// relative precision.
double mix_probability(const GmmElement& e, std::int32_t symbol, double q);

// Coding window around the mixture mean. Bin 0 is the low escape, bins
// 1..(hi - lo + 1) are the window symbols and the last bin is the high escape.
struct GmmWindow {
  std::int32_t lo = 0;
  std::int32_t hi = 0;
  std::uint32_t bins = 0;
};

GmmWindow gmm_window(const GmmElement& e, double q);

// Quantized cumulative frequency at bin boundary b in [0, bins]:
// round(F_b * (2^16 - bins)) + b, which floors every bin at 1.
std::uint32_t gmm_boundary(const GmmElement& e, double q, const GmmWindow& w, std::uint32_t b);

void gmm_encode(RangeEncoder& enc, const GmmElement& e, double q, std::int32_t symbol);
std::int32_t gmm_decode(RangeDecoder& dec, const GmmElement& e, double q);
// Exact cost of gmm_encode in bits, escape payload included.
double gmm_cost_bits(const GmmElement& e, double q, std::int32_t symbol);

// Every boundary of one element, for distributions that repeat. Coding with
// a table is bit-identical to coding with the element.
struct GmmTable {
  GmmWindow window;
  std::vector<std::uint32_t> cum;  // bins + 1 entries
};

GmmTable make_gmm_table(const GmmElement& e, double q);
void gmm_encode(RangeEncoder& enc, const GmmTable& t, std::int32_t symbol);
std::int32_t gmm_decode(RangeDecoder& dec, const GmmTable& t);
double gmm_cost_bits(const GmmTable& t, std::int32_t symbol);

// Order-0 Exp-Golomb in raw bits for escape distances.
void write_exp_golomb(RangeEncoder& enc, std::uint32_t value);
std::uint32_t read_exp_golomb(RangeDecoder& dec);
int exp_golomb_length(std::uint32_t value);

// Per-channel static tables for the hyper-latents, symbols in [-bound, bound].
struct FactorizedPrior {
  std::int32_t bound = 255;
  std::size_t channels = 0;
  std::vector<std::uint32_t> cum;  // channels x (2 * bound + 2)

  std::size_t stride() const { return static_cast<std::size_t>(2 * bound + 2); }
  const std::uint32_t* table(std::size_t ch) const { return cum.data() + ch * stride(); }
  // Throws Weights when a table is not a valid cumulative array.
  void validate() const;
};

// Out-of-range symbols are clamped to the boundary bin.
double factorized_probability(const FactorizedPrior& prior, std::int32_t symbol, std::size_t channel);
void factorized_encode(RangeEncoder& enc, const FactorizedPrior& prior, std::int32_t symbol, std::size_t channel);
std::int32_t factorized_decode(RangeDecoder& dec, const FactorizedPrior& prior, std::size_t channel);
double factorized_cost_bits(const FactorizedPrior& prior, std::int32_t symbol, std::size_t channel);

// Sum of -log2 p. Throws InvalidArgument when some p is not in (0, 1].
double estimate_bits(std::span<const double> probabilities);

}  // namespace fcgs
