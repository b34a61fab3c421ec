#include <cmath>
#include <vector>

#include "check.hpp"
#include "fcgs/entropy.hpp"
#include "fcgs/rng.hpp"

using namespace fcgs;

namespace {

GmmElement random_element(Xoshiro256& rng, int sources, double q, double max_sigma_steps) {
  double mu[3], sigma[3], pi[3];
  for (int l = 0; l < sources; ++l) {
    mu[l] = rng.uniform(-50.0, 50.0) * q;
    sigma[l] = std::exp(rng.uniform(std::log(0.05), std::log(max_sigma_steps))) * q;
    pi[l] = rng.uniform(-4.0, 4.0);
  }
  return make_element(sources, mu, sigma, pi);
}

// Mixture mass of [a, b) straight from the normal CDF.
double oracle_mass(const GmmElement& e, double a, double b) {
  double p = 0;
  for (int l = 0; l < e.sources; ++l) {
    auto phi = [&](double x) { return 0.5 * (1.0 + std::erf((x - e.mu[l]) / (e.sigma[l] * std::sqrt(2.0)))); };
    p += e.theta[l] * (phi(b) - phi(a));
  }
  return p;
}

}  // namespace

TEST_CASE("softmax is invariant to shifting the logits") {
  Xoshiro256 rng(1);
  for (int i = 0; i < 1000; ++i) {
    double logits[3], shifted[3], a[3], b[3];
    const double shift = rng.uniform(-50.0, 50.0);
    for (int l = 0; l < 3; ++l) {
      logits[l] = rng.uniform(-10.0, 10.0);
      shifted[l] = logits[l] + shift;
    }
    softmax(logits, a);
    softmax(shifted, b);
    for (int l = 0; l < 3; ++l) CHECK(std::abs(a[l] - b[l]) <= 1e-12);
    CHECK(std::abs(a[0] + a[1] + a[2] - 1.0) <= 1e-15);
  }
}

TEST_CASE("softmax survives huge logits") {
  const double logits[2] = {1000.0, -1000.0};
  double theta[2];
  softmax(logits, theta);
  CHECK(theta[0] == 1.0);
  CHECK(theta[1] == 0.0);
}

TEST_CASE("sigma activation clamps and maps NaN to the floor") {
  CHECK(activate_sigma(0.0, 1e-6, 1e4) == 1.0);
  CHECK(activate_sigma(-100.0, 1e-6, 1e4) == 1e-6);
  CHECK(activate_sigma(100.0, 1e-6, 1e4) == 1e4);
  CHECK(activate_sigma(NAN, 1e-6, 1e4) == 1e-6);
}

TEST_CASE("non-finite means and logits are neutralised") {
  const double mu[2] = {NAN, 1.0}, sigma[2] = {1.0, 1.0}, pi[2] = {INFINITY, 0.0};
  const GmmElement e = make_element(2, mu, sigma, pi);
  CHECK(e.mu[0] == 0.0);
  CHECK(e.theta[0] == doctest::Approx(0.5));
}

TEST_CASE("mixture bin probabilities match the normal CDF") {
  Xoshiro256 rng(2);
  for (int i = 0; i < 300; ++i) {
    const double q = std::ldexp(1.0, -static_cast<int>(rng.below(8)));
    const GmmElement e = random_element(rng, 2 + static_cast<int>(rng.below(2)), q, 40);
    for (int k = 0; k < 10; ++k) {
      const auto s = static_cast<std::int32_t>(rng.below(201)) - 100;
      const double expect = oracle_mass(e, (s - 0.5) * q, (s + 0.5) * q);
      CHECK(std::abs(mix_probability(e, s, q) - expect) <= 1e-12);
    }
  }
}

TEST_CASE("the window covers the mixture and its PMF sums to one") {
  Xoshiro256 rng(3);
  for (int i = 0; i < 1000; ++i) {
    const double q = 1.0 / 64;
    const GmmElement e = random_element(rng, 2 + static_cast<int>(rng.below(2)), q, 100);
    const GmmWindow w = gmm_window(e, q);
    CHECK(w.bins == static_cast<std::uint32_t>(w.hi - w.lo + 3));
    // Window symbols plus the two escape tails.
    double sum = gmm_cdf(e, (w.lo - 0.5) * q) + (1.0 - gmm_cdf(e, (w.hi + 0.5) * q));
    for (std::int32_t s = w.lo; s <= w.hi; ++s) sum += mix_probability(e, s, q);
    CHECK(std::abs(sum - 1.0) <= 1e-6);
  }
}

TEST_CASE("a mixture with a common mean fits inside its window") {
  Xoshiro256 rng(33);
  for (int i = 0; i < 1000; ++i) {
    const double q = 1.0 / 64;
    double mu[3], sigma[3], pi[3];
    const double m = rng.uniform(-100.0, 100.0);
    for (int l = 0; l < 3; ++l) {
      mu[l] = m;
      sigma[l] = std::exp(rng.uniform(std::log(0.05), std::log(100.0))) * q;
      pi[l] = rng.uniform(-4.0, 4.0);
    }
    const GmmElement e = make_element(3, mu, sigma, pi);
    const GmmWindow w = gmm_window(e, q);
    double sum = 0;
    for (std::int32_t s = w.lo; s <= w.hi; ++s) sum += mix_probability(e, s, q);
    CHECK(std::abs(sum - 1.0) <= 1e-6);
  }
}

TEST_CASE("quantized boundaries give every bin at least one count") {
  Xoshiro256 rng(4);
  for (int i = 0; i < 200; ++i) {
    const GmmElement e = random_element(rng, 3, 1.0, 500);
    const GmmWindow w = gmm_window(e, 1.0);
    CHECK(gmm_boundary(e, 1.0, w, 0) == 0);
    CHECK(gmm_boundary(e, 1.0, w, w.bins) == kProbTotal);
    for (std::uint32_t b = 0; b < w.bins; ++b) CHECK(gmm_boundary(e, 1.0, w, b + 1) > gmm_boundary(e, 1.0, w, b));
  }
}

TEST_CASE("mixture coding round-trips, escapes included, and matches its cost") {
  Xoshiro256 rng(5);
  std::vector<GmmElement> elems;
  std::vector<double> steps;
  std::vector<std::int32_t> symbols;
  double cost = 0;
  RangeEncoder enc;
  for (int i = 0; i < 20000; ++i) {
    const double q = i % 2 ? 1.0 : 1.0 / 64;
    const GmmElement e = random_element(rng, 2 + i % 2, q, 8);
    std::int32_t s;
    if (i % 50 == 0) {
      s = static_cast<std::int32_t>(rng.below(2 * kSymbolBound + 1)) - kSymbolBound;  // mostly escapes
    } else {
      s = static_cast<std::int32_t>(std::lround(e.mu[0] / q + rng.uniform(-3, 3)));
    }
    gmm_encode(enc, e, q, s);
    cost += gmm_cost_bits(e, q, s);
    elems.push_back(e);
    steps.push_back(q);
    symbols.push_back(s);
  }
  const Bytes body = enc.finish();
  CHECK(double(body.size()) * 8 <= cost + 32);
  CHECK(double(body.size()) * 8 >= cost - 64);
  RangeDecoder dec(body);
  for (std::size_t i = 0; i < symbols.size(); ++i) CHECK(gmm_decode(dec, elems[i], steps[i]) == symbols[i]);
}

TEST_CASE("coding from a table is bit-identical to coding from the element") {
  Xoshiro256 rng(6);
  const GmmElement e = random_element(rng, 3, 0.5, 20);
  const GmmTable t = make_gmm_table(e, 0.5);
  RangeEncoder a, b;
  std::vector<std::int32_t> symbols;
  for (int i = 0; i < 3000; ++i) {
    const auto s = static_cast<std::int32_t>(rng.below(4001)) - 2000;
    symbols.push_back(s);
    gmm_encode(a, e, 0.5, s);
    gmm_encode(b, t, s);
    CHECK(gmm_cost_bits(e, 0.5, s) == gmm_cost_bits(t, s));
  }
  const Bytes ba = a.finish(), bb = b.finish();
  CHECK(ba == bb);
  RangeDecoder dec(bb);
  for (auto s : symbols) CHECK(gmm_decode(dec, t) == s);
}

TEST_CASE("symbols beyond the bound are refused") {
  RangeEncoder enc;
  const double mu[2] = {0, 0}, sigma[2] = {1, 1}, pi[2] = {0, 0};
  const GmmElement e = make_element(2, mu, sigma, pi);
  CHECK_FAILS_WITH(gmm_encode(enc, e, 1.0, kSymbolBound + 1), ErrorKind::InvalidArgument);
}

TEST_CASE("Exp-Golomb lengths and round trip") {
  RangeEncoder enc;
  const std::vector<std::uint32_t> values = {0, 1, 2, 3, 6, 7, 100, 65534, 65535, 65536, 2 * 32767};
  for (auto v : values) {
    int bits = 0;
    while ((std::uint64_t{v} + 1) >> (bits + 1)) ++bits;
    CHECK(exp_golomb_length(v) == 2 * bits + 1);
    write_exp_golomb(enc, v);
  }
  const Bytes body = enc.finish();
  RangeDecoder dec(body);
  for (auto v : values) CHECK(read_exp_golomb(dec) == v);
}

TEST_CASE("Exp-Golomb codes survive any coder state") {
  Xoshiro256 rng(61);
  for (int trial = 0; trial < 300; ++trial) {
    RangeEncoder enc;
    std::vector<std::uint32_t> values, cums, freqs;
    for (int i = 0; i < 30; ++i) {
      const auto cum = static_cast<std::uint32_t>(rng.below(kProbTotal - 1));
      const auto freq = static_cast<std::uint32_t>(1 + rng.below(kProbTotal - cum));
      const auto v = static_cast<std::uint32_t>(rng.below(70000));
      enc.encode(cum, freq);
      write_exp_golomb(enc, v);
      cums.push_back(cum);
      freqs.push_back(freq);
      values.push_back(v);
    }
    const Bytes body = enc.finish();
    RangeDecoder dec(body);
    for (std::size_t i = 0; i < values.size(); ++i) {
      const std::uint32_t t = dec.peek();
      REQUIRE((t >= cums[i] && t < cums[i] + freqs[i]));
      dec.consume(cums[i], freqs[i]);
      REQUIRE(read_exp_golomb(dec) == values[i]);
    }
  }
}

TEST_CASE("factorized prior codes every symbol in range") {
  FactorizedPrior p;
  p.bound = 3;
  p.channels = 2;
  p.cum = {0, 1, 2, 100, 65000, 65533, 65534, 65536,  //
           0, 9000, 18000, 27000, 36000, 45000, 54000, 65536};
  p.validate();
  RangeEncoder enc;
  double bits = 0;
  std::vector<std::int32_t> symbols;
  for (int i = 0; i < 700; ++i) {
    const std::int32_t s = i % 7 - 3;
    symbols.push_back(s);
    factorized_encode(enc, p, s, i % 2);
    bits += factorized_cost_bits(p, s, i % 2);
  }
  CHECK(factorized_probability(p, 0, 0) == doctest::Approx((65000.0 - 100) / 65536));
  const Bytes body = enc.finish();
  CHECK(double(body.size()) * 8 <= bits + 32);
  RangeDecoder dec(body);
  for (int i = 0; i < 700; ++i) CHECK(factorized_decode(dec, p, i % 2) == symbols[i]);
}

TEST_CASE("invalid factorized tables are weights errors") {
  FactorizedPrior p;
  p.bound = 1;
  p.channels = 1;
  p.cum = {0, 5, 5, 65536};
  CHECK_FAILS_WITH(p.validate(), ErrorKind::Weights);
  p.cum = {0, 5, 6, 65535};
  CHECK_FAILS_WITH(p.validate(), ErrorKind::Weights);
  p.cum = {0, 5, 6};
  CHECK_FAILS_WITH(p.validate(), ErrorKind::Weights);
}

TEST_CASE("estimate_bits sums information content") {
  CHECK(estimate_bits(std::vector<double>{0.5, 0.25, 1.0}) == 3.0);
  CHECK_FAILS_WITH(estimate_bits(std::vector<double>{0.0}), ErrorKind::InvalidArgument);
}
