#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "fcgs/bytes.hpp"

namespace fcgs {

inline constexpr int kProbBits = 16;
inline constexpr std::uint32_t kProbTotal = 1u << kProbBits;

// Range coder with a 64-bit low/range pair. Range is kept >= 2^32 and
// renormalised by shifting out 32-bit big-endian words; carries ripple back
// into the bytes already produced. Frequencies are scaled to a power-of-two
// total 2^shift (shift <= 16 for table symbols, any 1..32 for raw bits).
class RangeEncoder {
 public:
  void encode(std::uint32_t cum, std::uint32_t freq, int shift = kProbBits);
  // n raw bits, MSB first (n <= 32).
  void encode_bits(std::uint32_t value, int n);
  // Body without framing; trailing zero bytes are dropped.
  Bytes finish();

 private:
  void carry();
  void shift_out();

  std::uint64_t low_ = 0;
  std::uint64_t range_ = ~std::uint64_t{0};
  Bytes out_;
  bool done_ = false;
};

class RangeDecoder {
 public:
  explicit RangeDecoder(ByteView body);

  // Target value in [0, 2^shift) used to locate the next symbol.
  std::uint32_t peek(int shift = kProbBits) const;
  // Removes the located symbol [cum, cum+freq). Throws Corruption when the
  // state says the stream does not match the supplied distributions.
  void consume(std::uint32_t cum, std::uint32_t freq, int shift = kProbBits);
  std::uint32_t decode_bits(int n);

 private:
  std::uint32_t next_word();
  void shift_in();

  ByteView body_;
  std::size_t pos_ = 0;
  std::uint64_t diff_ = 0;  // code - low
  std::uint64_t range_ = ~std::uint64_t{0};
};

// Section framing: u64 little-endian body length, then the body.
Bytes frame(ByteView body);
// Reads one framed body; Truncation when the declared length overruns.
ByteView unframe(ByteReader& reader);

// Cumulative frequencies over the symbol window [lo, lo + bins).
// cum.front() == 0, cum.back() == 2^16, strictly increasing.
struct QuantizedCdf {
  std::int32_t lo = 0;
  std::vector<std::uint32_t> cum;

  std::size_t bins() const { return cum.size() - 1; }
  std::int32_t hi() const { return lo + static_cast<std::int32_t>(bins()) - 1; }
  std::uint32_t freq(std::size_t bin) const { return cum[bin + 1] - cum[bin]; }
  // Bin whose interval contains target (bisection).
  std::size_t find(std::uint32_t target) const;
};

// Largest-remainder rounding of p to integer frequencies summing to 2^16 with
// every bin >= 1. Ties in the remainder go to the lower bin index.
QuantizedCdf quantize_pmf(std::span<const double> p, std::int32_t lo = 0);

using CdfProvider = std::function<const QuantizedCdf&(std::size_t index)>;

// Framed stream of table-coded symbols.
Bytes encode_symbols(std::span<const std::int32_t> symbols, const CdfProvider& cdf);
std::vector<std::int32_t> decode_symbols(ByteView framed, const CdfProvider& cdf, std::size_t count);

// -log2(freq / 2^16) summed over the symbols.
double ideal_bits(std::span<const std::int32_t> symbols, const CdfProvider& cdf);

// Static Bernoulli mask coder. Layout: u16 p1 (probability of a one in
// units of 2^-16, clamped to [1, 65535]), u16 zero, then a framed body.
Bytes encode_mask_bits(std::span<const std::uint8_t> bits);
std::vector<std::uint8_t> decode_mask_bits(ByteView section, std::size_t count);

}  // namespace fcgs
