#include "fcgs/range_coder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fcgs {

namespace {

constexpr std::uint64_t kRenorm = std::uint64_t{1} << 32;
using u128 = unsigned __int128;

}  // namespace

// ---- encoder ---------------------------------------------------------------

void RangeEncoder::carry() {
  for (std::size_t i = out_.size(); i-- > 0;) {
    if (++out_[i] != 0) return;
  }
  fail(ErrorKind::Internal, "range coder carry ran past the start of the stream");
}

void RangeEncoder::shift_out() {
  const auto word = static_cast<std::uint32_t>(low_ >> 32);
  out_.push_back(static_cast<std::uint8_t>(word >> 24));
  out_.push_back(static_cast<std::uint8_t>(word >> 16));
  out_.push_back(static_cast<std::uint8_t>(word >> 8));
  out_.push_back(static_cast<std::uint8_t>(word));
  low_ <<= 32;
  range_ <<= 32;
}

void RangeEncoder::encode(std::uint32_t cum, std::uint32_t freq, int shift) {
  const std::uint64_t total = std::uint64_t{1} << shift;
  if (freq == 0 || cum + std::uint64_t{freq} > total) {
    fail(ErrorKind::Internal, "range coder given an empty or out-of-range interval");
  }
  const std::uint64_t r = range_ >> shift;
  const std::uint64_t add = r * cum;
  low_ += add;
  if (low_ < add) carry();
  // The top symbol absorbs the truncation slack.
  range_ = (cum + std::uint64_t{freq} == total) ? range_ - add : r * freq;
  while (range_ < kRenorm) shift_out();
}

void RangeEncoder::encode_bits(std::uint32_t value, int n) {
  while (n > 0) {
    const int take = std::min(n, kProbBits);
    n -= take;
    encode((value >> n) & ((1u << take) - 1), 1, take);
  }
}

Bytes RangeEncoder::finish() {
  if (done_) fail(ErrorKind::Internal, "range encoder finished twice");
  done_ = true;
  // Any value in [low, low + range) identifies the stream; take the one with
  // the most trailing zero bits so the stripped tail is as long as possible.
  const u128 lo = low_;
  const u128 hi = lo + range_ - 1;
  u128 v = lo;
  for (int k = 64; k >= 0; --k) {
    const u128 step = u128{1} << k;
    const u128 cand = (lo + step - 1) >> k << k;
    if (cand <= hi) {
      v = cand;
      break;
    }
  }
  if (v >> 64) carry();
  const auto tail = static_cast<std::uint64_t>(v);
  for (int b = 7; b >= 0; --b) out_.push_back(static_cast<std::uint8_t>(tail >> (8 * b)));
  while (!out_.empty() && out_.back() == 0) out_.pop_back();
  return std::move(out_);
}

// ---- decoder ---------------------------------------------------------------

RangeDecoder::RangeDecoder(ByteView body) : body_(body) {
  diff_ = (std::uint64_t{next_word()} << 32) | next_word();
  if (diff_ >= range_) fail(ErrorKind::Corruption, "range coder stream has an invalid start");
}

std::uint32_t RangeDecoder::next_word() {
  std::uint32_t w = 0;
  for (int i = 0; i < 4; ++i, ++pos_) {
    w = (w << 8) | (pos_ < body_.size() ? body_[pos_] : 0u);
  }
  return w;
}

void RangeDecoder::shift_in() {
  diff_ = (diff_ << 32) | next_word();
  range_ <<= 32;
}

std::uint32_t RangeDecoder::peek(int shift) const {
  const std::uint64_t total = std::uint64_t{1} << shift;
  const std::uint64_t v = diff_ / (range_ >> shift);
  return static_cast<std::uint32_t>(std::min(v, total - 1));
}

void RangeDecoder::consume(std::uint32_t cum, std::uint32_t freq, int shift) {
  const std::uint64_t total = std::uint64_t{1} << shift;
  const std::uint64_t r = range_ >> shift;
  const std::uint64_t sub = r * cum;
  if (freq == 0 || cum + std::uint64_t{freq} > total || diff_ < sub) {
    fail(ErrorKind::Corruption, "range decoder desynchronised from its distributions");
  }
  diff_ -= sub;
  range_ = (cum + std::uint64_t{freq} == total) ? range_ - sub : r * freq;
  if (diff_ >= range_) fail(ErrorKind::Corruption, "range decoder state out of bounds");
  while (range_ < kRenorm) shift_in();
}

std::uint32_t RangeDecoder::decode_bits(int n) {
  std::uint32_t value = 0;
  while (n > 0) {
    const int take = std::min(n, kProbBits);
    n -= take;
    const std::uint32_t part = peek(take);
    consume(part, 1, take);
    value = (value << take) | part;
  }
  return value;
}

// ---- framing ---------------------------------------------------------------

Bytes frame(ByteView body) {
  Bytes out;
  out.reserve(8 + body.size());
  ByteWriter w(out);
  w.u64(body.size());
  w.bytes(body);
  return out;
}

ByteView unframe(ByteReader& reader) {
  const std::uint64_t n = reader.u64();
  return reader.bytes(static_cast<std::size_t>(n));
}

// ---- tables ----------------------------------------------------------------

std::size_t QuantizedCdf::find(std::uint32_t target) const {
  // Largest bin with cum[bin] <= target.
  auto it = std::upper_bound(cum.begin(), cum.end(), target);
  return static_cast<std::size_t>(it - cum.begin()) - 1;
}

QuantizedCdf quantize_pmf(std::span<const double> p, std::int32_t lo) {
  const std::size_t k = p.size();
  if (k == 0) fail(ErrorKind::InvalidArgument, "quantize_pmf: empty window");
  if (k > kProbTotal) fail(ErrorKind::InvalidArgument, "quantize_pmf: window longer than 2^16 bins");
  double sum = 0.0;
  for (double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v)) fail(ErrorKind::InvalidArgument, "quantize_pmf: invalid probability");
    sum += v;
  }

  std::vector<double> target(k);
  std::vector<std::int64_t> freq(k);
  std::int64_t used = 0;
  for (std::size_t i = 0; i < k; ++i) {
    target[i] = sum > 0.0 ? p[i] / sum * kProbTotal : double(kProbTotal) / double(k);
    freq[i] = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::floor(target[i])));
    used += freq[i];
  }

  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::int64_t left = std::int64_t{kProbTotal} - used;
  if (left > 0) {
    // Hand out the shortfall by largest remainder.
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return target[a] - double(freq[a]) > target[b] - double(freq[b]);
    });
    for (std::size_t j = 0; left > 0; j = (j + 1) % k, --left) ++freq[order[j]];
  } else if (left < 0) {
    // Floors overshot: take back from the bins that gained the most.
    while (left < 0) {
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return double(freq[a]) - target[a] > double(freq[b]) - target[b];
      });
      for (std::size_t j = 0; j < k && left < 0; ++j) {
        if (freq[order[j]] > 1) {
          --freq[order[j]];
          ++left;
        }
      }
    }
  }

  QuantizedCdf cdf;
  cdf.lo = lo;
  cdf.cum.resize(k + 1);
  cdf.cum[0] = 0;
  for (std::size_t i = 0; i < k; ++i) cdf.cum[i + 1] = cdf.cum[i] + static_cast<std::uint32_t>(freq[i]);
  return cdf;
}

Bytes encode_symbols(std::span<const std::int32_t> symbols, const CdfProvider& cdf) {
  RangeEncoder enc;
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    const QuantizedCdf& c = cdf(i);
    const std::int32_t s = symbols[i];
    if (s < c.lo || s > c.hi()) {
      fail(ErrorKind::InvalidArgument, "symbol " + std::to_string(s) + " at index " + std::to_string(i) +
                                           " lies outside its window [" + std::to_string(c.lo) + ", " +
                                           std::to_string(c.hi()) + "]");
    }
    const auto bin = static_cast<std::size_t>(s - c.lo);
    enc.encode(c.cum[bin], c.freq(bin));
  }
  return frame(enc.finish());
}

std::vector<std::int32_t> decode_symbols(ByteView framed, const CdfProvider& cdf, std::size_t count) {
  ByteReader reader(framed, "symbol stream");
  ByteView body = unframe(reader);
  if (!reader.at_end()) fail(ErrorKind::Corruption, "symbol stream has bytes after its body");
  RangeDecoder dec(body);
  std::vector<std::int32_t> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    const QuantizedCdf& c = cdf(i);
    const std::size_t bin = c.find(dec.peek());
    dec.consume(c.cum[bin], c.freq(bin));
    out[i] = c.lo + static_cast<std::int32_t>(bin);
  }
  return out;
}

double ideal_bits(std::span<const std::int32_t> symbols, const CdfProvider& cdf) {
  double bits = 0.0;
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    const QuantizedCdf& c = cdf(i);
    bits -= std::log2(double(c.freq(static_cast<std::size_t>(symbols[i] - c.lo))) / kProbTotal);
  }
  return bits;
}

// ---- masks -----------------------------------------------------------------

Bytes encode_mask_bits(std::span<const std::uint8_t> bits) {
  std::size_t ones = 0;
  for (auto b : bits) ones += b ? 1 : 0;
  std::uint32_t p1 = kProbTotal / 2;
  if (!bits.empty()) {
    const double f = double(ones) / double(bits.size());
    p1 = static_cast<std::uint32_t>(std::clamp(std::lround(f * kProbTotal), 1L, long(kProbTotal - 1)));
  }
  RangeEncoder enc;
  for (auto b : bits) {
    if (b) {
      enc.encode(kProbTotal - p1, p1);
    } else {
      enc.encode(0, kProbTotal - p1);
    }
  }
  Bytes out;
  ByteWriter w(out);
  w.u16(static_cast<std::uint16_t>(p1));
  w.u16(0);
  w.bytes(frame(enc.finish()));
  return out;
}

std::vector<std::uint8_t> decode_mask_bits(ByteView section, std::size_t count) {
  ByteReader reader(section, "mask section");
  const std::uint32_t p1 = reader.u16();
  if (p1 == 0) fail(ErrorKind::Corruption, "mask section has a zero probability");
  if (reader.u16() != 0) fail(ErrorKind::Corruption, "mask section has a non-zero reserved field");
  ByteView body = unframe(reader);
  if (!reader.at_end()) fail(ErrorKind::Corruption, "mask section has bytes after its body");
  RangeDecoder dec(body);
  std::vector<std::uint8_t> bits(count);
  const std::uint32_t split = kProbTotal - p1;
  for (std::size_t i = 0; i < count; ++i) {
    if (dec.peek() >= split) {
      dec.consume(split, p1);
      bits[i] = 1;
    } else {
      dec.consume(0, split);
      bits[i] = 0;
    }
  }
  return bits;
}

}  // namespace fcgs
