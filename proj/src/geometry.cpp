#include "fcgs/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fcgs/range_coder.hpp"

namespace fcgs {

namespace {

constexpr std::uint8_t kModeOctree = 0;
constexpr std::uint8_t kModeRaw = 1;
constexpr std::uint8_t kFlagDuplicates = 1;

std::uint64_t spread3(std::uint64_t v) {
  v &= 0xFFFF;
  v = (v | (v << 16)) & 0x0000FF0000FFULL;
  v = (v | (v << 8)) & 0x00F00F00F00F00FULL;
  v = (v | (v << 4)) & 0x0C30C30C30C30C3ULL;
  v = (v | (v << 2)) & 0x249249249249249ULL;
  return v;
}

std::uint16_t compact3(std::uint64_t v) {
  v &= 0x249249249249249ULL;
  v = (v | (v >> 2)) & 0x0C30C30C30C30C3ULL;
  v = (v | (v >> 4)) & 0x00F00F00F00F00FULL;
  v = (v | (v >> 8)) & 0x0000FF0000FFULL;
  v = (v | (v >> 16)) & 0xFFFF;
  return static_cast<std::uint16_t>(v);
}

Index3 from_code(std::uint64_t code) { return {compact3(code >> 2), compact3(code >> 1), compact3(code)}; }

struct LevelTable {
  std::vector<std::uint8_t> symbols;  // ascending
  std::vector<std::uint32_t> cum;     // symbols.size() + 1
  std::array<std::int16_t, 256> slot{};  // symbol -> position, -1 when absent
};

void index_table(LevelTable& t) {
  t.slot.fill(-1);
  for (std::size_t i = 0; i < t.symbols.size(); ++i) t.slot[t.symbols[i]] = static_cast<std::int16_t>(i);
}

Bytes raw_section(std::span<const Index3> points, std::span<const std::uint32_t> order) {
  Bytes out;
  ByteWriter w(out);
  w.u8(kModeRaw);
  w.u32(static_cast<std::uint32_t>(points.size()));
  for (auto i : order) {
    for (int a = 0; a < 3; ++a) w.u16(points[i][a]);
  }
  return out;
}

}  // namespace

std::uint16_t quantize_coord(double p, double lo, double hi) {
  const double t = std::floor((p - lo) / (hi - lo) * double(kLatticeMax) + 0.5);
  if (!(t > 0.0)) return 0;
  if (t >= double(kLatticeMax)) return static_cast<std::uint16_t>(kLatticeMax);
  return static_cast<std::uint16_t>(t);
}

double dequantize_coord(std::uint16_t k, double lo, double hi) {
  if (k == kLatticeMax) return hi;
  return lo + (hi - lo) * (double(k) / double(kLatticeMax));
}

QuantizedPositions quantize_positions(const Matrix& positions, const SceneBBox& bbox) {
  QuantizedPositions qp;
  qp.bbox = bbox;
  qp.indices.resize(positions.rows);
  for (std::size_t i = 0; i < positions.rows; ++i) {
    for (int a = 0; a < 3; ++a) qp.indices[i][a] = quantize_coord(positions(i, a), bbox.min[a], bbox.max[a]);
  }
  return qp;
}

Matrix dequantize_positions(const QuantizedPositions& qp) {
  Matrix out(qp.indices.size(), 3);
  for (std::size_t i = 0; i < qp.indices.size(); ++i) {
    for (int a = 0; a < 3; ++a) out(i, a) = dequantize_coord(qp.indices[i][a], qp.bbox.min[a], qp.bbox.max[a]);
  }
  return out;
}

std::uint64_t morton_code(const Index3& p) { return (spread3(p[0]) << 2) | (spread3(p[1]) << 1) | spread3(p[2]); }

std::vector<std::uint32_t> morton_order(std::span<const Index3> points) {
  std::vector<std::uint64_t> codes(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) codes[i] = morton_code(points[i]);
  std::vector<std::uint32_t> order(points.size());
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) { return codes[a] < codes[b]; });
  return order;
}

Bytes encode_positions(std::span<const Index3> points) {
  const std::size_t n = points.size();
  if (n == 0) fail(ErrorKind::InvalidArgument, "cannot code an empty point set");
  if (n > 0xFFFFFFFFu) fail(ErrorKind::InvalidArgument, "too many points for one position section");
  const auto order = morton_order(points);
  std::vector<std::uint64_t> codes(n);
  for (std::size_t i = 0; i < n; ++i) codes[i] = morton_code(points[order[i]]);

  // Breadth-first: the nodes of a level are runs of equal code prefixes.
  std::vector<std::uint32_t> starts = {0};
  std::vector<std::vector<std::uint8_t>> occupancy(kLatticeBits);
  for (int level = 0; level < kLatticeBits; ++level) {
    const int shift = 3 * (kLatticeBits - 1 - level);
    std::vector<std::uint32_t> next;
    next.reserve(starts.size() * 2);
    for (std::size_t k = 0; k < starts.size(); ++k) {
      const std::size_t end = k + 1 < starts.size() ? starts[k + 1] : n;
      std::uint8_t occ = 0;
      int prev = -1;
      for (std::size_t i = starts[k]; i < end; ++i) {
        const int child = static_cast<int>((codes[i] >> shift) & 7);
        if (child != prev) {
          next.push_back(static_cast<std::uint32_t>(i));
          occ |= static_cast<std::uint8_t>(1u << child);
          prev = child;
        }
      }
      occupancy[level].push_back(occ);
    }
    starts = std::move(next);
  }

  std::vector<std::uint64_t> dup_counts(starts.size());
  bool duplicates = false;
  for (std::size_t k = 0; k < starts.size(); ++k) {
    const std::size_t end = k + 1 < starts.size() ? starts[k + 1] : n;
    dup_counts[k] = end - starts[k];
    duplicates |= dup_counts[k] > 1;
  }

  Bytes out;
  ByteWriter w(out);
  w.u8(kModeOctree);
  w.u32(static_cast<std::uint32_t>(n));
  w.u8(duplicates ? kFlagDuplicates : 0);

  std::vector<LevelTable> tables(kLatticeBits);
  for (int level = 0; level < kLatticeBits; ++level) {
    std::array<std::uint64_t, 256> hist{};
    for (auto b : occupancy[level]) ++hist[b];
    LevelTable& t = tables[level];
    std::vector<double> p;
    for (int s = 1; s < 256; ++s) {
      if (hist[s]) {
        t.symbols.push_back(static_cast<std::uint8_t>(s));
        p.push_back(double(hist[s]));
      }
    }
    t.cum = quantize_pmf(p).cum;
    index_table(t);
    w.u16(static_cast<std::uint16_t>(t.symbols.size()));
    for (std::size_t i = 0; i < t.symbols.size(); ++i) {
      w.u8(t.symbols[i]);
      w.u16(static_cast<std::uint16_t>(t.cum[i + 1] - t.cum[i] - 1));
    }
  }

  RangeEncoder enc;
  for (int level = 0; level < kLatticeBits; ++level) {
    const LevelTable& t = tables[level];
    for (auto b : occupancy[level]) {
      const auto i = static_cast<std::size_t>(t.slot[b]);
      enc.encode(t.cum[i], t.cum[i + 1] - t.cum[i]);
    }
  }
  w.bytes(frame(enc.finish()));
  if (duplicates) {
    for (auto c : dup_counts) w.varint(c - 1);
  }

  if (out.size() > 5 + 6 * n) return raw_section(points, order);
  return out;
}

std::vector<Index3> decode_positions(ByteView section) {
  ByteReader r(section, "position section");
  const std::uint8_t mode = r.u8();
  const std::uint32_t n = r.u32();
  if (n == 0) fail(ErrorKind::Corruption, "position section declares zero points");

  std::vector<Index3> points;
  if (mode == kModeRaw) {
    if (r.remaining() / 6 < n) fail(ErrorKind::Truncation, "raw position section is shorter than its point count");
    points.resize(n);
    for (auto& p : points) {
      for (int a = 0; a < 3; ++a) p[a] = r.u16();
    }
    if (!r.at_end()) fail(ErrorKind::Corruption, "raw position section has trailing bytes");
    const auto order = morton_order(points);
    std::vector<Index3> sorted(n);
    for (std::size_t i = 0; i < n; ++i) sorted[i] = points[order[i]];
    return sorted;
  }
  if (mode != kModeOctree) fail(ErrorKind::Corruption, "unknown position coding mode " + std::to_string(mode));

  const std::uint8_t flags = r.u8();
  if (flags & ~kFlagDuplicates) fail(ErrorKind::Corruption, "unknown position section flags");

  std::vector<LevelTable> tables(kLatticeBits);
  for (int level = 0; level < kLatticeBits; ++level) {
    LevelTable& t = tables[level];
    const std::uint16_t k = r.u16();
    if (k == 0 || k > 255) fail(ErrorKind::Corruption, "octree level " + std::to_string(level) + " has a bad table size");
    t.cum.assign(1, 0);
    for (std::uint16_t i = 0; i < k; ++i) {
      const std::uint8_t s = r.u8();
      if (s == 0 || (!t.symbols.empty() && s <= t.symbols.back())) {
        fail(ErrorKind::Corruption, "octree level " + std::to_string(level) + " table is not strictly ascending");
      }
      t.symbols.push_back(s);
      t.cum.push_back(t.cum.back() + r.u16() + 1u);
    }
    if (t.cum.back() != kProbTotal) {
      fail(ErrorKind::Corruption, "octree level " + std::to_string(level) + " frequencies do not sum to 2^16");
    }
    index_table(t);
  }

  RangeDecoder dec(unframe(r));
  std::vector<std::uint64_t> nodes = {0};
  for (int level = 0; level < kLatticeBits; ++level) {
    const LevelTable& t = tables[level];
    std::vector<std::uint64_t> next;
    next.reserve(std::min<std::size_t>(nodes.size() * 2, n));
    for (auto prefix : nodes) {
      const std::uint32_t target = dec.peek();
      const auto i = static_cast<std::size_t>(std::upper_bound(t.cum.begin(), t.cum.end(), target) - t.cum.begin()) - 1;
      dec.consume(t.cum[i], t.cum[i + 1] - t.cum[i]);
      const std::uint8_t occ = t.symbols[i];
      for (int child = 0; child < 8; ++child) {
        if (occ & (1u << child)) next.push_back(prefix << 3 | static_cast<std::uint64_t>(child));
      }
      if (next.size() > n) fail(ErrorKind::Corruption, "octree has more occupied nodes than points");
    }
    nodes = std::move(next);
  }

  points.reserve(n);
  if (flags & kFlagDuplicates) {
    std::uint64_t total = 0;
    for (auto code : nodes) {
      const std::uint64_t count = r.varint() + 1;
      if (count > n || total + count > n) fail(ErrorKind::Corruption, "duplicate counts exceed the point count");
      total += count;
      const Index3 p = from_code(code);
      for (std::uint64_t c = 0; c < count; ++c) points.push_back(p);
    }
    if (total != n) fail(ErrorKind::Corruption, "duplicate counts do not add up to the point count");
  } else {
    if (nodes.size() != n) fail(ErrorKind::Corruption, "octree leaf count does not match the point count");
    for (auto code : nodes) points.push_back(from_code(code));
  }
  if (!r.at_end()) fail(ErrorKind::Corruption, "position section has trailing bytes");
  return points;
}

}  // namespace fcgs
