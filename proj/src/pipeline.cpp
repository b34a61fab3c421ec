#include "fcgs/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <thread>

#include "fcgs/geometry.hpp"
#include "fcgs/range_coder.hpp"
#include "fcgs/rng.hpp"

namespace fcgs {

RateReport build_report(const ContainerHeader& h, const std::vector<std::pair<SectionId, double>>& sizes,
                        double header_bytes, double total);
std::size_t container_header_size(const std::string& profile, std::size_t sections);

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Runs fn(i) for i in [0, n) on up to `workers` threads. The first failure
// by index is rethrown after all threads finish.
template <typename Fn>
void parallel_for(std::size_t n, unsigned workers, Fn&& fn) {
  const std::size_t threads = std::min<std::size_t>(std::max(1u, workers), n);
  std::vector<std::exception_ptr> errors(n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
        break;
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

struct StreamRows {
  std::array<std::vector<std::uint32_t>, 3> rows;
};

StreamRows route(const std::vector<std::uint8_t>& masks) {
  StreamRows s;
  for (std::uint32_t i = 0; i < masks.size(); ++i) {
    s.rows[0].push_back(i);
    s.rows[masks[i] ? 2 : 1].push_back(i);
  }
  return s;
}

Matrix gather(const Matrix& m, const std::vector<std::uint32_t>& rows) {
  Matrix out(rows.size(), m.cols);
  for (std::size_t i = 0; i < rows.size(); ++i) std::copy_n(m.row(rows[i]).begin(), m.cols, out.row(i).begin());
  return out;
}

std::vector<std::uint8_t> gather(const std::vector<std::uint8_t>& v, const std::vector<std::uint32_t>& rows) {
  std::vector<std::uint8_t> out(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) out[i] = v[rows[i]];
  return out;
}

SectionId latent_id(std::uint32_t chunk, std::size_t stream, std::size_t batch, std::size_t cchunk) {
  SectionId id;
  id.kind = SectionKind::Latent;
  id.stream = static_cast<std::uint8_t>(stream);
  id.batch = static_cast<std::uint8_t>(batch);
  id.cchunk = static_cast<std::uint8_t>(cchunk);
  id.chunk = chunk;
  return id;
}

SectionId simple_id(SectionKind kind, std::uint32_t chunk, std::size_t stream = 0) {
  SectionId id;
  id.kind = kind;
  id.chunk = chunk;
  id.stream = static_cast<std::uint8_t>(stream);
  return id;
}

// The fixed section order of one scene chunk.
std::vector<SectionId> chunk_layout(const ModelWeights& w, std::uint32_t chunk) {
  std::vector<SectionId> ids = {simple_id(SectionKind::Positions, chunk), simple_id(SectionKind::Mask, chunk)};
  for (std::size_t s = 0; s < 3; ++s) ids.push_back(simple_id(SectionKind::Hyper, chunk, s));
  for (std::size_t b = 0; b < w.ratios.size(); ++b) {
    for (std::size_t s = 0; s < 3; ++s) {
      for (std::size_t k = 0; k < w.streams[s].n_chunks; ++k) ids.push_back(latent_id(chunk, s, b, k));
    }
  }
  return ids;
}

// One chunk of the scene, rows in global Morton order.
struct ChunkInput {
  std::uint32_t index = 0;
  std::vector<Index3> points;
  Matrix f_geo;
  Matrix f_col;
};

struct ChunkOutput {
  std::vector<std::pair<SectionId, Bytes>> sections;
  std::vector<std::pair<SectionId, double>> estimated;  // bytes
  std::uint64_t clamps = 0;
  std::uint64_t symbols = 0;
  std::uint64_t ones = 0;
  PhaseTimes times;
  ChunkTrace trace;
};

constexpr std::size_t kBlockRows = 4096;

// A section that ends early inside a complete container is damaged data,
// not a short file.
ErrorKind section_error(ErrorKind k) { return k == ErrorKind::Truncation ? ErrorKind::Corruption : k; }

MaskResult chunk_masks(const ModelWeights& w, const ChunkInput& in) {
  const std::size_t n = in.points.size();
  MaskResult out;
  out.bits.reserve(n);
  out.scores.reserve(n);
  for (std::size_t start = 0; start < n; start += kBlockRows) {
    const std::size_t rows = std::min(kBlockRows, n - start);
    Matrix f_gau(rows, kGauDim);
    for (std::size_t i = 0; i < rows; ++i) {
      std::copy_n(in.f_geo.row(start + i).begin(), kGeoDim, f_gau.row(i).begin());
      std::copy_n(in.f_col.row(start + i).begin(), kColDim, f_gau.row(i).begin() + kGeoDim);
    }
    const MaskResult m = compute_masks(w, f_gau);
    out.bits.insert(out.bits.end(), m.bits.begin(), m.bits.end());
    out.scores.insert(out.scores.end(), m.scores.begin(), m.scores.end());
  }
  return out;
}

// Latent symbols of the given rows of `src`, through the analysis transform
// where the stream has one.
SymbolArray analyse(const ModelWeights& w, StreamKind kind, const Matrix& src, const std::vector<std::uint32_t>& rows,
                    std::uint64_t* clamps) {
  const StreamSpec& s = w.stream(kind);
  const std::vector<double> steps = w.steps(kind);
  SymbolArray y(rows.size(), s.y_dim, steps);
  for (std::size_t start = 0; start < rows.size(); start += kBlockRows) {
    const std::size_t n = std::min(kBlockRows, rows.size() - start);
    Matrix x(n, src.cols);
    for (std::size_t i = 0; i < n; ++i) std::copy_n(src.row(rows[start + i]).begin(), src.cols, x.row(i).begin());
    if (s.uses_transform) x = apply_transform(w, Transform::Analysis, kind, x);
    std::size_t c = 0;
    const SymbolArray part = quantize(x, steps, &c);
    *clamps += c;
    std::copy(part.data.begin(), part.data.end(), y.data.begin() + start * s.y_dim);
  }
  return y;
}

// Inverse of analyse: writes the reconstructed attributes into rows of `dst`.
void synthesise(const ModelWeights& w, StreamKind kind, const SymbolArray& y, const std::vector<std::uint32_t>& rows,
                Matrix& dst, std::size_t offset) {
  const StreamSpec& s = w.stream(kind);
  for (std::size_t start = 0; start < rows.size(); start += kBlockRows) {
    const std::size_t n = std::min(kBlockRows, rows.size() - start);
    Matrix x(n, s.y_dim);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < s.y_dim; ++c) x(i, c) = y(start + i, c) * y.step[c];
    }
    if (s.uses_transform) x = apply_transform(w, Transform::Synthesis, kind, x);
    for (std::size_t i = 0; i < n; ++i) std::copy_n(x.row(i).begin(), x.cols, dst.row(offset + rows[start + i]).begin());
  }
}

Matrix chunk_positions(const std::vector<Index3>& points, const SceneBBox& bbox) {
  QuantizedPositions qp;
  qp.indices = points;
  qp.bbox = bbox;
  return dequantize_positions(qp);
}

ChunkOutput encode_chunk(const ChunkInput& in, const ModelWeights& w, const SceneBBox& bbox, std::uint64_t seed,
                         bool estimate, bool keep_trace) {
  ChunkOutput out;
  const std::size_t n = in.points.size();
  const std::uint32_t c = in.index;

  auto t0 = Clock::now();
  Bytes positions = encode_positions(in.points);
  const Matrix pos_norm = normalize_positions(chunk_positions(in.points, bbox));
  out.times.positions = seconds_since(t0);

  t0 = Clock::now();
  MaskResult masks = chunk_masks(w, in);
  for (auto b : masks.bits) out.ones += b;
  Bytes mask_section = encode_mask_bits(masks.bits);
  double mask_bits = 0;
  if (estimate) {
    const double p1 = double(ByteReader(mask_section, "mask").u16()) / kProbTotal;
    mask_bits = double(out.ones) * -std::log2(p1) + double(n - out.ones) * -std::log2(1.0 - p1);
  }
  out.times.masks = seconds_since(t0);

  t0 = Clock::now();
  const StreamRows routes = route(masks.bits);
  std::array<SymbolArray, 3> y, z;
  std::array<Matrix, 3> pos;
  for (std::size_t s = 0; s < 3; ++s) {
    const auto kind = static_cast<StreamKind>(s);
    const auto& rows = routes.rows[s];
    y[s] = analyse(w, kind, s == 0 ? in.f_geo : in.f_col, rows, &out.clamps);
    z[s] = hyper_latents(w, kind, y[s], &out.clamps);
    out.symbols += y[s].data.size() + z[s].data.size();
    pos[s] = gather(pos_norm, rows);
  }
  out.times.hyper = seconds_since(t0);

  t0 = Clock::now();
  const BatchAssignment batches = split_batches(n, chunk_seed(seed, c), w.ratios);
  std::array<std::vector<Bytes>, 3> latents;
  std::array<std::vector<double>, 3> latent_bits;
  for (std::size_t s = 0; s < 3; ++s) {
    const auto kind = static_cast<StreamKind>(s);
    const auto batch_of = gather(batches.batch_of, routes.rows[s]);
    if (estimate) {
      latent_bits[s] = estimate_stream_latents(w, kind, pos[s], batch_of, batches.n_batches(), z[s], y[s]);
    } else {
      latents[s] = encode_stream_latents(w, kind, pos[s], batch_of, batches.n_batches(), z[s], y[s]);
    }
  }
  out.times.latents = seconds_since(t0);

  for (const SectionId& id : chunk_layout(w, c)) {
    const std::size_t s = id.stream;
    switch (id.kind) {
      case SectionKind::Positions:
        if (estimate) out.estimated.emplace_back(id, double(positions.size()));
        else out.sections.emplace_back(id, std::move(positions));
        break;
      case SectionKind::Mask:
        if (estimate) out.estimated.emplace_back(id, mask_bits / 8 + 12);
        else out.sections.emplace_back(id, std::move(mask_section));
        break;
      case SectionKind::Hyper:
        if (estimate) out.estimated.emplace_back(id, estimate_hyper_bits(w.priors[s], z[s]) / 8 + 8);
        else out.sections.emplace_back(id, encode_hyper(w.priors[s], z[s]));
        break;
      case SectionKind::Latent: {
        const std::size_t idx = id.batch * w.streams[s].n_chunks + id.cchunk;
        if (estimate) out.estimated.emplace_back(id, latent_bits[s][idx] / 8 + 8);
        else out.sections.emplace_back(id, std::move(latents[s][idx]));
        break;
      }
    }
  }
  if (keep_trace) {
    out.trace.masks = std::move(masks.bits);
    out.trace.y = std::move(y);
    out.trace.z = std::move(z);
  }
  return out;
}

struct Prepared {
  SceneBBox bbox;
  std::vector<std::uint32_t> order;
  std::vector<Index3> points;  // per original row
  std::size_t chunks = 0;
};

Prepared prepare(const GaussianCloud& cloud, const EncodeOptions& options) {
  cloud.validate();
  if (options.chunk_size == 0) fail(ErrorKind::InvalidArgument, "chunk size must be positive");
  Prepared p;
  p.bbox = compute_bbox(cloud);
  QuantizedPositions qp = quantize_positions(cloud.positions, p.bbox);
  p.points = std::move(qp.indices);
  p.order = morton_order(p.points);
  p.chunks = (cloud.size() + options.chunk_size - 1) / options.chunk_size;
  return p;
}

ChunkInput slice(const GaussianCloud& cloud, const Prepared& p, std::size_t chunk, std::size_t chunk_size) {
  ChunkInput in;
  in.index = static_cast<std::uint32_t>(chunk);
  const std::size_t begin = chunk * chunk_size;
  const std::size_t end = std::min(cloud.size(), begin + chunk_size);
  in.points.reserve(end - begin);
  in.f_geo = Matrix(end - begin, kGeoDim);
  in.f_col = Matrix(end - begin, kColDim);
  for (std::size_t i = begin; i < end; ++i) {
    const auto r = p.order[i];
    in.points.push_back(p.points[r]);
    std::copy_n(cloud.f_geo.row(r).begin(), kGeoDim, in.f_geo.row(i - begin).begin());
    std::copy_n(cloud.f_col.row(r).begin(), kColDim, in.f_col.row(i - begin).begin());
  }
  return in;
}

}  // namespace

PhaseTimes& PhaseTimes::operator+=(const PhaseTimes& o) {
  positions += o.positions;
  masks += o.masks;
  hyper += o.hyper;
  latents += o.latents;
  return *this;
}

std::uint64_t chunk_seed(std::uint64_t seed, std::uint64_t chunk) {
  std::uint64_t state = seed ^ (chunk * 0x9E3779B97F4A7C15ULL);
  return splitmix64(state);
}

Matrix normalize_positions(const Matrix& positions) {
  Matrix out(positions.rows, 3);
  if (positions.rows == 0) return out;
  const SceneBBox box = pad_degenerate(scan_bbox(positions));
  for (std::size_t i = 0; i < positions.rows; ++i) {
    for (int a = 0; a < 3; ++a) {
      out(i, a) = std::clamp((positions(i, a) - box.min[a]) / (box.max[a] - box.min[a]), 0.0, 1.0);
    }
  }
  return out;
}

EncodeResult encode_scene_ex(const GaussianCloud& cloud, const ModelWeights& w, const EncodeOptions& options,
                             CodecTrace* trace) {
  const auto start = Clock::now();
  const Prepared p = prepare(cloud, options);
  std::vector<ChunkOutput> outputs(p.chunks);
  parallel_for(p.chunks, options.workers, [&](std::size_t c) {
    ChunkInput in = slice(cloud, p, c, options.chunk_size);
    outputs[c] = encode_chunk(in, w, p.bbox, options.seed, false, trace != nullptr);
  });

  EncodeResult result;
  ContainerHeader h;
  h.count = cloud.size();
  h.chunk_size = options.chunk_size;
  h.seed = options.seed;
  h.bbox = p.bbox;
  h.fingerprint = w.fingerprint;
  h.profile = w.profile;
  std::vector<Section> sections;
  for (auto& o : outputs) {
    h.clamp_events += o.clamps;
    h.mask_ones += o.ones;
    result.symbols += o.symbols;
    result.times += o.times;
    for (auto& [id, data] : o.sections) sections.push_back({id, std::move(data)});
    if (trace) trace->chunks.push_back(std::move(o.trace));
  }
  result.clamp_events = h.clamp_events;
  result.bytes = write_container(h, sections);
  result.times.total = seconds_since(start);
  return result;
}

Bytes encode_scene(const GaussianCloud& cloud, const ModelWeights& w, const EncodeOptions& options) {
  return encode_scene_ex(cloud, w, options).bytes;
}

RateReport estimate_scene(const GaussianCloud& cloud, const ModelWeights& w, const EncodeOptions& options) {
  const auto start = Clock::now();
  const Prepared p = prepare(cloud, options);
  std::vector<ChunkOutput> outputs(p.chunks);
  parallel_for(p.chunks, options.workers, [&](std::size_t c) {
    ChunkInput in = slice(cloud, p, c, options.chunk_size);
    outputs[c] = encode_chunk(in, w, p.bbox, options.seed, true, false);
  });
  ContainerHeader h;
  h.count = cloud.size();
  h.chunk_size = options.chunk_size;
  h.profile = w.profile;
  std::vector<std::pair<SectionId, double>> sizes;
  PhaseTimes times;
  for (auto& o : outputs) {
    h.mask_ones += o.ones;
    times += o.times;
    sizes.insert(sizes.end(), o.estimated.begin(), o.estimated.end());
  }
  const double header = double(container_header_size(w.profile, sizes.size()));
  double total = header;
  for (const auto& s : sizes) total += s.second;
  RateReport r = build_report(h, sizes, header, total);
  r.exact = false;
  r.times = times;
  r.times.total = seconds_since(start);
  r.has_times = true;
  return r;
}

GaussianCloud decode_scene(ByteView bytes, const ModelWeights& w, unsigned workers, CodecTrace* trace,
                           PhaseTimes* times) {
  const auto start = Clock::now();
  Container file = read_container(bytes);
  const ContainerHeader& h = file.header;
  check_fingerprint(h, w);

  const std::size_t chunks = static_cast<std::size_t>(h.chunks());
  std::vector<std::vector<const Section*>> by_chunk(chunks);
  {
    std::vector<std::vector<SectionId>> layouts(chunks);
    for (std::size_t c = 0; c < chunks; ++c) layouts[c] = chunk_layout(w, static_cast<std::uint32_t>(c));
    std::vector<std::size_t> fill(chunks, 0);
    for (const auto& s : file.sections) {
      if (static_cast<std::uint8_t>(s.id.kind) > static_cast<std::uint8_t>(SectionKind::Latent)) continue;
      if (s.id.chunk >= chunks) fail(ErrorKind::Corruption, describe(s.id) + " refers to a chunk beyond the count");
      auto& f = fill[s.id.chunk];
      const auto& layout = layouts[s.id.chunk];
      if (f >= layout.size() || !(layout[f] == s.id)) {
        fail(ErrorKind::Corruption, "unexpected " + describe(s.id) + " in the section directory");
      }
      by_chunk[s.id.chunk].push_back(&s);
      ++f;
    }
    for (std::size_t c = 0; c < chunks; ++c) {
      if (fill[c] != layouts[c].size()) fail(ErrorKind::Corruption, "missing " + describe(layouts[c][fill[c]]));
    }
  }

  GaussianCloud cloud(static_cast<std::size_t>(h.count));
  std::vector<ChunkTrace> traces(chunks);
  std::vector<std::uint64_t> ones(chunks, 0);
  std::vector<PhaseTimes> part_times(chunks);

  parallel_for(chunks, workers, [&](std::size_t c) {
    const auto& secs = by_chunk[c];
    const std::size_t n = static_cast<std::size_t>(std::min<std::uint64_t>(h.chunk_size, h.count - c * h.chunk_size));
    std::size_t cursor = 0;
    auto guarded = [&](auto&& fn) {
      const Section* s = secs[cursor++];
      try {
        return fn(ByteView(s->data));
      } catch (const Error& e) {
        fail(section_error(e.kind()), describe(s->id) + ": " + e.what());
      }
    };

    auto t0 = Clock::now();
    std::vector<Index3> points = guarded([&](ByteView b) {
      auto p = decode_positions(b);
      if (p.size() != n) fail(ErrorKind::Corruption, "holds " + std::to_string(p.size()) + " points, expected " +
                                                         std::to_string(n));
      return p;
    });
    const std::size_t offset = c * static_cast<std::size_t>(h.chunk_size);
    const Matrix positions = chunk_positions(points, h.bbox);
    points = {};
    std::copy(positions.data.begin(), positions.data.end(), cloud.positions.data.begin() + offset * 3);
    const Matrix pos_norm = normalize_positions(positions);
    part_times[c].positions = seconds_since(t0);

    t0 = Clock::now();
    std::vector<std::uint8_t> masks = guarded([&](ByteView b) { return decode_mask_bits(b, n); });
    for (auto b : masks) ones[c] += b;
    const StreamRows routes = route(masks);
    part_times[c].masks = seconds_since(t0);

    t0 = Clock::now();
    std::array<SymbolArray, 3> z;
    for (std::size_t s = 0; s < 3; ++s) {
      z[s] = guarded([&](ByteView b) { return decode_hyper(w.priors[s], b, routes.rows[s].size()); });
    }
    part_times[c].hyper = seconds_since(t0);

    t0 = Clock::now();
    const BatchAssignment batches = split_batches(n, chunk_seed(h.seed, c), w.ratios);
    std::array<std::vector<ByteView>, 3> latent_sections;
    for (; cursor < secs.size(); ++cursor) latent_sections[secs[cursor]->id.stream].push_back(secs[cursor]->data);
    std::array<SymbolArray, 3> y;
    for (std::size_t s = 0; s < 3; ++s) {
      const auto kind = static_cast<StreamKind>(s);
      const auto batch_of = gather(batches.batch_of, routes.rows[s]);
      try {
        y[s] = decode_stream_latents(w, kind, gather(pos_norm, routes.rows[s]), batch_of, batches.n_batches(), z[s],
                                     latent_sections[s]);
      } catch (const Error& e) {
        fail(section_error(e.kind()), "chunk " + std::to_string(c) + " " + stream_name(kind) +
                                          " latent sections: " + e.what());
      }
      synthesise(w, kind, y[s], routes.rows[s], s == 0 ? cloud.f_geo : cloud.f_col, offset);
    }
    part_times[c].latents = seconds_since(t0);
    if (trace) {
      traces[c].masks = std::move(masks);
      traces[c].y = std::move(y);
      traces[c].z = std::move(z);
    }
  });

  std::uint64_t total_ones = 0;
  for (auto o : ones) total_ones += o;
  if (total_ones != h.mask_ones) fail(ErrorKind::Corruption, "decoded mask count does not match the header");

  if (trace) trace->chunks = std::move(traces);
  if (times) {
    *times = PhaseTimes{};
    for (const auto& t : part_times) *times += t;
    times->total = seconds_since(start);
  }
  return cloud;
}

}  // namespace fcgs
