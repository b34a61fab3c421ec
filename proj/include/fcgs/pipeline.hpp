#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fcgs/container.hpp"
#include "fcgs/context.hpp"
#include "fcgs/neural.hpp"
#include "fcgs/ply.hpp"
#include "fcgs/weights.hpp"

namespace fcgs {

inline constexpr std::size_t kDefaultChunkSize = std::size_t{1} << 20;

struct EncodeOptions {
  std::uint64_t seed = 0;
  std::size_t chunk_size = kDefaultChunkSize;
  unsigned workers = 1;
};

// Coder-side values of one scene chunk, for instrumented round-trip checks.
struct ChunkTrace {
  std::vector<std::uint8_t> masks;
  std::array<SymbolArray, 3> y;  // latents per stream
  std::array<SymbolArray, 3> z;  // hyper-latents per stream
};

struct CodecTrace {
  std::vector<ChunkTrace> chunks;
};

// Seconds spent per phase, summed over chunks.
struct PhaseTimes {
  double positions = 0;
  double masks = 0;
  double hyper = 0;
  double latents = 0;
  double total = 0;  // wall clock

  PhaseTimes& operator+=(const PhaseTimes& o);
};

struct EncodeResult {
  Bytes bytes;
  std::uint64_t clamp_events = 0;
  std::uint64_t symbols = 0;
  PhaseTimes times;
};

EncodeResult encode_scene_ex(const GaussianCloud& cloud, const ModelWeights& weights, const EncodeOptions& options,
                             CodecTrace* trace = nullptr);
Bytes encode_scene(const GaussianCloud& cloud, const ModelWeights& weights, const EncodeOptions& options);

GaussianCloud decode_scene(ByteView bytes, const ModelWeights& weights, unsigned workers = 1,
                           CodecTrace* trace = nullptr, PhaseTimes* times = nullptr);

// Per-component sizes in bytes. `exact` is false for estimates.
struct RateReport {
  bool exact = true;
  std::uint64_t count = 0;
  std::uint64_t count_col1 = 0;
  std::uint64_t count_col0 = 0;
  std::uint64_t chunks = 0;

  double positions = 0;
  double col1 = 0;
  double col0 = 0;
  double geo = 0;
  double mask = 0;
  double header = 0;
  double total = 0;

  std::array<double, 3> hyper{};  // per stream, included in geo/col0/col1
  // latent bytes per stream, per batch and per channel chunk
  std::array<std::vector<double>, 3> per_batch;
  std::array<std::vector<double>, 3> per_cchunk;

  PhaseTimes times;
  bool has_times = false;

  double mask_rate() const { return count ? double(count_col1) / double(count) : 0.0; }
  double bits_positions() const { return count ? positions * 8 / (3.0 * count) : 0.0; }
  double bits_col1() const { return count_col1 ? col1 * 8 / (48.0 * count_col1) : 0.0; }
  double bits_col0() const { return count_col0 ? col0 * 8 / (48.0 * count_col0) : 0.0; }
  double bits_geo() const { return count ? geo * 8 / (8.0 * count) : 0.0; }
  double bits_mask() const { return count ? mask * 8 / double(count) : 0.0; }
  double bits_average() const { return count ? total * 8 / (59.0 * count) : 0.0; }
};

RateReport inspect(ByteView bytes);
// Runs the full model without producing a bitstream. Positions are coded for
// real; every other section is the sum of -log2 of the coding probabilities
// plus its framing.
RateReport estimate_scene(const GaussianCloud& cloud, const ModelWeights& weights, const EncodeOptions& options);

std::string report_text(const RateReport& r);
std::string report_json(const RateReport& r);

// ---- lower level -----------------------------------------------------------

std::uint64_t chunk_seed(std::uint64_t seed, std::uint64_t chunk);

// Unit-cube coordinates for grid lookups, from a chunk's decoded positions.
Matrix normalize_positions(const Matrix& positions);

// Latent sections of one stream in one scene chunk, indexed batch * n_chunks + cchunk.
// `batch_of` gives the batch of each stream row.
std::vector<Bytes> encode_stream_latents(const ModelWeights& w, StreamKind stream, const Matrix& pos_norm,
                                         std::span<const std::uint8_t> batch_of, std::size_t batches,
                                         const SymbolArray& z, const SymbolArray& y);
SymbolArray decode_stream_latents(const ModelWeights& w, StreamKind stream, const Matrix& pos_norm,
                                  std::span<const std::uint8_t> batch_of, std::size_t batches, const SymbolArray& z,
                                  const std::vector<ByteView>& sections);
std::vector<double> estimate_stream_latents(const ModelWeights& w, StreamKind stream, const Matrix& pos_norm,
                                            std::span<const std::uint8_t> batch_of, std::size_t batches,
                                            const SymbolArray& z, const SymbolArray& y);

// Hyper-latents of one stream, row-major against the factorized prior.
Bytes encode_hyper(const FactorizedPrior& prior, const SymbolArray& z);
SymbolArray decode_hyper(const FactorizedPrior& prior, ByteView framed, std::size_t rows);
double estimate_hyper_bits(const FactorizedPrior& prior, const SymbolArray& z);

// z = round(h_a(y_hat)) clamped to the prior range.
SymbolArray hyper_latents(const ModelWeights& w, StreamKind stream, const SymbolArray& y, std::uint64_t* clamps);

}  // namespace fcgs
