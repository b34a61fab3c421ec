#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fcgs/bytes.hpp"
#include "fcgs/entropy.hpp"
#include "fcgs/mlp.hpp"

namespace fcgs {

enum class StreamKind : std::uint8_t { Geo = 0, Col0 = 1, Col1 = 2 };
inline constexpr std::array<StreamKind, 3> kStreams = {StreamKind::Geo, StreamKind::Col0, StreamKind::Col1};

struct StreamSpec {
  StreamKind kind = StreamKind::Geo;
  std::string name;  // geo, col0, col1
  std::size_t x_dim = 0;
  std::size_t y_dim = 0;
  std::size_t z_dim = 0;
  std::size_t n_chunks = 1;
  bool uses_transform = false;
  int sources = 2;  // h, s and (colour streams) c

  std::size_t chunk_width() const { return y_dim / n_chunks; }
  bool has_intra() const { return sources == 3; }
};

StreamSpec default_stream(StreamKind kind);
const char* stream_name(StreamKind kind);

struct Ratio {
  std::uint32_t num = 1;
  std::uint32_t den = 1;
};

struct Tensor {
  enum class DType : std::uint8_t { F32 = 0, U32 = 1 };
  std::vector<std::uint64_t> shape;
  DType dtype = DType::F32;
  std::vector<float> f32;
  std::vector<std::uint32_t> u32;

  std::uint64_t elements() const;
};

using Fingerprint = std::array<std::uint8_t, 16>;
std::string to_hex(const Fingerprint& fp);

inline constexpr const char* kDefaultProfile = "default";
inline constexpr std::uint32_t kWeightsVersion = 1;

// Everything a codec run needs besides the scene. Built by load_weights or
// gen_test_weights; immutable afterwards.
struct ModelWeights {
  std::string profile = kDefaultProfile;
  std::array<StreamSpec, 3> streams{default_stream(StreamKind::Geo), default_stream(StreamKind::Col0),
                                    default_stream(StreamKind::Col1)};
  std::map<std::string, std::vector<LayerSpec>> nets;
  std::map<std::string, Tensor> tensors;

  std::vector<double> q_geo;   // 8
  std::vector<double> q_col0;  // 48
  double q_latent = 1.0;
  double eps_m = 0.01;
  std::array<std::size_t, 3> res_3d{70, 80, 90};
  std::array<std::size_t, 3> res_2d{300, 400, 500};
  std::array<Ratio, 4> ratios{Ratio{1, 6}, Ratio{1, 6}, Ratio{1, 3}, Ratio{1, 3}};
  std::size_t embed_freqs = 8;
  double sigma_min = 1e-6;
  double sigma_max = 1e4;
  std::int32_t z_bound = 255;
  std::int32_t symbol_bound = kSymbolBound;

  // Derived by finalize().
  std::map<std::string, Mlp> mlps;
  std::array<FactorizedPrior, 3> priors;
  std::array<std::vector<double>, 3> chunk0;  // [mu | sigma-raw | pi] per colour stream
  Fingerprint fingerprint{};

  const StreamSpec& stream(StreamKind k) const { return streams[static_cast<int>(k)]; }
  const Mlp& mlp(const std::string& name) const;
  bool has_mlp(const std::string& name) const { return mlps.count(name) != 0; }
  // Per-channel quantisation step of a stream's latent (y_dim entries).
  std::vector<double> steps(StreamKind k) const;
};

// Every violated structural rule, empty when the weights are usable.
std::vector<std::string> validate_weights(const ModelWeights& w);

// Validates, compiles the networks, unpacks the priors and fingerprints the
// serialized form. Throws Weights listing every violation.
void finalize_weights(ModelWeights& w);

Bytes serialize_weights(const ModelWeights& w);
ModelWeights load_weights(ByteView bytes);

struct TestWeightsOptions {
  // Narrow hidden layers; same dimensions and layer counts otherwise.
  bool compact = false;
};

// Deterministic stand-in for trained weights.
ModelWeights gen_test_weights(std::uint64_t seed, const TestWeightsOptions& options = {});

}  // namespace fcgs
