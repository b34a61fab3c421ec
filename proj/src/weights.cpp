#include "fcgs/weights.hpp"

#include <openssl/evp.h>

#include <cmath>
#include <cstring>
#include <json.hpp>
#include <sstream>

namespace fcgs {

using nlohmann::json;

namespace {

constexpr char kMagic[] = "FCGSW01";
constexpr std::size_t kMagicLen = 7;

std::string layer_tensor(const std::string& net, std::size_t l, const char* part) {
  return net + "." + std::to_string(l) + "." + part;
}

struct NetRule {
  std::string name;
  std::size_t in;
  std::size_t out;
  std::size_t layers;  // 0: any depth
};

std::vector<NetRule> required_nets(const ModelWeights& w) {
  std::vector<NetRule> rules;
  rules.push_back({"mask", 56, 1, 0});
  for (const auto& s : w.streams) {
    const std::string p = s.name + ".";
    if (s.uses_transform) {
      rules.push_back({p + "g_a", s.x_dim, s.y_dim, 4});
      rules.push_back({p + "g_s", s.y_dim, s.x_dim, 4});
    }
    rules.push_back({p + "h_a", s.y_dim, s.z_dim, 3});
    rules.push_back({p + "h_s", s.z_dim, 3 * s.y_dim, 3});
    rules.push_back({p + "mlp_s", 12 * s.y_dim + 6 * w.embed_freqs, 3 * s.y_dim, 0});
    if (s.has_intra()) {
      const std::size_t c = s.chunk_width();
      rules.push_back({p + "mlp_c", (s.n_chunks - 1) * c + s.n_chunks, 3 * c, 0});
    }
  }
  return rules;
}

std::string shape_text(const std::vector<std::uint64_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? ", " : "") + std::to_string(shape[i]);
  return s + "]";
}

void check_tensor(const ModelWeights& w, const std::string& name, std::vector<std::uint64_t> shape,
                  Tensor::DType dtype, std::vector<std::string>& errors) {
  auto it = w.tensors.find(name);
  if (it == w.tensors.end()) {
    errors.push_back("missing tensor " + name);
    return;
  }
  if (it->second.shape != shape) {
    errors.push_back("tensor " + name + " has shape " + shape_text(it->second.shape) + ", expected " +
                     shape_text(shape));
  }
  if (it->second.dtype != dtype) errors.push_back("tensor " + name + " has the wrong dtype");
}

bool positive_finite(double v) { return std::isfinite(v) && v > 0.0; }

}  // namespace

// ---- stream specs ----------------------------------------------------------

const char* stream_name(StreamKind kind) {
  switch (kind) {
    case StreamKind::Geo: return "geo";
    case StreamKind::Col0: return "col0";
    case StreamKind::Col1: return "col1";
  }
  return "?";
}

StreamSpec default_stream(StreamKind kind) {
  StreamSpec s;
  s.kind = kind;
  s.name = stream_name(kind);
  switch (kind) {
    case StreamKind::Geo:
      s.x_dim = 8, s.y_dim = 8, s.z_dim = 16, s.n_chunks = 1, s.uses_transform = false, s.sources = 2;
      break;
    case StreamKind::Col0:
      s.x_dim = 48, s.y_dim = 48, s.z_dim = 24, s.n_chunks = 3, s.uses_transform = false, s.sources = 3;
      break;
    case StreamKind::Col1:
      s.x_dim = 48, s.y_dim = 256, s.z_dim = 64, s.n_chunks = 4, s.uses_transform = true, s.sources = 3;
      break;
  }
  return s;
}

std::uint64_t Tensor::elements() const {
  std::uint64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_hex(const Fingerprint& fp) {
  static const char* digits = "0123456789abcdef";
  std::string s;
  for (auto b : fp) {
    s += digits[b >> 4];
    s += digits[b & 15];
  }
  return s;
}

const Mlp& ModelWeights::mlp(const std::string& name) const {
  auto it = mlps.find(name);
  if (it == mlps.end()) fail(ErrorKind::Weights, "weights have no network " + name);
  return it->second;
}

std::vector<double> ModelWeights::steps(StreamKind k) const {
  switch (k) {
    case StreamKind::Geo: return q_geo;
    case StreamKind::Col0: return q_col0;
    case StreamKind::Col1: return std::vector<double>(stream(k).y_dim, q_latent);
  }
  return {};
}

// ---- validation ------------------------------------------------------------

std::vector<std::string> validate_weights(const ModelWeights& w) {
  std::vector<std::string> errors;

  for (auto kind : kStreams) {
    const StreamSpec& s = w.stream(kind);
    const StreamSpec d = default_stream(kind);
    if (s.kind != kind || s.name != d.name) errors.push_back("stream table out of order at " + d.name);
    if (s.x_dim != d.x_dim) errors.push_back(d.name + ": x_dim must be " + std::to_string(d.x_dim));
    if (s.y_dim == 0 || s.z_dim == 0 || s.n_chunks == 0) errors.push_back(d.name + ": zero dimension");
    if (s.n_chunks && s.y_dim % s.n_chunks) errors.push_back(d.name + ": y_dim not divisible by n_chunks");
    if (!s.uses_transform && s.x_dim != s.y_dim) errors.push_back(d.name + ": bypass stream needs y_dim == x_dim");
    if (s.sources != d.sources) {
      errors.push_back(d.name + ": expected " + std::to_string(d.sources) + " mixture sources");
    }
    if (w.profile == kDefaultProfile &&
        (s.y_dim != d.y_dim || s.z_dim != d.z_dim || s.n_chunks != d.n_chunks || s.uses_transform != d.uses_transform)) {
      errors.push_back(d.name + ": dimensions differ from the default profile");
    }
  }
  if (w.stream(StreamKind::Geo).uses_transform || w.stream(StreamKind::Col0).uses_transform) {
    errors.push_back("only col1 may use an analysis/synthesis transform");
  }

  if (errors.empty()) {
    for (const auto& rule : required_nets(w)) {
      auto it = w.nets.find(rule.name);
      if (it == w.nets.end()) {
        errors.push_back("missing network " + rule.name);
        continue;
      }
      const auto& layers = it->second;
      if (layers.empty()) {
        errors.push_back(rule.name + ": no layers");
        continue;
      }
      if (rule.layers && layers.size() != rule.layers) {
        errors.push_back(rule.name + ": has " + std::to_string(layers.size()) + " layers, expected " +
                         std::to_string(rule.layers));
      }
      if (layers.front().in != rule.in) {
        errors.push_back(rule.name + ": input width " + std::to_string(layers.front().in) + ", expected " +
                         std::to_string(rule.in));
      }
      if (layers.back().out != rule.out) {
        errors.push_back(rule.name + ": output width " + std::to_string(layers.back().out) + ", expected " +
                         std::to_string(rule.out));
      }
      for (std::size_t l = 0; l < layers.size(); ++l) {
        if (l > 0 && layers[l].in != layers[l - 1].out) {
          errors.push_back(rule.name + ": layer " + std::to_string(l) + " input does not match previous output");
        }
        check_tensor(w, layer_tensor(rule.name, l, "weight"), {layers[l].in, layers[l].out}, Tensor::DType::F32,
                     errors);
        check_tensor(w, layer_tensor(rule.name, l, "bias"), {layers[l].out}, Tensor::DType::F32, errors);
      }
    }
    for (const auto& s : w.streams) {
      check_tensor(w, s.name + ".zprior", {s.z_dim, static_cast<std::uint64_t>(2 * w.z_bound + 2)},
                   Tensor::DType::U32, errors);
      if (s.has_intra()) check_tensor(w, s.name + ".chunk0", {3 * s.chunk_width()}, Tensor::DType::F32, errors);
    }
  }

  if (w.q_geo.size() != 8) errors.push_back("q_geo must have 8 entries");
  if (w.q_col0.size() != 48) errors.push_back("q_col0 must have 48 entries");
  for (double q : w.q_geo) {
    if (!positive_finite(q)) errors.push_back("q_geo has a non-positive step");
  }
  for (double q : w.q_col0) {
    if (!positive_finite(q)) errors.push_back("q_col0 has a non-positive step");
  }
  if (!positive_finite(w.q_latent)) errors.push_back("q_latent must be positive");
  if (!(w.eps_m > 0.0 && w.eps_m < 1.0)) errors.push_back("mask threshold must lie in (0, 1)");
  if (!(positive_finite(w.sigma_min) && std::isfinite(w.sigma_max) && w.sigma_min < w.sigma_max)) {
    errors.push_back("sigma bounds must satisfy 0 < min < max");
  }
  if (w.z_bound < 1 || w.z_bound > 4095) errors.push_back("z_bound must lie in [1, 4095]");
  if (w.symbol_bound != kSymbolBound) errors.push_back("symbol_bound must be " + std::to_string(kSymbolBound));
  if (w.embed_freqs < 1 || w.embed_freqs > 30) errors.push_back("embedding frequency count must lie in [1, 30]");
  for (auto r : w.res_3d) {
    if (r < 2) errors.push_back("3D grid resolution below 2");
  }
  for (auto r : w.res_2d) {
    if (r < 2) errors.push_back("2D grid resolution below 2");
  }
  // Ratios must sum to exactly one: sum num/den over a common denominator.
  {
    std::uint64_t num = 0, den = 1;
    bool ok = true;
    for (const auto& r : w.ratios) {
      if (r.den == 0 || r.num == 0 || r.num > r.den) ok = false;
      if (!ok) break;
      num = num * r.den + std::uint64_t{r.num} * den;
      den *= r.den;
    }
    if (!ok || num != den) errors.push_back("batch ratios must be positive and sum to 1");
  }

  if (w.profile == kDefaultProfile) {
    if (w.res_3d != std::array<std::size_t, 3>{70, 80, 90}) errors.push_back("default profile needs 3D grids 70/80/90");
    if (w.res_2d != std::array<std::size_t, 3>{300, 400, 500}) {
      errors.push_back("default profile needs 2D grids 300/400/500");
    }
    const std::array<Ratio, 4> want{Ratio{1, 6}, Ratio{1, 6}, Ratio{1, 3}, Ratio{1, 3}};
    for (std::size_t i = 0; i < 4; ++i) {
      if (w.ratios[i].num * want[i].den != want[i].num * w.ratios[i].den) {
        errors.push_back("default profile needs batch ratios 1/6, 1/6, 1/3, 1/3");
        break;
      }
    }
    if (w.eps_m != 0.01) errors.push_back("default profile needs mask threshold 0.01");
  }
  return errors;
}

// ---- serialization ---------------------------------------------------------

namespace {

json metadata(const ModelWeights& w) {
  json j;
  j["profile"] = w.profile;
  j["streams"] = json::array();
  for (const auto& s : w.streams) {
    json sources = json::array({"h", "s"});
    if (s.sources == 3) sources.push_back("c");
    j["streams"].push_back({{"name", s.name},
                            {"x_dim", s.x_dim},
                            {"y_dim", s.y_dim},
                            {"z_dim", s.z_dim},
                            {"n_chunks", s.n_chunks},
                            {"uses_transform", s.uses_transform},
                            {"sources", sources}});
  }
  json nets = json::object();
  for (const auto& [name, layers] : w.nets) {
    json arr = json::array();
    for (const auto& l : layers) arr.push_back({{"in", l.in}, {"out", l.out}, {"activation", to_tag(l.act)}});
    nets[name] = arr;
  }
  j["nets"] = nets;
  j["steps"] = {{"geo", w.q_geo}, {"col0", w.q_col0}, {"latent", w.q_latent}};
  j["mask_threshold"] = w.eps_m;
  j["grids"] = {{"res_3d", w.res_3d}, {"res_2d", w.res_2d}, {"planes", {"xy", "xz", "yz"}}};
  json ratios = json::array();
  for (const auto& r : w.ratios) ratios.push_back({r.num, r.den});
  j["batch_ratios"] = ratios;
  j["embedding_frequencies"] = w.embed_freqs;
  j["sigma"] = {{"min", w.sigma_min}, {"max", w.sigma_max}};
  j["z_bound"] = w.z_bound;
  j["symbol_bound"] = w.symbol_bound;
  j["head_layout"] = "mu|sigma_raw|pi";
  j["mlp_s_input"] = "grids_3d(70,80,90)|planes(xy,xz,yz)x(300,400,500)|embedding";
  j["mlp_c_input"] = "zero_padded_prefix|one_hot_chunk";
  return j;
}

void read_metadata(const json& j, ModelWeights& w) {
  w.profile = j.at("profile").get<std::string>();
  const auto& streams = j.at("streams");
  if (!streams.is_array() || streams.size() != 3) fail(ErrorKind::Weights, "weights metadata needs 3 streams");
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& s = streams[i];
    StreamSpec& d = w.streams[i];
    d.kind = static_cast<StreamKind>(i);
    d.name = s.at("name").get<std::string>();
    d.x_dim = s.at("x_dim").get<std::size_t>();
    d.y_dim = s.at("y_dim").get<std::size_t>();
    d.z_dim = s.at("z_dim").get<std::size_t>();
    d.n_chunks = s.at("n_chunks").get<std::size_t>();
    d.uses_transform = s.at("uses_transform").get<bool>();
    d.sources = static_cast<int>(s.at("sources").size());
  }
  w.nets.clear();
  for (const auto& [name, arr] : j.at("nets").items()) {
    std::vector<LayerSpec> layers;
    for (const auto& l : arr) {
      layers.push_back({l.at("in").get<std::size_t>(), l.at("out").get<std::size_t>(),
                        activation_from_tag(l.at("activation").get<std::string>())});
    }
    w.nets[name] = layers;
  }
  const auto& steps = j.at("steps");
  w.q_geo = steps.at("geo").get<std::vector<double>>();
  w.q_col0 = steps.at("col0").get<std::vector<double>>();
  w.q_latent = steps.at("latent").get<double>();
  w.eps_m = j.at("mask_threshold").get<double>();
  w.res_3d = j.at("grids").at("res_3d").get<std::array<std::size_t, 3>>();
  w.res_2d = j.at("grids").at("res_2d").get<std::array<std::size_t, 3>>();
  const auto& ratios = j.at("batch_ratios");
  if (!ratios.is_array() || ratios.size() != 4) fail(ErrorKind::Weights, "weights metadata needs 4 batch ratios");
  for (std::size_t i = 0; i < 4; ++i) {
    w.ratios[i] = {ratios[i].at(0).get<std::uint32_t>(), ratios[i].at(1).get<std::uint32_t>()};
  }
  w.embed_freqs = j.at("embedding_frequencies").get<std::size_t>();
  w.sigma_min = j.at("sigma").at("min").get<double>();
  w.sigma_max = j.at("sigma").at("max").get<double>();
  w.z_bound = j.at("z_bound").get<std::int32_t>();
  w.symbol_bound = j.at("symbol_bound").get<std::int32_t>();
}

}  // namespace

Bytes serialize_weights(const ModelWeights& w) {
  Bytes out;
  ByteWriter wr(out);
  wr.text({kMagic, kMagicLen});
  wr.u32(kWeightsVersion);
  const std::string meta = metadata(w).dump();
  wr.u64(meta.size());
  wr.text(meta);
  wr.u32(static_cast<std::uint32_t>(w.tensors.size()));
  for (const auto& [name, t] : w.tensors) {
    if (name.size() > 0xFFFF) fail(ErrorKind::Serialization, "tensor name too long");
    wr.u16(static_cast<std::uint16_t>(name.size()));
    wr.text(name);
    wr.u8(static_cast<std::uint8_t>(t.shape.size()));
    for (auto d : t.shape) wr.u64(d);
    wr.u8(static_cast<std::uint8_t>(t.dtype));
    const std::size_t n = t.dtype == Tensor::DType::F32 ? t.f32.size() : t.u32.size();
    if (n != t.elements()) fail(ErrorKind::Serialization, "tensor " + name + " data does not match its shape");
    wr.u64(n * 4);
    if (t.dtype == Tensor::DType::F32) {
      wr.bytes({reinterpret_cast<const std::uint8_t*>(t.f32.data()), n * 4});
    } else {
      wr.bytes({reinterpret_cast<const std::uint8_t*>(t.u32.data()), n * 4});
    }
  }
  return out;
}

ModelWeights load_weights(ByteView bytes) {
  ByteReader rd(bytes, "weights container");
  if (bytes.size() < kMagicLen || std::memcmp(bytes.data(), kMagic, kMagicLen) != 0) {
    fail(ErrorKind::Format, "not a weights container (bad magic)");
  }
  rd.bytes(kMagicLen);
  const std::uint32_t version = rd.u32();
  if (version != kWeightsVersion) {
    fail(ErrorKind::Weights, "weights container version " + std::to_string(version) + " is not supported (expected " +
                                 std::to_string(kWeightsVersion) + ")");
  }
  const std::uint64_t meta_len = rd.u64();
  if (meta_len > rd.remaining()) fail(ErrorKind::Truncation, "weights metadata runs past the end of the file");
  const std::string meta = rd.text(static_cast<std::size_t>(meta_len));

  ModelWeights w;
  try {
    read_metadata(json::parse(meta), w);
  } catch (const json::exception& e) {
    fail(ErrorKind::Weights, std::string("weights metadata is malformed: ") + e.what());
  }

  const std::uint32_t count = rd.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint16_t name_len = rd.u16();
    const std::string name = rd.text(name_len);
    Tensor t;
    const std::uint8_t rank = rd.u8();
    for (std::uint8_t r = 0; r < rank; ++r) t.shape.push_back(rd.u64());
    const std::uint8_t dtype = rd.u8();
    if (dtype > 1) fail(ErrorKind::Weights, "tensor " + name + " has unknown dtype " + std::to_string(dtype));
    t.dtype = static_cast<Tensor::DType>(dtype);
    const std::uint64_t byte_len = rd.u64();
    std::uint64_t elements = 1;
    for (auto d : t.shape) {
      if (d != 0 && elements > (std::uint64_t{1} << 40) / d) {
        fail(ErrorKind::Corruption, "tensor " + name + " has an implausible shape");
      }
      elements *= d;
    }
    if (byte_len != elements * 4) {
      fail(ErrorKind::Corruption, "tensor " + name + " holds " + std::to_string(byte_len) + " bytes but its shape " +
                                      shape_text(t.shape) + " needs " + std::to_string(elements * 4));
    }
    ByteView data = rd.bytes(static_cast<std::size_t>(byte_len));
    if (t.dtype == Tensor::DType::F32) {
      t.f32.resize(elements);
      std::memcpy(t.f32.data(), data.data(), data.size());
    } else {
      t.u32.resize(elements);
      std::memcpy(t.u32.data(), data.data(), data.size());
    }
    if (!w.tensors.emplace(name, std::move(t)).second) fail(ErrorKind::Weights, "duplicate tensor " + name);
  }
  if (!rd.at_end()) fail(ErrorKind::Format, "weights container has trailing bytes");
  finalize_weights(w);
  return w;
}

void finalize_weights(ModelWeights& w) {
  const auto errors = validate_weights(w);
  if (!errors.empty()) {
    std::string msg = "weights failed validation (" + std::to_string(errors.size()) + " problems):";
    for (const auto& e : errors) msg += "\n  " + e;
    fail(ErrorKind::Weights, msg);
  }
  for (const auto& [name, t] : w.tensors) {
    if (t.dtype != Tensor::DType::F32) continue;
    for (float v : t.f32) {
      if (!std::isfinite(v)) fail(ErrorKind::Weights, "tensor " + name + " has a non-finite value");
    }
  }

  w.mlps.clear();
  for (const auto& [name, layers] : w.nets) {
    std::vector<std::vector<double>> ws, bs;
    bool complete = true;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      auto wt = w.tensors.find(layer_tensor(name, l, "weight"));
      auto bt = w.tensors.find(layer_tensor(name, l, "bias"));
      if (wt == w.tensors.end() || bt == w.tensors.end()) {
        complete = false;
        break;
      }
      ws.emplace_back(wt->second.f32.begin(), wt->second.f32.end());
      bs.emplace_back(bt->second.f32.begin(), bt->second.f32.end());
    }
    if (complete) w.mlps.emplace(name, Mlp(layers, std::move(ws), std::move(bs)));
  }

  for (auto kind : kStreams) {
    const StreamSpec& s = w.stream(kind);
    const int i = static_cast<int>(kind);
    FactorizedPrior& p = w.priors[i];
    p.bound = w.z_bound;
    p.channels = s.z_dim;
    p.cum = w.tensors.at(s.name + ".zprior").u32;
    try {
      p.validate();
    } catch (const Error& e) {
      fail(ErrorKind::Weights, s.name + ".zprior: " + e.what());
    }
    if (s.has_intra()) {
      const auto& t = w.tensors.at(s.name + ".chunk0").f32;
      w.chunk0[i].assign(t.begin(), t.end());
    }
  }

  const Bytes bytes = serialize_weights(w);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1 || len < 16) {
    fail(ErrorKind::Internal, "SHA-256 failed");
  }
  std::memcpy(w.fingerprint.data(), digest, 16);
}

}  // namespace fcgs
