#include "fcgs/container.hpp"

#include <cmath>
#include <cstring>

namespace fcgs {

namespace {

constexpr std::size_t kMagicLen = 6;
constexpr std::size_t kEntryBytes = 16;
constexpr std::uint64_t kMaxCount = std::uint64_t{1} << 32;

}  // namespace

std::string describe(const SectionId& id) {
  const std::string chunk = "chunk " + std::to_string(id.chunk) + " ";
  switch (id.kind) {
    case SectionKind::Positions: return chunk + "positions";
    case SectionKind::Mask: return chunk + "mask";
    case SectionKind::Hyper:
      return chunk + "hyper-latents (" + (id.stream < 3 ? stream_name(StreamKind(id.stream)) : "?") + ")";
    case SectionKind::Latent:
      return chunk + "latents (" + (id.stream < 3 ? stream_name(StreamKind(id.stream)) : "?") + ", batch " +
             std::to_string(id.batch) + ", channel chunk " + std::to_string(id.cchunk) + ")";
  }
  return chunk + "section of unknown kind " + std::to_string(static_cast<int>(id.kind));
}

Bytes write_container(const ContainerHeader& h, const std::vector<Section>& sections) {
  if (h.count == 0) fail(ErrorKind::Serialization, "container needs at least one Gaussian");
  if (h.profile.size() > 255) fail(ErrorKind::Serialization, "profile name too long");
  Bytes out;
  ByteWriter w(out);
  w.text({kContainerMagic, kMagicLen});
  w.u16(h.version);
  w.u64(h.count);
  w.u64(h.chunk_size);
  w.u64(h.seed);
  for (double v : h.bbox.min) w.f64(v);
  for (double v : h.bbox.max) w.f64(v);
  w.bytes(h.fingerprint);
  w.u8(static_cast<std::uint8_t>(h.profile.size()));
  w.text(h.profile);
  w.u64(h.clamp_events);
  w.u64(h.mask_ones);
  w.u32(static_cast<std::uint32_t>(sections.size()));
  for (const auto& s : sections) {
    w.u8(static_cast<std::uint8_t>(s.id.kind));
    w.u8(s.id.stream);
    w.u8(s.id.batch);
    w.u8(s.id.cchunk);
    w.u32(s.id.chunk);
    w.u64(s.data.size());
  }
  for (const auto& s : sections) w.bytes(s.data);
  return out;
}

Container read_container(ByteView bytes) {
  ByteReader r(bytes, "container header");
  if (bytes.size() < kMagicLen || std::memcmp(bytes.data(), kContainerMagic, kMagicLen) != 0) {
    fail(ErrorKind::Format, "not an FCGS file (bad magic)");
  }
  r.bytes(kMagicLen);
  Container c;
  ContainerHeader& h = c.header;
  h.version = r.u16();
  if (h.version > kContainerVersion) {
    fail(ErrorKind::Format, "container version " + std::to_string(h.version) + " is newer than supported version " +
                                std::to_string(kContainerVersion));
  }
  if (h.version == 0) fail(ErrorKind::Format, "container version 0 is invalid");
  h.count = r.u64();
  if (h.count == 0) fail(ErrorKind::Format, "container declares zero Gaussians");
  if (h.count > kMaxCount) fail(ErrorKind::Format, "container Gaussian count is implausibly large");
  h.chunk_size = r.u64();
  if (h.chunk_size == 0) fail(ErrorKind::Format, "container chunk size is zero");
  h.seed = r.u64();
  for (auto& v : h.bbox.min) v = r.f64();
  for (auto& v : h.bbox.max) v = r.f64();
  for (int a = 0; a < 3; ++a) {
    if (!std::isfinite(h.bbox.min[a]) || !std::isfinite(h.bbox.max[a]) || !(h.bbox.min[a] < h.bbox.max[a])) {
      fail(ErrorKind::Format, "container bounding box is invalid");
    }
  }
  ByteView fp = r.bytes(h.fingerprint.size());
  std::memcpy(h.fingerprint.data(), fp.data(), fp.size());
  h.profile = r.text(r.u8());
  h.clamp_events = r.u64();
  h.mask_ones = r.u64();
  if (h.mask_ones > h.count) fail(ErrorKind::Format, "container mask count exceeds the Gaussian count");

  const std::uint32_t n = r.u32();
  if (std::uint64_t{n} * kEntryBytes > r.remaining()) fail(ErrorKind::Truncation, "section directory is truncated");
  std::vector<std::pair<SectionId, std::uint64_t>> dir;
  dir.reserve(n);
  std::uint64_t total = 0;
  for (std::uint32_t i = 0; i < n; ++i) {
    SectionId id;
    id.kind = static_cast<SectionKind>(r.u8());
    id.stream = r.u8();
    id.batch = r.u8();
    id.cchunk = r.u8();
    id.chunk = r.u32();
    const std::uint64_t len = r.u64();
    if (len > bytes.size()) fail(ErrorKind::Format, "section " + describe(id) + " length exceeds the file size");
    total += len;
    dir.emplace_back(id, len);
  }
  c.header_bytes = r.position();
  if (total != r.remaining()) {
    fail(total > r.remaining() ? ErrorKind::Truncation : ErrorKind::Format,
         "section lengths add up to " + std::to_string(total) + " bytes but " + std::to_string(r.remaining()) +
             " follow the header");
  }
  for (const auto& [id, len] : dir) {
    if (static_cast<std::uint8_t>(id.kind) > static_cast<std::uint8_t>(SectionKind::Latent)) {
      c.warnings.push_back("ignoring unknown " + describe(id));
    }
    ByteView data = r.bytes(static_cast<std::size_t>(len));
    c.sections.push_back({id, Bytes(data.begin(), data.end())});
  }
  return c;
}

void check_fingerprint(const ContainerHeader& header, const ModelWeights& weights) {
  if (header.fingerprint != weights.fingerprint) {
    fail(ErrorKind::Fingerprint, "weights fingerprint mismatch: file was encoded with " + to_hex(header.fingerprint) +
                                     ", supplied weights are " + to_hex(weights.fingerprint));
  }
}

}  // namespace fcgs
