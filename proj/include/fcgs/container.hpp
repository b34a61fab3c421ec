#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fcgs/bytes.hpp"
#include "fcgs/ply.hpp"
#include "fcgs/weights.hpp"

namespace fcgs {

inline constexpr char kContainerMagic[] = "FCGS01";
inline constexpr std::uint16_t kContainerVersion = 1;

enum class SectionKind : std::uint8_t { Positions = 0, Mask = 1, Hyper = 2, Latent = 3 };

struct SectionId {
  SectionKind kind = SectionKind::Positions;
  std::uint8_t stream = 0;  // Hyper, Latent
  std::uint8_t batch = 0;   // Latent
  std::uint8_t cchunk = 0;  // Latent: channel chunk
  std::uint32_t chunk = 0;  // scene chunk

  bool operator==(const SectionId&) const = default;
};

std::string describe(const SectionId& id);

struct Section {
  SectionId id;
  Bytes data;
};

struct ContainerHeader {
  std::uint16_t version = kContainerVersion;
  std::uint64_t count = 0;
  std::uint64_t chunk_size = std::uint64_t{1} << 20;
  std::uint64_t seed = 0;
  SceneBBox bbox;
  Fingerprint fingerprint{};
  std::string profile = kDefaultProfile;
  std::uint64_t clamp_events = 0;
  std::uint64_t mask_ones = 0;

  std::uint64_t chunks() const { return (count + chunk_size - 1) / chunk_size; }
};

struct Container {
  ContainerHeader header;
  std::vector<Section> sections;
  std::size_t header_bytes = 0;  // fixed header plus section directory
  std::vector<std::string> warnings;
};

Bytes write_container(const ContainerHeader& header, const std::vector<Section>& sections);
// Unknown section kinds are kept and reported in warnings.
Container read_container(ByteView bytes);

// Throws Fingerprint naming both values when the stream was made with other weights.
void check_fingerprint(const ContainerHeader& header, const ModelWeights& weights);

}  // namespace fcgs
