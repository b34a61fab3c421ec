#include <cstring>

#include "check.hpp"
#include "fcgs/container.hpp"

using namespace fcgs;

namespace {

ContainerHeader header() {
  ContainerHeader h;
  h.count = 1000;
  h.chunk_size = 600;
  h.seed = 0xDEADBEEF12345678ULL;
  h.bbox.min = {-1.5, 0.0, 2.0};
  h.bbox.max = {1.5, 0.25, 9.0};
  for (std::size_t i = 0; i < h.fingerprint.size(); ++i) h.fingerprint[i] = static_cast<std::uint8_t>(17 * i + 3);
  h.clamp_events = 4;
  h.mask_ones = 250;
  return h;
}

std::vector<Section> sections() {
  std::vector<Section> s;
  s.push_back({{SectionKind::Positions, 0, 0, 0, 0}, Bytes{1, 2, 3}});
  s.push_back({{SectionKind::Mask, 0, 0, 0, 0}, Bytes{}});
  s.push_back({{SectionKind::Hyper, 2, 0, 0, 1}, Bytes(300, 9)});
  s.push_back({{SectionKind::Latent, 1, 3, 2, 1}, Bytes{42}});
  return s;
}

}  // namespace

TEST_CASE("container round trip") {
  const Bytes b = write_container(header(), sections());
  CHECK(b.size() == 117 + 7 + 16 * 4 + 3 + 0 + 300 + 1);
  const Container c = read_container(b);
  const ContainerHeader h = header();
  CHECK(c.header.count == h.count);
  CHECK(c.header.chunk_size == h.chunk_size);
  CHECK(c.header.chunks() == 2);
  CHECK(c.header.seed == h.seed);
  CHECK(c.header.bbox.min == h.bbox.min);
  CHECK(c.header.bbox.max == h.bbox.max);
  CHECK(c.header.fingerprint == h.fingerprint);
  CHECK(c.header.profile == "default");
  CHECK(c.header.clamp_events == 4);
  CHECK(c.header.mask_ones == 250);
  CHECK(c.header_bytes == 117 + 7 + 16 * 4);
  REQUIRE(c.sections.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(c.sections[i].id == sections()[i].id);
    CHECK(c.sections[i].data == sections()[i].data);
  }
  CHECK(c.warnings.empty());
}

TEST_CASE("section names") {
  CHECK(describe({SectionKind::Latent, 2, 1, 3, 7}) == "chunk 7 latents (col1, batch 1, channel chunk 3)");
  CHECK(describe({SectionKind::Hyper, 0, 0, 0, 0}) == "chunk 0 hyper-latents (geo)");
  CHECK(describe({SectionKind::Mask, 0, 0, 0, 2}) == "chunk 2 mask");
}

TEST_CASE("unknown section kinds are kept with a warning") {
  auto s = sections();
  s.push_back({{static_cast<SectionKind>(9), 0, 0, 0, 0}, Bytes{5, 5}});
  const Container c = read_container(write_container(header(), s));
  REQUIRE(c.warnings.size() == 1);
  CHECK(c.warnings[0].find("unknown") != std::string::npos);
  CHECK(c.sections.size() == 5);
}

TEST_CASE("container errors") {
  const Bytes good = write_container(header(), sections());
  {
    Bytes b = good;
    b[2] = 'x';
    CHECK_FAILS_WITH(read_container(b), ErrorKind::Format);
  }
  {
    Bytes b = good;
    b[6] = 2;  // version
    CHECK_FAILS_MENTIONING(read_container(b), ErrorKind::Format, "version");
  }
  {
    Bytes b = good;
    std::memset(b.data() + 8, 0, 8);  // count
    CHECK_FAILS_WITH(read_container(b), ErrorKind::Format);
  }
  {
    Bytes b(good.begin(), good.end() - 1);
    CHECK_FAILS_WITH(read_container(b), ErrorKind::Truncation);
  }
  {
    Bytes b(good.begin(), good.begin() + 50);
    CHECK_FAILS_WITH(read_container(b), ErrorKind::Truncation);
  }
  {
    Bytes b = good;
    b.push_back(0);
    CHECK_FAILS_WITH(read_container(b), ErrorKind::Format);
  }
  {
    ContainerHeader h = header();
    h.bbox.max[1] = h.bbox.min[1];
    CHECK_FAILS_MENTIONING(read_container(write_container(h, sections())), ErrorKind::Format, "bounding box");
  }
  {
    ContainerHeader h = header();
    h.mask_ones = 1001;
    CHECK_FAILS_WITH(read_container(write_container(h, sections())), ErrorKind::Format);
  }
  {
    ContainerHeader h = header();
    h.count = 0;
    CHECK_FAILS_WITH(write_container(h, sections()), ErrorKind::Serialization);
  }
}

TEST_CASE("fingerprint check names both values") {
  ModelWeights w;
  const ContainerHeader h = header();
  CHECK_FAILS_MENTIONING(check_fingerprint(h, w), ErrorKind::Fingerprint, to_hex(h.fingerprint));
  w.fingerprint = h.fingerprint;
  CHECK_NOTHROW(check_fingerprint(h, w));
}
