#include <cstdio>
#include <json.hpp>

#include "fcgs/pipeline.hpp"

namespace fcgs {

std::size_t container_header_size(const std::string& profile, std::size_t sections) {
  return 117 + profile.size() + 16 * sections;
}

RateReport build_report(const ContainerHeader& h, const std::vector<std::pair<SectionId, double>>& sizes,
                        double header_bytes, double total) {
  RateReport r;
  r.count = h.count;
  r.count_col1 = h.mask_ones;
  r.count_col0 = h.count - h.mask_ones;
  r.chunks = h.chunks();
  r.header = header_bytes;
  r.total = total;
  for (const auto& [id, bytes] : sizes) {
    if (id.stream >= 3) continue;
    double* stream_total = id.stream == 0 ? &r.geo : id.stream == 1 ? &r.col0 : &r.col1;
    switch (id.kind) {
      case SectionKind::Positions: r.positions += bytes; break;
      case SectionKind::Mask: r.mask += bytes; break;
      case SectionKind::Hyper:
        r.hyper[id.stream] += bytes;
        *stream_total += bytes;
        break;
      case SectionKind::Latent: {
        auto& pb = r.per_batch[id.stream];
        auto& pc = r.per_cchunk[id.stream];
        if (pb.size() <= id.batch) pb.resize(id.batch + 1, 0.0);
        if (pc.size() <= id.cchunk) pc.resize(id.cchunk + 1, 0.0);
        pb[id.batch] += bytes;
        pc[id.cchunk] += bytes;
        *stream_total += bytes;
        break;
      }
    }
  }
  return r;
}

RateReport inspect(ByteView bytes) {
  const Container c = read_container(bytes);
  std::vector<std::pair<SectionId, double>> sizes;
  for (const auto& s : c.sections) sizes.emplace_back(s.id, double(s.data.size()));
  return build_report(c.header, sizes, double(c.header_bytes), double(bytes.size()));
}

namespace {

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

}  // namespace

std::string report_text(const RateReport& r) {
  std::string s;
  s += r.exact ? "size report\n" : "size estimate\n";
  s += fmt("  gaussians    %.0f (%.0f coded with the colour transform, mask rate %.4f)\n", double(r.count),
           double(r.count_col1), r.mask_rate());
  s += fmt("  chunks       %.0f\n", double(r.chunks));
  s += fmt("  positions    %12.1f B  %8.4f bits/coord\n", r.positions, r.bits_positions());
  s += fmt("  col1         %12.1f B  %8.4f bits/element\n", r.col1, r.bits_col1());
  s += fmt("  col0         %12.1f B  %8.4f bits/element\n", r.col0, r.bits_col0());
  s += fmt("  geo          %12.1f B  %8.4f bits/element\n", r.geo, r.bits_geo());
  s += fmt("  mask         %12.1f B  %8.4f bits/gaussian\n", r.mask, r.bits_mask());
  s += fmt("  header       %12.1f B\n", r.header);
  s += fmt("  total        %12.1f B  %8.4f bits/parameter\n", r.total, r.bits_average());
  static const char* names[3] = {"geo", "col0", "col1"};
  for (int k = 0; k < 3; ++k) {
    s += std::string("  ") + names[k] + fmt(" hyper %.1f B; batches", r.hyper[k]);
    for (double b : r.per_batch[k]) s += fmt(" %.1f", b);
    s += "; channel chunks";
    for (double b : r.per_cchunk[k]) s += fmt(" %.1f", b);
    s += "\n";
  }
  if (r.has_times) {
    s += fmt("  time         positions %.3fs  masks %.3fs", r.times.positions, r.times.masks);
    s += fmt("  hyper %.3fs  latents %.3fs  total %.3fs\n", r.times.hyper, r.times.latents, r.times.total);
  }
  return s;
}

std::string report_json(const RateReport& r) {
  nlohmann::json j;
  j["exact"] = r.exact;
  j["count"] = r.count;
  j["count_col1"] = r.count_col1;
  j["count_col0"] = r.count_col0;
  j["mask_rate"] = r.mask_rate();
  j["chunks"] = r.chunks;
  j["bytes"] = {{"positions", r.positions}, {"col1", r.col1}, {"col0", r.col0}, {"geo", r.geo},
                {"mask", r.mask},           {"header", r.header}, {"total", r.total}};
  j["bits"] = {{"positions_per_coord", r.bits_positions()}, {"col1_per_element", r.bits_col1()},
               {"col0_per_element", r.bits_col0()},         {"geo_per_element", r.bits_geo()},
               {"mask_per_gaussian", r.bits_mask()},        {"average_per_parameter", r.bits_average()}};
  static const char* names[3] = {"geo", "col0", "col1"};
  for (int k = 0; k < 3; ++k) {
    j["streams"][names[k]] = {{"hyper", r.hyper[k]}, {"per_batch", r.per_batch[k]}, {"per_cchunk", r.per_cchunk[k]}};
  }
  if (r.has_times) {
    j["seconds"] = {{"positions", r.times.positions}, {"masks", r.times.masks}, {"hyper", r.times.hyper},
                    {"latents", r.times.latents},     {"total", r.times.total}};
  }
  return j.dump(2);
}

}  // namespace fcgs
