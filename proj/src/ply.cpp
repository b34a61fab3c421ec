#include "fcgs/ply.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

namespace fcgs {

namespace {

// Where an on-disk scalar lands.
enum class Target { Position, Normal, Geo, Col };

struct Slot {
  Target target;
  std::size_t column;
};

// Canonical property order of the reference 3DGS exporter.
const std::vector<std::string>& canonical_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n = {"x", "y", "z", "nx", "ny", "nz"};
    for (int i = 0; i < 3; ++i) n.push_back("f_dc_" + std::to_string(i));
    for (int i = 0; i < 45; ++i) n.push_back("f_rest_" + std::to_string(i));
    n.push_back("opacity");
    for (int i = 0; i < 3; ++i) n.push_back("scale_" + std::to_string(i));
    for (int i = 0; i < 4; ++i) n.push_back("rot_" + std::to_string(i));
    return n;
  }();
  return names;
}

std::optional<Slot> slot_for(const std::string& name) {
  static const std::unordered_map<std::string, Slot> table = [] {
    std::unordered_map<std::string, Slot> t;
    t["x"] = {Target::Position, 0};
    t["y"] = {Target::Position, 1};
    t["z"] = {Target::Position, 2};
    t["nx"] = {Target::Normal, 0};
    t["ny"] = {Target::Normal, 1};
    t["nz"] = {Target::Normal, 2};
    for (std::size_t i = 0; i < 3; ++i) t["f_dc_" + std::to_string(i)] = {Target::Col, 16 * i};
    for (std::size_t r = 0; r < 45; ++r) {
      t["f_rest_" + std::to_string(r)] = {Target::Col, 16 * (r / 15) + 1 + r % 15};
    }
    t["opacity"] = {Target::Geo, 0};
    for (std::size_t i = 0; i < 3; ++i) t["scale_" + std::to_string(i)] = {Target::Geo, 1 + i};
    for (std::size_t i = 0; i < 4; ++i) t["rot_" + std::to_string(i)] = {Target::Geo, 4 + i};
    return t;
  }();
  auto it = table.find(name);
  if (it == table.end()) return std::nullopt;
  return it->second;
}

std::string header_text(std::size_t n) {
  std::string h = "ply\nformat binary_little_endian 1.0\nelement vertex " + std::to_string(n) + "\n";
  for (const auto& name : canonical_names()) h += "property float " + name + "\n";
  h += "end_header\n";
  return h;
}

std::vector<std::string> split_words(const std::string& line) {
  std::istringstream ss(line);
  std::vector<std::string> words;
  for (std::string w; ss >> w;) words.push_back(w);
  return words;
}

[[noreturn]] void bad_line(std::size_t number, const std::string& line, const std::string& why) {
  fail(ErrorKind::Format, "PLY header line " + std::to_string(number) + " \"" + line + "\": " + why);
}

}  // namespace

Matrix GaussianCloud::f_gau() const {
  Matrix out(size(), kGauDim);
  for (std::size_t i = 0; i < size(); ++i) {
    auto dst = out.row(i);
    std::copy_n(f_geo.row(i).begin(), kGeoDim, dst.begin());
    std::copy_n(f_col.row(i).begin(), kColDim, dst.begin() + kGeoDim);
  }
  return out;
}

void GaussianCloud::validate() const {
  const std::size_t n = positions.rows;
  if (n == 0) fail(ErrorKind::InvalidArgument, "Gaussian cloud is empty");
  if (positions.cols != 3 || f_geo.rows != n || f_geo.cols != kGeoDim || f_col.rows != n ||
      f_col.cols != kColDim) {
    fail(ErrorKind::InvalidArgument, "Gaussian cloud arrays have inconsistent shapes");
  }
  for (const Matrix* m : {&positions, &f_geo, &f_col}) {
    for (std::size_t i = 0; i < m->data.size(); ++i) {
      if (!std::isfinite(m->data[i])) {
        fail(ErrorKind::InvalidArgument,
             "Gaussian " + std::to_string(i / m->cols) + " has a non-finite attribute");
      }
    }
  }
}

std::size_t ply_header_size(std::size_t n) { return header_text(n).size(); }

GaussianCloud parse_ply(ByteView bytes) {
  // Header: newline-terminated ASCII lines up to and including "end_header".
  std::size_t pos = 0;
  std::size_t line_no = 0;
  std::optional<std::size_t> count;
  std::vector<std::string> props;
  bool ended = false;
  bool seen_format = false;

  while (!ended) {
    auto nl = std::find(bytes.begin() + pos, bytes.end(), '\n');
    if (nl == bytes.end()) fail(ErrorKind::Format, "PLY header is not terminated by end_header");
    std::string line(bytes.begin() + pos, nl);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    pos = static_cast<std::size_t>(nl - bytes.begin()) + 1;
    ++line_no;

    const auto words = split_words(line);
    if (line_no == 1) {
      if (line != "ply") bad_line(line_no, line, "expected magic \"ply\"");
      continue;
    }
    if (words.empty()) bad_line(line_no, line, "empty header line");
    const std::string& key = words[0];
    if (key == "comment" || key == "obj_info") continue;
    if (key == "format") {
      if (words.size() != 3 || words[1] != "binary_little_endian" || words[2] != "1.0") {
        bad_line(line_no, line, "only binary_little_endian 1.0 is supported");
      }
      seen_format = true;
    } else if (key == "element") {
      if (words.size() != 3) bad_line(line_no, line, "malformed element line");
      if (words[1] != "vertex") bad_line(line_no, line, "only a single vertex element is supported");
      if (count) bad_line(line_no, line, "duplicate vertex element");
      std::size_t used = 0;
      unsigned long long v = 0;
      try {
        v = std::stoull(words[2], &used);
      } catch (const std::exception&) {
        bad_line(line_no, line, "vertex count is not an integer");
      }
      if (used != words[2].size()) bad_line(line_no, line, "vertex count is not an integer");
      count = static_cast<std::size_t>(v);
    } else if (key == "property") {
      if (!count) bad_line(line_no, line, "property before element");
      if (words.size() != 3) bad_line(line_no, line, "malformed property line");
      if (words[1] != "float" && words[1] != "float32") {
        bad_line(line_no, line, "property type must be float");
      }
      if (std::find(props.begin(), props.end(), words[2]) != props.end()) {
        bad_line(line_no, line, "duplicate property");
      }
      props.push_back(words[2]);
    } else if (key == "end_header") {
      if (words.size() != 1) bad_line(line_no, line, "trailing tokens after end_header");
      ended = true;
    } else {
      bad_line(line_no, line, "unknown header keyword");
    }
  }
  if (!seen_format) fail(ErrorKind::Format, "PLY header has no format line");
  if (!count) fail(ErrorKind::Format, "PLY header has no vertex element");

  // Schema: every property maps to a slot, every required slot present.
  std::vector<Slot> slots;
  std::vector<std::string> unknown;
  for (const auto& p : props) {
    if (auto s = slot_for(p)) {
      slots.push_back(*s);
    } else {
      unknown.push_back(p);
    }
  }
  std::vector<std::string> missing;
  for (const auto& name : canonical_names()) {
    if (name == "nx" || name == "ny" || name == "nz") continue;
    if (std::find(props.begin(), props.end(), name) == props.end()) missing.push_back(name);
  }
  if (!missing.empty() || !unknown.empty()) {
    std::string msg = "PLY vertex schema mismatch;";
    if (!missing.empty()) {
      msg += " missing properties:";
      for (const auto& m : missing) msg += " " + m;
      msg += ";";
    }
    if (!unknown.empty()) {
      msg += " unexpected properties:";
      for (const auto& u : unknown) msg += " " + u;
    }
    fail(ErrorKind::Schema, msg);
  }
  if (*count == 0) fail(ErrorKind::Format, "PLY vertex count is 0");

  const std::size_t stride = props.size() * 4;
  const std::size_t body = bytes.size() - pos;
  if (*count > body / stride) {
    fail(ErrorKind::Truncation, "PLY declares " + std::to_string(*count) + " vertices but holds " +
                                    std::to_string(body / stride));
  }
  if (body != *count * stride) {
    fail(ErrorKind::Format, "PLY has " + std::to_string(body - *count * stride) +
                                " trailing bytes after the vertex data");
  }

  GaussianCloud cloud(*count);
  const std::uint8_t* src = bytes.data() + pos;
  for (std::size_t i = 0; i < *count; ++i) {
    for (std::size_t p = 0; p < slots.size(); ++p, src += 4) {
      float v;
      std::memcpy(&v, src, 4);
      if (!std::isfinite(v)) {
        fail(ErrorKind::Format, "PLY vertex " + std::to_string(i) + " property " + props[p] +
                                    " is not finite");
      }
      const Slot& s = slots[p];
      switch (s.target) {
        case Target::Position: cloud.positions(i, s.column) = v; break;
        case Target::Geo: cloud.f_geo(i, s.column) = v; break;
        case Target::Col: cloud.f_col(i, s.column) = v; break;
        case Target::Normal: break;
      }
    }
  }
  return cloud;
}

Bytes write_ply(const GaussianCloud& cloud) {
  const std::size_t n = cloud.size();
  if (n == 0) fail(ErrorKind::Serialization, "cannot write an empty Gaussian cloud");
  const std::string header = header_text(n);
  Bytes out;
  out.reserve(header.size() + n * kPlyScalars * 4);
  out.insert(out.end(), header.begin(), header.end());

  const auto& names = canonical_names();
  std::vector<Slot> slots;
  for (const auto& name : names) slots.push_back(*slot_for(name));

  constexpr double kFloatMax = std::numeric_limits<float>::max();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < slots.size(); ++p) {
      double v = 0.0;
      switch (slots[p].target) {
        case Target::Position: v = cloud.positions(i, slots[p].column); break;
        case Target::Geo: v = cloud.f_geo(i, slots[p].column); break;
        case Target::Col: v = cloud.f_col(i, slots[p].column); break;
        case Target::Normal: v = 0.0; break;
      }
      if (!std::isfinite(v) || std::fabs(v) > kFloatMax) {
        fail(ErrorKind::Serialization, "Gaussian " + std::to_string(i) + " property " + names[p] +
                                           " is not representable as a finite float");
      }
      const auto f = static_cast<float>(v);
      const auto* b = reinterpret_cast<const std::uint8_t*>(&f);
      out.insert(out.end(), b, b + 4);
    }
  }
  return out;
}

SceneBBox scan_bbox(const Matrix& positions) {
  if (positions.rows == 0) fail(ErrorKind::InvalidArgument, "bounding box of an empty cloud");
  SceneBBox box;
  for (int a = 0; a < 3; ++a) box.min[a] = box.max[a] = positions(0, a);
  for (std::size_t i = 1; i < positions.rows; ++i) {
    for (int a = 0; a < 3; ++a) {
      box.min[a] = std::min(box.min[a], positions(i, a));
      box.max[a] = std::max(box.max[a], positions(i, a));
    }
  }
  return box;
}

SceneBBox pad_degenerate(SceneBBox box) {
  for (int a = 0; a < 3; ++a) {
    if (!(box.max[a] > box.min[a])) box.max[a] = box.min[a] + kDegenerateExtent;
  }
  return box;
}

SceneBBox compute_bbox(const GaussianCloud& cloud) { return pad_degenerate(scan_bbox(cloud.positions)); }

}  // namespace fcgs
