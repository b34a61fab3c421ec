#include <cmath>

#include "check.hpp"
#include "fcgs/neural.hpp"
#include "fcgs/ply.hpp"
#include "fcgs/weights.hpp"

using namespace fcgs;

namespace {

const ModelWeights& compact() {
  static const ModelWeights w = gen_test_weights(5, {.compact = true});
  return w;
}

}  // namespace

TEST_CASE("weights survive serialization with the same fingerprint") {
  const ModelWeights& w = compact();
  const Bytes bytes = serialize_weights(w);
  const ModelWeights back = load_weights(bytes);
  CHECK(back.fingerprint == w.fingerprint);
  CHECK(serialize_weights(back) == bytes);
  CHECK(back.nets.size() == w.nets.size());
  CHECK(back.q_col0 == w.q_col0);
  CHECK(to_hex(w.fingerprint).size() == 32);
}

TEST_CASE("generated weights are deterministic per seed") {
  CHECK(gen_test_weights(5, {.compact = true}).fingerprint == compact().fingerprint);
  CHECK(gen_test_weights(6, {.compact = true}).fingerprint != compact().fingerprint);
}

TEST_CASE("changing one tensor value changes the fingerprint") {
  ModelWeights w = compact();
  w.tensors.at("geo.h_a.0.bias").f32[0] += 1.0f;
  finalize_weights(w);
  CHECK(w.fingerprint != compact().fingerprint);
}

TEST_CASE("default profile structure") {
  const ModelWeights& w = compact();
  const auto& geo = w.stream(StreamKind::Geo);
  const auto& c0 = w.stream(StreamKind::Col0);
  const auto& c1 = w.stream(StreamKind::Col1);
  CHECK(geo.y_dim == 8);
  CHECK(geo.z_dim == 16);
  CHECK(geo.n_chunks == 1);
  CHECK(geo.sources == 2);
  CHECK_FALSE(geo.uses_transform);
  CHECK(c0.y_dim == 48);
  CHECK(c0.z_dim == 24);
  CHECK(c0.n_chunks == 3);
  CHECK(c0.sources == 3);
  CHECK_FALSE(c0.uses_transform);
  CHECK(c1.x_dim == 48);
  CHECK(c1.y_dim == 256);
  CHECK(c1.z_dim == 64);
  CHECK(c1.n_chunks == 4);
  CHECK(c1.sources == 3);
  CHECK(c1.uses_transform);
  CHECK(w.res_3d == std::array<std::size_t, 3>{70, 80, 90});
  CHECK(w.res_2d == std::array<std::size_t, 3>{300, 400, 500});
  CHECK(w.ratios[0].num * 6 == w.ratios[0].den);
  CHECK(w.ratios[3].num * 3 == w.ratios[3].den);
  CHECK(w.eps_m == 0.01);
  CHECK(w.mlp("col1.g_a").depth() == 4);
  CHECK(w.mlp("col1.g_s").depth() == 4);
  CHECK(w.mlp("geo.h_a").depth() == 3);
  CHECK(w.mlp("col0.h_s").depth() == 3);
  CHECK(w.mlp("col1.mlp_s").in() == 12 * 256 + 48);
  CHECK(w.mlp("col1.mlp_c").out() == 3 * 64);
  CHECK(w.mlp("col0.mlp_c").in() == 2 * 16 + 3);
  CHECK_FALSE(w.has_mlp("geo.mlp_c"));
  CHECK_FALSE(w.has_mlp("col0.g_a"));
  CHECK(validate_weights(w).empty());
}

TEST_CASE("validation lists every problem") {
  ModelWeights w = compact();
  w.q_geo[3] = 0.0;
  w.eps_m = 0.5;
  w.res_3d[1] = 81;
  const auto errors = validate_weights(w);
  CHECK(errors.size() == 3);
  CHECK_FAILS_MENTIONING(finalize_weights(w), ErrorKind::Weights, "q_geo");
}

TEST_CASE("missing and misshapen tensors are weights errors") {
  {
    ModelWeights w = compact();
    w.tensors.erase("col1.g_s.2.weight");
    CHECK_FAILS_MENTIONING(finalize_weights(w), ErrorKind::Weights, "col1.g_s.2.weight");
  }
  {
    ModelWeights w = compact();
    w.nets["geo.h_a"].pop_back();
    CHECK_FAILS_MENTIONING(finalize_weights(w), ErrorKind::Weights, "geo.h_a");
  }
  {
    ModelWeights w = compact();
    w.streams[2].n_chunks = 3;
    CHECK_FAILS_WITH(finalize_weights(w), ErrorKind::Weights);
  }
  {
    ModelWeights w = compact();
    w.streams[0].sources = 3;
    CHECK_FAILS_MENTIONING(finalize_weights(w), ErrorKind::Weights, "mixture sources");
  }
}

TEST_CASE("container framing errors") {
  const Bytes good = serialize_weights(compact());
  {
    Bytes b = good;
    b[0] = 'X';
    CHECK_FAILS_WITH(load_weights(b), ErrorKind::Format);
  }
  {
    Bytes b = good;
    b[7] = 2;  // version
    CHECK_FAILS_MENTIONING(load_weights(b), ErrorKind::Weights, "version 2");
  }
  {
    Bytes b = good;
    b.push_back(0);
    CHECK_FAILS_WITH(load_weights(b), ErrorKind::Format);
  }
  {
    Bytes b(good.begin(), good.end() - 3);
    CHECK_FAILS_WITH(load_weights(b), ErrorKind::Truncation);
  }
}

TEST_CASE("test mask network thresholds opacity at 1/128") {
  const ModelWeights& w = compact();
  const float t = 1.0f / 128;
  const std::vector<float> opacities = {t, std::nextafter(t, 0.0f), std::nextafter(t, 1.0f), -5.0f, 0.0f, 3.0f,
                                        1e-30f, 0.5f};
  Matrix f(opacities.size(), kGauDim);
  for (std::size_t i = 0; i < opacities.size(); ++i) {
    f(i, 0) = opacities[i];
    for (std::size_t j = 1; j < kGauDim; ++j) f(i, j) = std::sin(double(i * 7 + j));
  }
  const MaskResult m = compute_masks(w, f);
  for (std::size_t i = 0; i < opacities.size(); ++i) {
    CAPTURE(opacities[i]);
    CHECK(m.bits[i] == (opacities[i] >= t ? 1 : 0));
  }
}

TEST_CASE("test transforms pass colours through") {
  const ModelWeights& w = compact();
  Matrix x(20, 48);
  for (std::size_t i = 0; i < x.data.size(); ++i) x.data[i] = 0.5 * std::sin(0.37 * double(i));
  const Matrix y = apply_transform(w, Transform::Analysis, StreamKind::Col1, x);
  REQUIRE(y.cols == 256);
  const Matrix back = apply_transform(w, Transform::Synthesis, StreamKind::Col1, y);
  REQUIRE(back.cols == 48);
  for (std::size_t i = 0; i < x.data.size(); ++i) CHECK(std::abs(back.data[i] - x.data[i]) < 0.01);
  CHECK_FAILS_WITH(apply_transform(w, Transform::Analysis, StreamKind::Geo, Matrix(1, 8)), ErrorKind::InvalidArgument);
}
