#include "fcgs/mlp.hpp"

#include <algorithm>
#include <cmath>

#include "fcgs/error.hpp"

namespace fcgs {

std::string to_tag(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::Relu: return "relu";
    case Activation::LeakyRelu: return "leaky_relu0.2";
    case Activation::GeluTanh: return "gelu-tanh-approx";
    case Activation::Sigmoid: return "sigmoid";
  }
  return "identity";
}

Activation activation_from_tag(const std::string& tag) {
  for (auto a : {Activation::Identity, Activation::Relu, Activation::LeakyRelu, Activation::GeluTanh,
                 Activation::Sigmoid}) {
    if (to_tag(a) == tag) return a;
  }
  fail(ErrorKind::Weights, "unknown activation tag \"" + tag + "\"");
}

double activate(Activation a, double x) {
  switch (a) {
    case Activation::Identity: return x;
    case Activation::Relu: return x > 0.0 ? x : 0.0;
    case Activation::LeakyRelu: return x > 0.0 ? x : 0.2 * x;
    case Activation::GeluTanh: {
      constexpr double c = 0.79788456080286535588;  // sqrt(2 / pi)
      return 0.5 * x * (1.0 + std::tanh(c * (x + 0.044715 * x * x * x)));
    }
    case Activation::Sigmoid: return 1.0 / (1.0 + std::exp(-x));
  }
  return x;
}

Mlp::Mlp(std::vector<LayerSpec> specs, std::vector<std::vector<double>> weights,
         std::vector<std::vector<double>> biases) {
  if (specs.empty()) fail(ErrorKind::Weights, "network has no layers");
  for (std::size_t l = 0; l < specs.size(); ++l) {
    Layer layer;
    layer.spec = specs[l];
    const std::size_t in = specs[l].in, out = specs[l].out;
    if (l > 0 && specs[l - 1].out != in) fail(ErrorKind::Weights, "layer widths do not chain");
    if (weights[l].size() != in * out || biases[l].size() != out) {
      fail(ErrorKind::Weights, "layer tensor sizes do not match the layer spec");
    }
    layer.weight = std::move(weights[l]);
    layer.bias = std::move(biases[l]);
    layer.row_kind.resize(in);
    layer.sparse_begin.assign(in + 1, 0);
    for (std::size_t k = 0; k < in; ++k) {
      const double* row = layer.weight.data() + k * out;
      std::size_t nnz = 0;
      for (std::size_t j = 0; j < out; ++j) nnz += row[j] != 0.0 ? 1 : 0;
      if (nnz == 0) {
        layer.row_kind[k] = 0;
      } else if (nnz * 4 <= out) {
        layer.row_kind[k] = 1;
        for (std::size_t j = 0; j < out; ++j) {
          if (row[j] != 0.0) {
            layer.sparse_col.push_back(static_cast<std::uint32_t>(j));
            layer.sparse_val.push_back(row[j]);
          }
        }
      } else {
        layer.row_kind[k] = 2;
      }
      layer.sparse_begin[k + 1] = static_cast<std::uint32_t>(layer.sparse_col.size());
    }
    widest_ = std::max({widest_, in, out});
    layers_.push_back(std::move(layer));
  }
}

namespace {

// y[r] = b + x[r] W for up to four rows at once, accumulating in ascending k.
void affine(const Mlp::Layer& L, const double* x, std::size_t rows, double* y) {
  const std::size_t in = L.spec.in, out = L.spec.out;
  for (std::size_t r = 0; r < rows; ++r) std::copy(L.bias.begin(), L.bias.end(), y + r * out);

  std::size_t r0 = 0;
  for (; r0 + 4 <= rows; r0 += 4) {
    const double* x0 = x + r0 * in;
    const double* x1 = x0 + in;
    const double* x2 = x1 + in;
    const double* x3 = x2 + in;
    double* y0 = y + r0 * out;
    double* y1 = y0 + out;
    double* y2 = y1 + out;
    double* y3 = y2 + out;
    for (std::size_t k = 0; k < in; ++k) {
      const std::uint8_t kind = L.row_kind[k];
      if (kind == 0) continue;
      const double a0 = x0[k], a1 = x1[k], a2 = x2[k], a3 = x3[k];
      if (kind == 2) {
        const double* w = L.weight.data() + k * out;
        for (std::size_t j = 0; j < out; ++j) {
          const double wj = w[j];
          y0[j] += a0 * wj;
          y1[j] += a1 * wj;
          y2[j] += a2 * wj;
          y3[j] += a3 * wj;
        }
      } else {
        for (std::uint32_t s = L.sparse_begin[k]; s < L.sparse_begin[k + 1]; ++s) {
          const std::uint32_t j = L.sparse_col[s];
          const double wj = L.sparse_val[s];
          y0[j] += a0 * wj;
          y1[j] += a1 * wj;
          y2[j] += a2 * wj;
          y3[j] += a3 * wj;
        }
      }
    }
  }
  for (; r0 < rows; ++r0) {
    const double* xr = x + r0 * in;
    double* yr = y + r0 * out;
    for (std::size_t k = 0; k < in; ++k) {
      const std::uint8_t kind = L.row_kind[k];
      if (kind == 0) continue;
      const double a = xr[k];
      if (kind == 2) {
        const double* w = L.weight.data() + k * out;
        for (std::size_t j = 0; j < out; ++j) yr[j] += a * w[j];
      } else {
        for (std::uint32_t s = L.sparse_begin[k]; s < L.sparse_begin[k + 1]; ++s) {
          yr[L.sparse_col[s]] += a * L.sparse_val[s];
        }
      }
    }
  }
}

void apply_activation(Activation act, double* y, std::size_t n) {
  switch (act) {
    case Activation::Identity: return;
    case Activation::Relu:
      for (std::size_t i = 0; i < n; ++i) y[i] = y[i] > 0.0 ? y[i] : 0.0;
      return;
    default:
      for (std::size_t i = 0; i < n; ++i) y[i] = activate(act, y[i]);
  }
}

constexpr std::size_t kBlockRows = 32;

}  // namespace

void Mlp::forward(const double* x, std::size_t rows, double* y) const {
  std::vector<double> a(kBlockRows * widest_), b(kBlockRows * widest_);
  for (std::size_t r0 = 0; r0 < rows; r0 += kBlockRows) {
    const std::size_t n = std::min(kBlockRows, rows - r0);
    const double* src = x + r0 * in();
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const Layer& L = layers_[l];
      const bool last = l + 1 == layers_.size();
      double* dst = last ? y + r0 * out() : (l % 2 == 0 ? a.data() : b.data());
      affine(L, src, n, dst);
      apply_activation(L.spec.act, dst, n * L.spec.out);
      src = dst;
    }
  }
}

Matrix Mlp::forward(const Matrix& x) const {
  if (x.cols != in()) {
    fail(ErrorKind::InvalidArgument, "network input width " + std::to_string(in()) + " but got " +
                                         std::to_string(x.cols));
  }
  Matrix y(x.rows, out());
  forward(x.data.data(), x.rows, y.data.data());
  return y;
}

}  // namespace fcgs
