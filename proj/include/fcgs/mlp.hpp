#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "fcgs/matrix.hpp"

namespace fcgs {

enum class Activation { Identity, Relu, LeakyRelu, GeluTanh, Sigmoid };

// Container tags: identity, relu, leaky_relu0.2, gelu-tanh-approx, sigmoid.
std::string to_tag(Activation a);
Activation activation_from_tag(const std::string& tag);  // Throws Weights on unknown tags.
double activate(Activation a, double x);

struct LayerSpec {
  std::size_t in = 0;
  std::size_t out = 0;
  Activation act = Activation::Relu;
};

// Inference-only MLP. Each layer computes act(x W + b) with W stored [in, out].
//
// Every output is accumulated as b[j] + sum_k x[k] W[k][j] in ascending k;
// weight rows that are entirely zero are skipped and short rows are stored
// sparse. The result per row does not depend on how rows are batched.
class Mlp {
 public:
  struct Layer {
    LayerSpec spec;
    std::vector<double> weight;  // in x out
    std::vector<double> bias;    // out
    std::vector<std::uint8_t> row_kind;  // 0 zero, 1 sparse, 2 dense
    std::vector<std::uint32_t> sparse_begin;  // in + 1 offsets into sparse_*
    std::vector<std::uint32_t> sparse_col;
    std::vector<double> sparse_val;
  };

  Mlp() = default;
  // weights[l] is [in, out] row-major, biases[l] has length out.
  Mlp(std::vector<LayerSpec> specs, std::vector<std::vector<double>> weights,
      std::vector<std::vector<double>> biases);

  std::size_t in() const { return layers_.front().spec.in; }
  std::size_t out() const { return layers_.back().spec.out; }
  std::size_t depth() const { return layers_.size(); }
  const std::vector<Layer>& layers() const { return layers_; }

  // False when the first-layer weight row for this input is all zero, i.e.
  // the input never influences the output.
  bool uses_input(std::size_t k) const { return layers_.front().row_kind[k] != 0; }

  Matrix forward(const Matrix& x) const;
  // rows x in() at `x` (row stride in()), result rows x out() at `y`.
  void forward(const double* x, std::size_t rows, double* y) const;

 private:
  std::vector<Layer> layers_;
  std::size_t widest_ = 0;
};

}  // namespace fcgs
