#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fcgs/matrix.hpp"
#include "fcgs/weights.hpp"

namespace fcgs {

// Integer symbols with per-channel steps; value = symbol * step[channel].
struct SymbolArray {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::int16_t> data;
  std::vector<double> step;

  SymbolArray() = default;
  SymbolArray(std::size_t r, std::size_t c, std::vector<double> s)
      : rows(r), cols(c), data(r * c, 0), step(std::move(s)) {}

  std::int16_t& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  std::int16_t operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

// Round half away from zero, clamp to +-kSymbolBound.
std::int32_t quantize_value(double value, double step, std::size_t* clamps = nullptr);

// Throws InvalidArgument on non-finite values or non-positive steps.
// `clamps` (optional) accumulates the number of clamped elements.
SymbolArray quantize(const Matrix& values, std::span<const double> step, std::size_t* clamps = nullptr);
Matrix dequantize(const SymbolArray& symbols);

struct MaskResult {
  std::vector<std::uint8_t> bits;
  std::vector<double> scores;
};

// score = sigmoid(MLP_m(f_gau)), bit = score > threshold.
MaskResult compute_masks(const ModelWeights& w, const Matrix& f_gau);
MaskResult compute_masks(const Mlp& mask_net, double threshold, const Matrix& f_gau);

enum class Transform { Analysis, Synthesis, HyperAnalysis, HyperSynthesis };

// Analysis/synthesis exist only for streams with uses_transform; the hyper
// transforms exist for all three streams.
Matrix apply_transform(const ModelWeights& w, Transform kind, StreamKind stream, const Matrix& x);

}  // namespace fcgs
