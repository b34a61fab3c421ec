#include "fcgs/neural.hpp"

#include <cmath>

namespace fcgs {

std::int32_t quantize_value(double value, double step, std::size_t* clamps) {
  const double r = std::round(value / step);
  if (std::isnan(r)) fail(ErrorKind::InvalidArgument, "cannot quantize a NaN");
  if (r > kSymbolBound || r < -kSymbolBound) {
    if (clamps) ++*clamps;
    return r > 0 ? kSymbolBound : -kSymbolBound;
  }
  return static_cast<std::int32_t>(r);
}

SymbolArray quantize(const Matrix& values, std::span<const double> step, std::size_t* clamps) {
  if (step.size() != values.cols) fail(ErrorKind::InvalidArgument, "quantize: one step per channel required");
  for (double q : step) {
    if (!(q > 0.0) || !std::isfinite(q)) fail(ErrorKind::InvalidArgument, "quantize: steps must be positive");
  }
  SymbolArray out(values.rows, values.cols, {step.begin(), step.end()});
  for (std::size_t r = 0; r < values.rows; ++r) {
    for (std::size_t c = 0; c < values.cols; ++c) {
      const double v = values(r, c);
      if (!std::isfinite(v)) {
        fail(ErrorKind::InvalidArgument,
             "quantize: non-finite value at row " + std::to_string(r) + ", channel " + std::to_string(c));
      }
      out(r, c) = static_cast<std::int16_t>(quantize_value(v, step[c], clamps));
    }
  }
  return out;
}

Matrix dequantize(const SymbolArray& symbols) {
  Matrix out(symbols.rows, symbols.cols);
  for (std::size_t r = 0; r < symbols.rows; ++r) {
    for (std::size_t c = 0; c < symbols.cols; ++c) out(r, c) = symbols(r, c) * symbols.step[c];
  }
  return out;
}

MaskResult compute_masks(const Mlp& mask_net, double threshold, const Matrix& f_gau) {
  const Matrix logits = mask_net.forward(f_gau);
  MaskResult m;
  m.bits.resize(f_gau.rows);
  m.scores.resize(f_gau.rows);
  for (std::size_t i = 0; i < f_gau.rows; ++i) {
    m.scores[i] = 1.0 / (1.0 + std::exp(-logits(i, 0)));
    m.bits[i] = m.scores[i] > threshold ? 1 : 0;
  }
  return m;
}

MaskResult compute_masks(const ModelWeights& w, const Matrix& f_gau) {
  return compute_masks(w.mlp("mask"), w.eps_m, f_gau);
}

Matrix apply_transform(const ModelWeights& w, Transform kind, StreamKind stream, const Matrix& x) {
  const StreamSpec& s = w.stream(stream);
  const char* suffix = nullptr;
  switch (kind) {
    case Transform::Analysis: suffix = "g_a"; break;
    case Transform::Synthesis: suffix = "g_s"; break;
    case Transform::HyperAnalysis: suffix = "h_a"; break;
    case Transform::HyperSynthesis: suffix = "h_s"; break;
  }
  if ((kind == Transform::Analysis || kind == Transform::Synthesis) && !s.uses_transform) {
    fail(ErrorKind::InvalidArgument, "stream " + s.name + " bypasses the analysis/synthesis transforms");
  }
  return w.mlp(s.name + "." + suffix).forward(x);
}

}  // namespace fcgs
