#include "cdv/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "cdv/error.hpp"

namespace cdv::nn {

Tensor2::Tensor2(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows_ * cols_) {
    throw ShapeError("tensor of shape " + std::to_string(rows_) + "x" +
                     std::to_string(cols_) + " given " +
                     std::to_string(values_.size()) + " values");
  }
}

void Tensor2::fill(double value) { std::fill(values_.begin(), values_.end(), value); }

bool Tensor2::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(),
                     [](double v) { return std::isfinite(v); });
}

std::string shape_string(const Tensor2& t) {
  return std::to_string(t.rows()) + "x" + std::to_string(t.cols());
}

Vector affine(const Tensor2& weight, std::span<const double> x, const Tensor2* bias) {
  check_dims(weight.cols(), x.size(), "affine input");
  if (bias != nullptr) check_dims(weight.rows(), bias->size(), "affine bias");
  Vector y(weight.rows());
  for (std::size_t r = 0; r < weight.rows(); ++r) {
    const double* w = weight.row(r).data();
    double acc = bias != nullptr ? bias->values()[r] : 0.0;
    for (std::size_t c = 0; c < x.size(); ++c) acc += w[c] * x[c];
    y[r] = acc;
  }
  return y;
}

void add_transposed_product(const Tensor2& weight, std::span<const double> dy,
                            std::span<double> dx) {
  check_dims(weight.rows(), dy.size(), "transposed product upstream");
  check_dims(weight.cols(), dx.size(), "transposed product output");
  for (std::size_t r = 0; r < weight.rows(); ++r) {
    const double g = dy[r];
    if (g == 0.0) continue;
    const double* w = weight.row(r).data();
    for (std::size_t c = 0; c < dx.size(); ++c) dx[c] += w[c] * g;
  }
}

void add_outer(Tensor2& grad, std::span<const double> dy, std::span<const double> x) {
  check_dims(grad.rows(), dy.size(), "outer product rows");
  check_dims(grad.cols(), x.size(), "outer product cols");
  for (std::size_t r = 0; r < grad.rows(); ++r) {
    const double g = dy[r];
    if (g == 0.0) continue;
    double* out = grad.row(r).data();
    for (std::size_t c = 0; c < x.size(); ++c) out[c] += g * x[c];
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  check_dims(a.size(), b.size(), "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double l2_norm(std::span<const double> a) {
  double acc = 0.0;
  for (double v : a) acc += v * v;
  return std::sqrt(acc);
}

double cosine(std::span<const double> a, std::span<const double> b) {
  check_dims(a.size(), b.size(), "cosine");
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  double c = ab / (std::sqrt(aa) * std::sqrt(bb));
  return std::clamp(c, -1.0, 1.0);
}

Vector concat(std::span<const double> a, std::span<const double> b) {
  Vector out(a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

}  // namespace cdv::nn
