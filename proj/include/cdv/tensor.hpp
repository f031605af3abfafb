#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace cdv::nn {

using Vector = std::vector<double>;

/// Dense row-major matrix. Biases are stored as rows x 1 tensors.
class Tensor2 {
 public:
  Tensor2() = default;
  Tensor2(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}
  Tensor2(std::size_t rows, std::size_t cols, std::vector<double> values);

  static Tensor2 column(const Vector& values) { return {values.size(), 1, values}; }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {values_.data() + r * cols_, cols_};
  }

  void fill(double value);
  bool same_shape(const Tensor2& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  bool all_finite() const noexcept;

  friend bool operator==(const Tensor2&, const Tensor2&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

std::string shape_string(const Tensor2& t);

// y = W x + b (b may be empty for no bias).
Vector affine(const Tensor2& weight, std::span<const double> x, const Tensor2* bias);

// Accumulates W^T dy into dx.
void add_transposed_product(const Tensor2& weight, std::span<const double> dy,
                            std::span<double> dx);

// grad += dy x^T
void add_outer(Tensor2& grad, std::span<const double> dy, std::span<const double> x);

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> a);

/// a^T b / (|a| |b|); returns 0 when either argument has zero norm.
double cosine(std::span<const double> a, std::span<const double> b);

Vector concat(std::span<const double> a, std::span<const double> b);

}  // namespace cdv::nn
