#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace sigma {

using Tensor1 = std::vector<double>;

/// Dense row-major matrix of doubles.
class Tensor2 {
 public:
  Tensor2() = default;
  Tensor2(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Tensor2 identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> flat() noexcept { return data_; }
  std::span<const double> flat() const noexcept { return data_; }

  Tensor2 transposed() const;

  bool operator==(const Tensor2&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// out = a * x (+ out if accumulate).
void matvec(const Tensor2& a, std::span<const double> x, std::span<double> out,
            bool accumulate = false);
/// out = aᵀ * x (+ out if accumulate).
void matvec_transposed(const Tensor2& a, std::span<const double> x, std::span<double> out,
                       bool accumulate = false);
Tensor1 matvec(const Tensor2& a, std::span<const double> x);
Tensor2 matmul(const Tensor2& a, const Tensor2& b);

double dot(std::span<const double> a, std::span<const double> b);
double squared_norm(std::span<const double> a);
bool all_finite(std::span<const double> a);

/// Concatenate spans into one vector.
Tensor1 concat(std::initializer_list<std::span<const double>> parts);

/// Throws DimensionError with `what` as context if a != b.
void require_size(std::size_t actual, std::size_t expected, const std::string& what);

}  // namespace sigma
