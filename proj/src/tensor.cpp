#include "sigma/tensor.hpp"

#include <cmath>
#include <utility>

#include "sigma/error.hpp"

namespace sigma {

Tensor2::Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  require_size(data_.size(), rows * cols, "Tensor2 storage");
}

Tensor2 Tensor2::identity(std::size_t n) {
  Tensor2 out(n, n);
  for (std::size_t i = 0; i < n; ++i) out(i, i) = 1.0;
  return out;
}

Tensor2 Tensor2::transposed() const {
  Tensor2 out(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) out(c, r) = (*this)(r, c);
  return out;
}

void matvec(const Tensor2& a, std::span<const double> x, std::span<double> out, bool accumulate) {
  require_size(x.size(), a.cols(), "matvec input");
  require_size(out.size(), a.rows(), "matvec output");
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const double v = dot(a.row(r), x);
    out[r] = accumulate ? out[r] + v : v;
  }
}

void matvec_transposed(const Tensor2& a, std::span<const double> x, std::span<double> out,
                       bool accumulate) {
  require_size(x.size(), a.rows(), "matvec_transposed input");
  require_size(out.size(), a.cols(), "matvec_transposed output");
  if (!accumulate)
    for (double& v : out) v = 0.0;
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const double xr = x[r];
    if (xr == 0.0) continue;
    auto row = a.row(r);
    for (std::size_t c = 0; c < a.cols(); ++c) out[c] += row[c] * xr;
  }
}

Tensor1 matvec(const Tensor2& a, std::span<const double> x) {
  Tensor1 out(a.rows());
  matvec(a, x, out);
  return out;
}

Tensor2 matmul(const Tensor2& a, const Tensor2& b) {
  require_size(b.rows(), a.cols(), "matmul inner dimension");
  Tensor2 out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
    }
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double squared_norm(std::span<const double> a) { return dot(a, a); }

bool all_finite(std::span<const double> a) {
  for (double v : a)
    if (!std::isfinite(v)) return false;
  return true;
}

Tensor1 concat(std::initializer_list<std::span<const double>> parts) {
  std::size_t n = 0;
  for (auto p : parts) n += p.size();
  Tensor1 out;
  out.reserve(n);
  for (auto p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

void require_size(std::size_t actual, std::size_t expected, const std::string& what) {
  if (actual != expected)
    throw DimensionError(what + ": expected length " + std::to_string(expected) + ", got " +
                         std::to_string(actual));
}

}  // namespace sigma
