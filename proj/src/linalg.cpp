#include "sigma/linalg.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "sigma/error.hpp"

namespace sigma {

Tensor2 cholesky(const Tensor2& a) {
  if (a.rows() != a.cols()) throw DimensionError("cholesky: matrix is not square");
  const std::size_t n = a.rows();
  Tensor2 l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > 0.0) || !std::isfinite(d)) throw NotPositiveDefinite(j, d);
    const double ljj = std::sqrt(d);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / ljj;
    }
  }
  return l;
}

Tensor1 solve_lower(const Tensor2& l, std::span<const double> b) {
  require_size(b.size(), l.rows(), "solve_lower rhs");
  const std::size_t n = l.rows();
  Tensor1 x(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * x[k];
    x[i] = s / l(i, i);
  }
  return x;
}

Tensor1 solve_lower_transposed(const Tensor2& l, std::span<const double> b) {
  require_size(b.size(), l.rows(), "solve_lower_transposed rhs");
  const std::size_t n = l.rows();
  Tensor1 x(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= l(k, i) * x[k];
    x[i] = s / l(i, i);
  }
  return x;
}

Tensor1 cholesky_solve(const Tensor2& l, std::span<const double> b) {
  return solve_lower_transposed(l, solve_lower(l, b));
}

Tensor2 inverse_spd(const Tensor2& a) {
  const Tensor2 l = cholesky(a);
  const std::size_t n = a.rows();
  Tensor2 inv(n, n);
  Tensor1 e(n, 0.0);
  for (std::size_t c = 0; c < n; ++c) {
    e[c] = 1.0;
    const Tensor1 col = cholesky_solve(l, e);
    e[c] = 0.0;
    for (std::size_t r = 0; r < n; ++r) inv(r, c) = col[r];
  }
  // Symmetrize away round-off.
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = r + 1; c < n; ++c) {
      const double v = 0.5 * (inv(r, c) + inv(c, r));
      inv(r, c) = v;
      inv(c, r) = v;
    }
  return inv;
}

double log_det_from_cholesky(const Tensor2& l) {
  double s = 0.0;
  for (std::size_t i = 0; i < l.rows(); ++i) s += std::log(l(i, i));
  return 2.0 * s;
}

double min_eigenvalue_symmetric(const Tensor2& a) {
  if (a.rows() != a.cols()) throw DimensionError("min_eigenvalue_symmetric: matrix is not square");
  const auto n = static_cast<Eigen::Index>(a.rows());
  Eigen::MatrixXd m(n, n);
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index c = 0; c < n; ++c)
      m(r, c) = a(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw NumericError("eigenvalue solver did not converge");
  return solver.eigenvalues()(0);
}

bool is_symmetric(const Tensor2& a, double tol) {
  if (a.rows() != a.cols()) return false;
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = r + 1; c < a.cols(); ++c)
      if (std::abs(a(r, c) - a(c, r)) > tol) return false;
  return true;
}

}  // namespace sigma
