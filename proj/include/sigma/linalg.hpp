#pragma once

#include <span>

#include "sigma/tensor.hpp"

namespace sigma {

/// Lower Cholesky factor L with a = L Lᵀ. Throws NotPositiveDefinite naming
/// the first failing pivot.
Tensor2 cholesky(const Tensor2& a);

/// Solve L x = b for lower-triangular L.
Tensor1 solve_lower(const Tensor2& l, std::span<const double> b);
/// Solve Lᵀ x = b for lower-triangular L.
Tensor1 solve_lower_transposed(const Tensor2& l, std::span<const double> b);
/// Solve a x = b given the Cholesky factor of a.
Tensor1 cholesky_solve(const Tensor2& l, std::span<const double> b);
/// Inverse of a symmetric positive definite matrix.
Tensor2 inverse_spd(const Tensor2& a);
/// log det a from its Cholesky factor.
double log_det_from_cholesky(const Tensor2& l);

/// Smallest eigenvalue of a symmetric matrix.
double min_eigenvalue_symmetric(const Tensor2& a);

bool is_symmetric(const Tensor2& a, double tol = 0.0);

}  // namespace sigma
