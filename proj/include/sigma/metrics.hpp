#pragma once

#include <span>
#include <vector>

#include "sigma/priors.hpp"
#include "sigma/tensor.hpp"

namespace sigma {

/// ‖a − b‖_F / ‖b‖_F.
double relative_frobenius_error(const Tensor2& estimate, const Tensor2& truth);

/// Empirical covariance of the rows (n − 1 denominator).
Tensor2 empirical_covariance(const Tensor2& draws);

/// Correlation matrix from a covariance matrix.
Tensor2 correlation_from_covariance(const Tensor2& cov);

/// Pairs (i, j) of adjacent grid points on either side of each client
/// boundary: the last point of block k and the first point of block k + 1.
std::vector<std::pair<std::size_t, std::size_t>> grid_boundary_pairs(const ClientPartition& partition);

/// Graph edges whose endpoints belong to different clients.
std::vector<std::pair<std::size_t, std::size_t>> graph_boundary_pairs(const AdjacencyGraph& graph,
                                                                      const ClientPartition& partition);

double rmse(std::span<const double> a, std::span<const double> b);

/// Fraction of i with lower_i <= x_i <= upper_i.
double coverage(std::span<const double> x, std::span<const double> lower,
                std::span<const double> upper);

/// Unbiased sample variance.
double sample_variance(std::span<const double> v);

}  // namespace sigma
