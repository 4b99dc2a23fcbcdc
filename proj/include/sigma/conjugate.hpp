#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "sigma/graph.hpp"
#include "sigma/priors.hpp"
#include "sigma/tensor.hpp"

namespace sigma {

struct GaussianPosterior {
  Tensor1 mean;
  Tensor2 cov;

  /// Marginal standard deviations.
  Tensor1 sd() const;
};

/// GP regression posterior on `grid` at fixed lengthscale: y = f(x_obs) + noise
/// with noise sd `noise_sd`. With no observations the prior is returned.
GaussianPosterior gp_conjugate_posterior(std::span<const double> x_obs,
                                         std::span<const double> y_obs, const RbfSpec& kernel,
                                         double noise_sd, const Grid1D& grid);

/// PCAR posterior at fixed α: precision (D - αW)/σ² + P/σ_lik², where P
/// selects observed nodes. Without `obs_index` every node is observed and
/// y has one entry per node.
GaussianPosterior pcar_conjugate_posterior(const AdjacencyGraph& graph, const PcarSpec& spec,
                                           double noise_sd, std::span<const double> y,
                                           std::optional<std::span<const std::size_t>> obs_index =
                                               std::nullopt);

/// log N(y; 0, σ² (D - αW)⁻¹[obs, obs] + σ_lik² I).
double pcar_log_marginal(const AdjacencyGraph& graph, const PcarSpec& spec, double noise_sd,
                         std::span<const double> y, std::span<const std::size_t> obs_index);

struct MarginalPosterior {
  Tensor1 alphas;
  /// Normalized trapezoid weights over `alphas`.
  Tensor1 weights;
  Tensor1 mean;
  double alpha_mean = 0.0;
};

/// Posterior mean of θ with α integrated out under a uniform prior on
/// [alpha_lo, alpha_hi], by the trapezoid rule on `points` equidistant α.
MarginalPosterior pcar_marginal_posterior_mean(const AdjacencyGraph& graph, double sigma2,
                                               double noise_sd, std::span<const double> y,
                                               std::span<const std::size_t> obs_index,
                                               double alpha_lo = 0.0, double alpha_hi = 0.99,
                                               std::size_t points = 101);

}  // namespace sigma
