#pragma once

#include <cstddef>
#include <span>
#include <variant>
#include <vector>

#include "sigma/graph.hpp"
#include "sigma/rng.hpp"
#include "sigma/tensor.hpp"

namespace sigma {

/// Strictly increasing 1-D locations.
class Grid1D {
 public:
  explicit Grid1D(std::vector<double> points);
  /// n equidistant points covering [lo, hi] inclusive.
  static Grid1D equidistant(std::size_t n, double lo, double hi);

  const std::vector<double>& points() const noexcept { return points_; }
  std::size_t size() const noexcept { return points_.size(); }
  double operator[](std::size_t i) const { return points_[i]; }

 private:
  std::vector<double> points_;
};

struct RbfSpec {
  double lengthscale = 1.0;
  double variance = 1.0;

  void validate() const;
};

inline constexpr double kKernelJitter = 1e-8;

/// variance * exp(-(x - x')² / (2 lengthscale²)).
double rbf(double x, double xp, const RbfSpec& spec);
/// Kernel matrix on the grid with kKernelJitter added to the diagonal.
Tensor2 rbf_kernel(const Grid1D& grid, const RbfSpec& spec);
/// Cross-kernel between two location sets, no jitter.
Tensor2 rbf_cross(std::span<const double> a, std::span<const double> b, const RbfSpec& spec);

/// Draw from N(0, cov) as L ε with cov = L Lᵀ.
Tensor1 sample_mvn_from_cov(Rng& rng, const Tensor2& cov);
/// Draw from N(0, precision⁻¹) by solving Lᵀ x = ε with precision = L Lᵀ.
Tensor1 sample_mvn_from_precision(Rng& rng, const Tensor2& precision);

struct PcarSpec {
  double alpha = 0.5;
  double sigma2 = 1.0;

  void validate() const;
};

/// D - alpha W, for alpha in [0, 1].
Tensor2 pcar_precision(const AdjacencyGraph& graph, double alpha);
/// sigma2 (D - alpha W)⁻¹.
Tensor2 pcar_covariance(const AdjacencyGraph& graph, const PcarSpec& spec);
Tensor1 sample_pcar(Rng& rng, const AdjacencyGraph& graph, const PcarSpec& spec);

struct ConditionalNormal {
  double mean;
  double variance;
};

/// Full conditional of node i given the rest. `theta` has one entry per
/// node; the entry for i is ignored and NaN marks a missing value, which is
/// an error if it belongs to a neighbor of i.
ConditionalNormal pcar_conditional(const AdjacencyGraph& graph, const PcarSpec& spec,
                                   std::size_t i, std::span<const double> theta);

/// Disjoint, covering, non-empty index blocks, one per client.
class ClientPartition {
 public:
  ClientPartition() = default;
  /// Validates the blocks against total dimension n.
  ClientPartition(std::vector<std::vector<std::size_t>> blocks, std::size_t n);
  static ClientPartition single(std::size_t n);

  std::size_t clients() const noexcept { return blocks_.size(); }
  std::size_t total_dim() const noexcept { return total_; }
  const std::vector<std::size_t>& block(std::size_t j) const { return blocks_.at(j); }
  const std::vector<std::vector<std::size_t>>& blocks() const noexcept { return blocks_; }
  std::vector<std::size_t> dims() const;
  /// Client owning coordinate i.
  std::size_t owner(std::size_t i) const { return owner_.at(i); }
  /// Position of coordinate i inside its owner's block.
  std::size_t local_index(std::size_t i) const { return local_.at(i); }

  Tensor1 gather(std::span<const double> full, std::size_t j) const;
  void scatter(std::span<const double> part, std::size_t j, std::span<double> full) const;

  bool operator==(const ClientPartition& o) const { return blocks_ == o.blocks_; }

 private:
  std::vector<std::vector<std::size_t>> blocks_;
  std::size_t total_ = 0;
  std::vector<std::size_t> owner_;
  std::vector<std::size_t> local_;
};

/// Contiguous grid blocks split at the given interior boundaries: client k
/// holds points with boundaries[k-1] <= x < boundaries[k].
ClientPartition partition_grid(const Grid1D& grid, std::span<const double> boundaries);
/// One block per label value 0..max(label); a value with no nodes is an error.
ClientPartition partition_graph(const AdjacencyGraph& graph, std::span<const std::size_t> labels);

struct GpPrior {
  Grid1D grid;
  double variance = 1.0;
};

struct PcarPrior {
  AdjacencyGraph graph;
  double sigma2 = 1.0;
};

/// The dependent prior θ | φ. For GP φ is the lengthscale; for PCAR it is α.
struct PriorSpec {
  std::variant<GpPrior, PcarPrior> kind;

  std::size_t dim() const;
  Tensor1 sample(Rng& rng, double phi) const;
  /// Exact covariance of θ | φ.
  Tensor2 covariance(double phi) const;
};

/// Paired draws (φ, θ) stored row-wise.
struct Dataset {
  Tensor2 phi;
  Tensor2 theta;

  std::size_t size() const noexcept { return theta.rows(); }
  std::size_t dim() const noexcept { return theta.cols(); }
  std::size_t phi_dim() const noexcept { return phi.cols(); }
};

/// n_draws i.i.d. pairs with φ ~ U(phi_lo, phi_hi) and θ ~ prior | φ. Draw i
/// uses its own stream derived from one value taken from `rng`, so the
/// output does not depend on evaluation order.
Dataset generate_training_set(Rng& rng, const PriorSpec& prior, double phi_lo, double phi_hi,
                              std::size_t n_draws);

}  // namespace sigma
