#include "sigma/priors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sigma/error.hpp"
#include "sigma/linalg.hpp"

namespace sigma {

Grid1D::Grid1D(std::vector<double> points) : points_(std::move(points)) {
  if (points_.empty()) throw ConfigError("grid has no points");
  for (std::size_t i = 1; i < points_.size(); ++i)
    if (!(points_[i] > points_[i - 1])) throw ConfigError("grid points must be strictly increasing");
}

Grid1D Grid1D::equidistant(std::size_t n, double lo, double hi) {
  if (n == 0) throw ConfigError("grid has no points");
  if (n == 1) return Grid1D({lo});
  std::vector<double> pts(n);
  for (std::size_t i = 0; i < n; ++i)
    pts[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  return Grid1D(std::move(pts));
}

void RbfSpec::validate() const {
  if (!(lengthscale > 0.0) || !(variance > 0.0))
    throw ConfigError("RBF lengthscale and variance must be positive");
}

double rbf(double x, double xp, const RbfSpec& spec) {
  const double d = x - xp;
  return spec.variance * std::exp(-d * d / (2.0 * spec.lengthscale * spec.lengthscale));
}

Tensor2 rbf_kernel(const Grid1D& grid, const RbfSpec& spec) {
  spec.validate();
  Tensor2 k = rbf_cross(grid.points(), grid.points(), spec);
  for (std::size_t i = 0; i < grid.size(); ++i) k(i, i) += kKernelJitter;
  return k;
}

Tensor2 rbf_cross(std::span<const double> a, std::span<const double> b, const RbfSpec& spec) {
  Tensor2 k(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) k(i, j) = rbf(a[i], b[j], spec);
  return k;
}

Tensor1 sample_mvn_from_cov(Rng& rng, const Tensor2& cov) {
  const Tensor2 l = cholesky(cov);
  Tensor1 eps(cov.rows());
  rng.fill_normal(eps);
  Tensor1 out(cov.rows(), 0.0);
  for (std::size_t i = 0; i < l.rows(); ++i)
    for (std::size_t k = 0; k <= i; ++k) out[i] += l(i, k) * eps[k];
  return out;
}

Tensor1 sample_mvn_from_precision(Rng& rng, const Tensor2& precision) {
  const Tensor2 l = cholesky(precision);
  Tensor1 eps(precision.rows());
  rng.fill_normal(eps);
  return solve_lower_transposed(l, eps);
}

void PcarSpec::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("PCAR alpha must lie in (0, 1)");
  if (!(sigma2 > 0.0)) throw ConfigError("PCAR sigma2 must be positive");
}

Tensor2 pcar_precision(const AdjacencyGraph& graph, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("PCAR alpha must lie in [0, 1]");
  const std::size_t n = graph.size();
  Tensor2 q(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    q(i, i) = static_cast<double>(graph.degree(i));
    for (auto j : graph.neighbors(i)) q(i, j) = -alpha;
  }
  return q;
}

Tensor2 pcar_covariance(const AdjacencyGraph& graph, const PcarSpec& spec) {
  Tensor2 c = inverse_spd(pcar_precision(graph, spec.alpha));
  for (double& v : c.flat()) v *= spec.sigma2;
  return c;
}

Tensor1 sample_pcar(Rng& rng, const AdjacencyGraph& graph, const PcarSpec& spec) {
  if (!(spec.sigma2 > 0.0)) throw ConfigError("PCAR sigma2 must be positive");
  Tensor1 x = sample_mvn_from_precision(rng, pcar_precision(graph, spec.alpha));
  const double s = std::sqrt(spec.sigma2);
  for (double& v : x) v *= s;
  return x;
}

ConditionalNormal pcar_conditional(const AdjacencyGraph& graph, const PcarSpec& spec,
                                   std::size_t i, std::span<const double> theta) {
  require_size(theta.size(), graph.size(), "pcar_conditional theta");
  if (i >= graph.size()) throw DimensionError("pcar_conditional: node index out of range");
  double sum = 0.0;
  for (auto j : graph.neighbors(i)) {
    if (std::isnan(theta[j]))
      throw ConfigError("pcar_conditional: missing value for neighbor " + std::to_string(j) +
                        " of node " + std::to_string(i));
    sum += theta[j];
  }
  const double m = static_cast<double>(graph.degree(i));
  return {spec.alpha * sum / m, spec.sigma2 / m};
}

ClientPartition::ClientPartition(std::vector<std::vector<std::size_t>> blocks, std::size_t n)
    : blocks_(std::move(blocks)), total_(n) {
  if (blocks_.empty()) throw ConfigError("partition needs at least one client");
  owner_.assign(n, n);
  local_.assign(n, 0);
  for (std::size_t j = 0; j < blocks_.size(); ++j) {
    if (blocks_[j].empty())
      throw ConfigError("client " + std::to_string(j) + " has an empty block");
    for (std::size_t k = 0; k < blocks_[j].size(); ++k) {
      const auto i = blocks_[j][k];
      if (i >= n) throw ConfigError("partition index " + std::to_string(i) + " out of range");
      if (owner_[i] != n)
        throw ConfigError("partition index " + std::to_string(i) + " appears in two blocks");
      owner_[i] = j;
      local_[i] = k;
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    if (owner_[i] == n) throw ConfigError("partition does not cover index " + std::to_string(i));
}

ClientPartition ClientPartition::single(std::size_t n) {
  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  return ClientPartition({std::move(all)}, n);
}

std::vector<std::size_t> ClientPartition::dims() const {
  std::vector<std::size_t> d;
  d.reserve(blocks_.size());
  for (const auto& b : blocks_) d.push_back(b.size());
  return d;
}

Tensor1 ClientPartition::gather(std::span<const double> full, std::size_t j) const {
  require_size(full.size(), total_, "partition gather");
  const auto& b = blocks_.at(j);
  Tensor1 out(b.size());
  for (std::size_t k = 0; k < b.size(); ++k) out[k] = full[b[k]];
  return out;
}

void ClientPartition::scatter(std::span<const double> part, std::size_t j,
                              std::span<double> full) const {
  require_size(full.size(), total_, "partition scatter");
  const auto& b = blocks_.at(j);
  require_size(part.size(), b.size(), "partition scatter block");
  for (std::size_t k = 0; k < b.size(); ++k) full[b[k]] = part[k];
}

ClientPartition partition_grid(const Grid1D& grid, std::span<const double> boundaries) {
  for (std::size_t k = 0; k < boundaries.size(); ++k) {
    if (k > 0 && !(boundaries[k] > boundaries[k - 1]))
      throw ConfigError("grid partition boundaries must be strictly increasing");
  }
  std::vector<std::vector<std::size_t>> blocks(boundaries.size() + 1);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto it = std::upper_bound(boundaries.begin(), boundaries.end(), grid[i]);
    blocks[static_cast<std::size_t>(it - boundaries.begin())].push_back(i);
  }
  return ClientPartition(std::move(blocks), grid.size());
}

ClientPartition partition_graph(const AdjacencyGraph& graph, std::span<const std::size_t> labels) {
  require_size(labels.size(), graph.size(), "partition_graph labels");
  const std::size_t j = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<std::vector<std::size_t>> blocks(j);
  for (std::size_t i = 0; i < labels.size(); ++i) blocks[labels[i]].push_back(i);
  return ClientPartition(std::move(blocks), graph.size());
}

std::size_t PriorSpec::dim() const {
  return std::visit(
      [](const auto& p) -> std::size_t {
        if constexpr (std::is_same_v<std::decay_t<decltype(p)>, GpPrior>)
          return p.grid.size();
        else
          return p.graph.size();
      },
      kind);
}

Tensor1 PriorSpec::sample(Rng& rng, double phi) const {
  if (const auto* gp = std::get_if<GpPrior>(&kind))
    return sample_mvn_from_cov(rng, rbf_kernel(gp->grid, {phi, gp->variance}));
  const auto& car = std::get<PcarPrior>(kind);
  return sample_pcar(rng, car.graph, {phi, car.sigma2});
}

Tensor2 PriorSpec::covariance(double phi) const {
  if (const auto* gp = std::get_if<GpPrior>(&kind)) return rbf_kernel(gp->grid, {phi, gp->variance});
  const auto& car = std::get<PcarPrior>(kind);
  return pcar_covariance(car.graph, {phi, car.sigma2});
}

Dataset generate_training_set(Rng& rng, const PriorSpec& prior, double phi_lo, double phi_hi,
                              std::size_t n_draws) {
  if (n_draws == 0) throw ConfigError("training set needs at least one draw");
  if (!(phi_hi >= phi_lo)) throw ConfigError("hyperprior range is empty");
  const std::uint64_t base = rng.next_u64();
  const std::size_t d = prior.dim();
  Dataset out{Tensor2(n_draws, 1), Tensor2(n_draws, d)};
  for (std::size_t i = 0; i < n_draws; ++i) {
    Rng draw = Rng::derive(base, i);
    const double phi = draw.uniform(phi_lo, phi_hi);
    const Tensor1 theta = prior.sample(draw, phi);
    out.phi(i, 0) = phi;
    std::copy(theta.begin(), theta.end(), out.theta.row(i).begin());
  }
  return out;
}

}  // namespace sigma
