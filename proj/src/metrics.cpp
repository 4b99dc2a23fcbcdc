#include "sigma/metrics.hpp"

#include <cmath>

#include "sigma/error.hpp"

namespace sigma {

double relative_frobenius_error(const Tensor2& estimate, const Tensor2& truth) {
  require_size(estimate.rows(), truth.rows(), "covariance rows");
  require_size(estimate.cols(), truth.cols(), "covariance cols");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double d = estimate.flat()[i] - truth.flat()[i];
    num += d * d;
    den += truth.flat()[i] * truth.flat()[i];
  }
  if (!(den > 0.0)) throw NumericError("reference covariance has zero norm");
  return std::sqrt(num / den);
}

Tensor2 empirical_covariance(const Tensor2& draws) {
  const std::size_t n = draws.rows(), d = draws.cols();
  if (n < 2) throw ConfigError("covariance needs at least two draws");
  Tensor1 mean(d, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) mean[c] += draws(r, c);
  for (double& m : mean) m /= static_cast<double>(n);
  Tensor2 cov(d, d, 0.0);
  Tensor1 x(d);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) x[c] = draws(r, c) - mean[c];
    for (std::size_t a = 0; a < d; ++a) {
      const double xa = x[a];
      auto row = cov.row(a);
      for (std::size_t b = a; b < d; ++b) row[b] += xa * x[b];
    }
  }
  const double s = 1.0 / static_cast<double>(n - 1);
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = a; b < d; ++b) {
      cov(a, b) *= s;
      cov(b, a) = cov(a, b);
    }
  return cov;
}

Tensor2 correlation_from_covariance(const Tensor2& cov) {
  Tensor2 out(cov.rows(), cov.cols());
  for (std::size_t a = 0; a < cov.rows(); ++a)
    for (std::size_t b = 0; b < cov.cols(); ++b)
      out(a, b) = cov(a, b) / std::sqrt(cov(a, a) * cov(b, b));
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> grid_boundary_pairs(const ClientPartition& partition) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t j = 0; j + 1 < partition.clients(); ++j)
    out.emplace_back(partition.block(j).back(), partition.block(j + 1).front());
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> graph_boundary_pairs(const AdjacencyGraph& graph,
                                                                      const ClientPartition& partition) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (const auto& [a, b] : graph.undirected_edges())
    if (partition.owner(a) != partition.owner(b)) out.emplace_back(a, b);
  return out;
}

double rmse(std::span<const double> a, std::span<const double> b) {
  require_size(a.size(), b.size(), "rmse operands");
  if (a.empty()) throw ConfigError("rmse of empty vectors");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s / static_cast<double>(a.size()));
}

double coverage(std::span<const double> x, std::span<const double> lower,
                std::span<const double> upper) {
  require_size(lower.size(), x.size(), "coverage lower bounds");
  require_size(upper.size(), x.size(), "coverage upper bounds");
  if (x.empty()) throw ConfigError("coverage of empty vectors");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (lower[i] <= x[i] && x[i] <= upper[i]) ++hit;
  return static_cast<double>(hit) / static_cast<double>(x.size());
}

double sample_variance(std::span<const double> v) {
  if (v.size() < 2) throw ConfigError("variance needs at least two values");
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

}  // namespace sigma
