#include "sigma/conjugate.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "sigma/error.hpp"
#include "sigma/linalg.hpp"

namespace sigma {

Tensor1 GaussianPosterior::sd() const {
  Tensor1 out(mean.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::sqrt(std::max(cov(i, i), 0.0));
  return out;
}

GaussianPosterior gp_conjugate_posterior(std::span<const double> x_obs,
                                         std::span<const double> y_obs, const RbfSpec& kernel,
                                         double noise_sd, const Grid1D& grid) {
  kernel.validate();
  require_size(y_obs.size(), x_obs.size(), "GP observations");
  if (!(noise_sd >= 0.0)) throw ConfigError("GP noise sd must be non-negative");
  const auto& pts = grid.points();
  GaussianPosterior post{Tensor1(pts.size(), 0.0), rbf_cross(pts, pts, kernel)};
  if (x_obs.empty()) return post;

  Tensor2 koo = rbf_cross(x_obs, x_obs, kernel);
  for (std::size_t i = 0; i < koo.rows(); ++i) koo(i, i) += noise_sd * noise_sd;
  const Tensor2 l = cholesky(koo);
  const Tensor2 kgo = rbf_cross(pts, x_obs, kernel);
  const Tensor1 alpha = cholesky_solve(l, y_obs);
  matvec(kgo, alpha, post.mean);
  // cov -= V^T V with V = L^{-1} K_og.
  const std::size_t n = pts.size(), m = x_obs.size();
  Tensor2 v(m, n);
  Tensor1 col(m);
  for (std::size_t g = 0; g < n; ++g) {
    for (std::size_t o = 0; o < m; ++o) col[o] = kgo(g, o);
    const Tensor1 s = solve_lower(l, col);
    for (std::size_t o = 0; o < m; ++o) v(o, g) = s[o];
  }
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a; b < n; ++b) {
      double s = 0.0;
      for (std::size_t o = 0; o < m; ++o) s += v(o, a) * v(o, b);
      post.cov(a, b) -= s;
      post.cov(b, a) = post.cov(a, b);
    }
  return post;
}

namespace {

std::vector<std::size_t> all_nodes(std::size_t n) {
  std::vector<std::size_t> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = i;
  return out;
}

void check_obs(std::size_t n, std::span<const double> y, std::span<const std::size_t> idx) {
  require_size(y.size(), idx.size(), "PCAR observations");
  std::vector<bool> seen(n, false);
  for (auto i : idx) {
    if (i >= n) throw ConfigError("observation index " + std::to_string(i) + " out of range");
    if (seen[i]) throw ConfigError("observation index " + std::to_string(i) + " repeated");
    seen[i] = true;
  }
}

}  // namespace

GaussianPosterior pcar_conjugate_posterior(const AdjacencyGraph& graph, const PcarSpec& spec,
                                           double noise_sd, std::span<const double> y,
                                           std::optional<std::span<const std::size_t>> obs_index) {
  if (!(spec.alpha >= 0.0 && spec.alpha <= 1.0)) throw ConfigError("PCAR alpha must lie in [0, 1]");
  if (!(spec.sigma2 > 0.0)) throw ConfigError("PCAR sigma2 must be positive");
  if (!(noise_sd > 0.0)) throw ConfigError("PCAR noise sd must be positive");
  const std::size_t n = graph.size();
  const std::vector<std::size_t> full = obs_index ? std::vector<std::size_t>() : all_nodes(n);
  const std::span<const std::size_t> idx = obs_index ? *obs_index : std::span<const std::size_t>(full);
  check_obs(n, y, idx);

  Tensor2 q = pcar_precision(graph, spec.alpha);
  for (double& v : q.flat()) v /= spec.sigma2;
  const double inv_noise = 1.0 / (noise_sd * noise_sd);
  Tensor1 rhs(n, 0.0);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    q(idx[k], idx[k]) += inv_noise;
    rhs[idx[k]] = y[k] * inv_noise;
  }
  const Tensor2 l = cholesky(q);
  return {cholesky_solve(l, rhs), inverse_spd(q)};
}

double pcar_log_marginal(const AdjacencyGraph& graph, const PcarSpec& spec, double noise_sd,
                         std::span<const double> y, std::span<const std::size_t> obs_index) {
  check_obs(graph.size(), y, obs_index);
  const Tensor2 cov = pcar_covariance(graph, spec);
  const std::size_t m = obs_index.size();
  Tensor2 s(m, m);
  for (std::size_t a = 0; a < m; ++a)
    for (std::size_t b = 0; b < m; ++b) s(a, b) = cov(obs_index[a], obs_index[b]);
  for (std::size_t a = 0; a < m; ++a) s(a, a) += noise_sd * noise_sd;
  const Tensor2 l = cholesky(s);
  const Tensor1 w = solve_lower(l, y);
  return -0.5 * static_cast<double>(m) * std::log(2.0 * std::numbers::pi) -
         0.5 * log_det_from_cholesky(l) - 0.5 * squared_norm(w);
}

MarginalPosterior pcar_marginal_posterior_mean(const AdjacencyGraph& graph, double sigma2,
                                               double noise_sd, std::span<const double> y,
                                               std::span<const std::size_t> obs_index,
                                               double alpha_lo, double alpha_hi,
                                               std::size_t points) {
  if (points < 2) throw ConfigError("marginal posterior needs at least two grid points");
  if (!(alpha_lo >= 0.0 && alpha_hi < 1.0 && alpha_lo < alpha_hi))
    throw ConfigError("alpha grid must satisfy 0 <= lo < hi < 1");
  MarginalPosterior out;
  out.alphas.resize(points);
  Tensor1 logw(points);
  const double h = (alpha_hi - alpha_lo) / static_cast<double>(points - 1);
  std::vector<Tensor1> means;
  for (std::size_t k = 0; k < points; ++k) {
    const double a = alpha_lo + h * static_cast<double>(k);
    out.alphas[k] = a;
    const PcarSpec spec{a, sigma2};
    const double trap = (k == 0 || k + 1 == points) ? 0.5 : 1.0;
    logw[k] = std::log(trap) + pcar_log_marginal(graph, spec, noise_sd, y, obs_index);
    means.push_back(pcar_conjugate_posterior(graph, spec, noise_sd, y, obs_index).mean);
  }
  const double top = *std::max_element(logw.begin(), logw.end());
  out.weights.resize(points);
  double total = 0.0;
  for (std::size_t k = 0; k < points; ++k) total += out.weights[k] = std::exp(logw[k] - top);
  out.mean.assign(graph.size(), 0.0);
  for (std::size_t k = 0; k < points; ++k) {
    out.weights[k] /= total;
    out.alpha_mean += out.weights[k] * out.alphas[k];
    for (std::size_t i = 0; i < out.mean.size(); ++i) out.mean[i] += out.weights[k] * means[k][i];
  }
  return out;
}

}  // namespace sigma
