#include "sigma/optim.hpp"

#include <cmath>

#include "sigma/error.hpp"

namespace sigma {

AdamState::AdamState(AdamConfig config, const std::vector<std::size_t>& block_sizes)
    : config_(config) {
  if (!(config_.beta1 >= 0.0 && config_.beta1 < 1.0 && config_.beta2 >= 0.0 &&
        config_.beta2 < 1.0))
    throw ConfigError("Adam betas must lie in [0, 1)");
  if (!(config_.learning_rate >= 0.0)) throw ConfigError("Adam learning rate must be >= 0");
  m_.reserve(block_sizes.size());
  v_.reserve(block_sizes.size());
  for (auto n : block_sizes) {
    m_.emplace_back(n, 0.0);
    v_.emplace_back(n, 0.0);
  }
}

namespace {
std::vector<std::size_t> sizes_of(const std::vector<NamedBlock>& blocks) {
  std::vector<std::size_t> out;
  out.reserve(blocks.size());
  for (const auto& b : blocks) out.push_back(b.data.size());
  return out;
}
}  // namespace

AdamState::AdamState(AdamConfig config, const std::vector<NamedBlock>& blocks)
    : AdamState(config, sizes_of(blocks)) {}

void AdamState::step(const std::vector<NamedBlock>& params, const std::vector<NamedBlock>& grads) {
  require_size(params.size(), m_.size(), "Adam parameter block count");
  require_size(grads.size(), m_.size(), "Adam gradient block count");
  for (std::size_t b = 0; b < grads.size(); ++b) {
    require_size(params[b].data.size(), m_[b].size(), "Adam block '" + params[b].name + "'");
    require_size(grads[b].data.size(), m_[b].size(), "Adam gradient '" + grads[b].name + "'");
    if (!all_finite(grads[b].data))
      throw NumericError("non-finite gradient in parameter block '" + grads[b].name + "'");
  }
  ++t_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t b = 0; b < grads.size(); ++b) {
    auto p = params[b].data;
    auto g = grads[b].data;
    auto& m = m_[b];
    auto& v = v_[b];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p[i] -= config_.learning_rate * mhat / (std::sqrt(vhat) + config_.epsilon);
    }
  }
}

double global_norm(const std::vector<NamedBlock>& grads) {
  double s = 0.0;
  for (const auto& g : grads) s += squared_norm(g.data);
  return std::sqrt(s);
}

double clip_grad_norm(const std::vector<NamedBlock>& grads, double max_norm) {
  if (!(max_norm > 0.0)) throw ConfigError("clip_grad_norm: max_norm must be positive");
  const double norm = global_norm(grads);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (const auto& g : grads)
      for (double& v : g.data) v *= scale;
  }
  return norm;
}

}  // namespace sigma
