#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "sigma/nn.hpp"

namespace sigma {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam moment accumulators for a fixed list of parameter blocks.
class AdamState {
 public:
  AdamState() = default;
  AdamState(AdamConfig config, const std::vector<std::size_t>& block_sizes);
  AdamState(AdamConfig config, const std::vector<NamedBlock>& blocks);

  const AdamConfig& config() const noexcept { return config_; }
  std::uint64_t step_count() const noexcept { return t_; }
  const std::vector<std::vector<double>>& first_moment() const noexcept { return m_; }
  const std::vector<std::vector<double>>& second_moment() const noexcept { return v_; }

  /// One descent step: params -= lr * m̂ / (sqrt(v̂) + eps). Gradients are
  /// checked for finiteness before anything is modified.
  void step(const std::vector<NamedBlock>& params, const std::vector<NamedBlock>& grads);

 private:
  AdamConfig config_;
  std::uint64_t t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

/// Global L2 norm across all blocks.
double global_norm(const std::vector<NamedBlock>& grads);

/// Rescale every block by max_norm / norm when the global norm exceeds
/// max_norm. Returns the norm measured before clipping.
double clip_grad_norm(const std::vector<NamedBlock>& grads, double max_norm);

}  // namespace sigma
