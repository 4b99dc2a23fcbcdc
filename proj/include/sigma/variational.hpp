#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sigma/optim.hpp"
#include "sigma/tensor.hpp"

namespace sigma {

inline constexpr int kGlobalOwner = -1;

struct BlockSpec {
  std::string name;
  std::size_t size = 0;
  /// kGlobalOwner for shared blocks, otherwise the owning client id.
  int owner = kGlobalOwner;
};

/// Ordered variable blocks of a model: all global blocks first, then each
/// client's blocks in client order.
class BlockLayout {
 public:
  BlockLayout() = default;
  explicit BlockLayout(std::vector<BlockSpec> blocks);

  const std::vector<BlockSpec>& blocks() const noexcept { return blocks_; }
  std::size_t total() const noexcept { return total_; }
  std::size_t global_size() const noexcept { return global_size_; }
  std::size_t clients() const noexcept { return client_offsets_.size(); }
  std::size_t client_offset(std::size_t j) const { return client_offsets_.at(j); }
  std::size_t client_size(std::size_t j) const { return client_sizes_.at(j); }
  std::size_t offset(std::size_t block) const { return offsets_.at(block); }
  std::optional<std::size_t> find(const std::string& name) const;

  /// Global blocks only.
  std::vector<BlockSpec> global_blocks() const;
  /// Blocks owned by client j.
  std::vector<BlockSpec> client_blocks(std::size_t j) const;

 private:
  std::vector<BlockSpec> blocks_;
  std::vector<std::size_t> offsets_;
  std::size_t total_ = 0;
  std::size_t global_size_ = 0;
  std::vector<std::size_t> client_offsets_;
  std::vector<std::size_t> client_sizes_;
};

/// Fully factorized Gaussian q(x) = Π N(x_i; mean_i, exp(log_sigma_i)²).
struct MeanFieldApprox {
  BlockLayout layout;
  Tensor1 mean;
  Tensor1 log_sigma;

  static MeanFieldApprox initial(BlockLayout layout, double mean = 0.0, double log_sigma = -1.0);

  Tensor1 sample(std::span<const double> eps) const;
  double log_density(std::span<const double> x) const;
  /// Mean and log sigma of one block.
  std::span<const double> block_mean(const std::string& name) const;
  std::span<const double> block_log_sigma(const std::string& name) const;
};

/// x = mean + exp(log_sigma) ⊙ eps for one run of coordinates.
Tensor1 mean_field_sample(std::span<const double> mean, std::span<const double> log_sigma,
                          std::span<const double> eps);
/// Diagonal-Gaussian log density for one run of coordinates.
double mean_field_log_density(std::span<const double> mean, std::span<const double> log_sigma,
                              std::span<const double> x);

/// log p(x) with its gradient written to `grad` (same length as x).
using LogJointFn = std::function<double(std::span<const double> x, std::span<double> grad)>;

/// Log-density terms that depend on the global variables only.
class GlobalTerm {
 public:
  virtual ~GlobalTerm() = default;
  virtual std::size_t global_size() const = 0;
  /// Overwrites grad_global.
  virtual double evaluate(std::span<const double> global, std::span<double> grad_global) const = 0;
};

/// One client's log-density contribution, a function of the shared global
/// variables and that client's local variables only.
class ClientTerm {
 public:
  virtual ~ClientTerm() = default;
  virtual std::size_t global_size() const = 0;
  virtual std::size_t local_size() const = 0;
  /// Overwrites both gradient outputs.
  virtual double evaluate(std::span<const double> global, std::span<const double> local,
                          std::span<double> grad_global, std::span<double> grad_local) const = 0;
};

/// log p = global term + Σ_j client term j, with the block layout that the
/// variational family uses.
struct FactorizedModel {
  BlockLayout layout;
  std::shared_ptr<const GlobalTerm> global;
  std::vector<std::shared_ptr<const ClientTerm>> clients;

  void validate() const;
  /// Centralized evaluation. Global gradients accumulate the global term
  /// first and then the clients in id order.
  double log_joint(std::span<const double> x, std::span<double> grad) const;
  LogJointFn as_log_joint() const;
};

/// Converts ∇_x log p at x = mean + sigma ⊙ eps into STL gradients with
/// respect to (mean, log_sigma): the score of q is dropped, so the entropy
/// contribution is eps / sigma per coordinate.
void stl_chain(std::span<const double> grad_log_p, std::span<const double> log_sigma,
               std::span<const double> eps, std::span<double> d_mean,
               std::span<double> d_log_sigma);

struct StlGradient {
  Tensor1 d_mean;
  Tensor1 d_log_sigma;
  /// log p(x) - log q(x) at the sampled point.
  double elbo_sample = 0.0;
};

StlGradient stl_gradient(const LogJointFn& log_joint, const MeanFieldApprox& q,
                         std::span<const double> eps);

/// Fills the standard-normal noise for one optimization step.
using NoiseFn = std::function<void(std::size_t step, std::span<double> eps)>;

/// One stream consumed step after step.
NoiseFn sequential_noise(std::uint64_t seed);
/// Step-keyed streams: global blocks from (seed, step, 0) and client j's
/// blocks from (seed, step, j + 1). Matches what federated clients draw.
NoiseFn block_keyed_noise(const BlockLayout& layout, std::uint64_t seed);
void fill_keyed_noise(std::uint64_t seed, std::uint64_t step, std::uint64_t stream,
                      std::span<double> out);

struct MfviOptions {
  std::size_t steps = 10000;
  AdamConfig adam{};
  std::optional<double> clip_norm;
  NoiseFn noise;
  /// Called after each update with the step index.
  std::function<void(std::size_t, const MeanFieldApprox&)> on_step;
};

struct MfviResult {
  MeanFieldApprox approx;
  std::vector<double> elbo_trace;
};

/// Adam ascent on STL gradients with optional global-norm clipping.
MfviResult mfvi_fit(const LogJointFn& log_joint, MeanFieldApprox init, const MfviOptions& options);

}  // namespace sigma
