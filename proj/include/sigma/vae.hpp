#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "sigma/nn.hpp"
#include "sigma/priors.hpp"
#include "sigma/rng.hpp"

namespace sigma {

struct TrainingConfig {
  std::size_t iterations = 20000;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  std::size_t smoothing_window = 500;
};

/// Architecture and training settings of the client-factorized VAE.
struct SigmaVaeConfig {
  /// Client blocks of θ; fixes J, d_total and every d_j.
  ClientPartition partition;
  std::size_t phi_dim = 1;
  std::size_t global_latent = 5;
  /// One latent width per client.
  std::vector<std::size_t> local_latents;
  std::size_t global_encoder_hidden = 16;
  std::size_t local_encoder_hidden = 16;
  std::size_t decoder_hidden = 16;
  /// Decoder noise standard deviation.
  double gamma = 0.5;
  TrainingConfig training;

  std::size_t clients() const noexcept { return partition.clients(); }
  std::size_t total_dim() const noexcept { return partition.total_dim(); }
  void validate() const;
};

/// Diagonal Gaussian parameters produced by an encoder.
struct GaussianParams {
  Tensor1 mean;
  Tensor1 log_var;
};

/// Two-layer trunk (ReLU in between, linear output) feeding separate mean
/// and log-variance heads.
struct GaussianEncoder {
  Mlp trunk;
  DenseLayer mean_head;
  DenseLayer log_var_head;

  struct Trace {
    MlpTrace trunk;
    GaussianParams out;
  };

  GaussianEncoder() = default;
  GaussianEncoder(std::size_t in, std::size_t hidden, std::size_t latent);

  std::size_t in_dim() const { return trunk.in_dim(); }
  std::size_t latent_dim() const { return mean_head.out_dim(); }

  GaussianParams forward(std::span<const double> input) const;
  Trace forward_trace(std::span<const double> input) const;
  /// Backprop upstream gradients on (mean, log_var); returns the input gradient.
  Tensor1 backward(const Trace& trace, std::span<const double> d_mean,
                   std::span<const double> d_log_var, GaussianEncoder* grads) const;

  void init_uniform(Rng& rng);
  void set_zero();
  void append_blocks(const std::string& prefix, std::vector<NamedBlock>& out);
};

/// Every trainable tensor of the VAE.
struct SigmaVaeParams {
  GaussianEncoder global_encoder;
  std::vector<GaussianEncoder> local_encoders;
  /// Shared pathway g(z_G, φ) -> h.
  Mlp global_decoder;
  /// Per-client affine heads on (h, z_Lj, φ).
  std::vector<DenseLayer> local_decoders;

  /// Architecture for `config` with all parameters zero.
  static SigmaVaeParams zeros(const SigmaVaeConfig& config);
  static SigmaVaeParams initialize(const SigmaVaeConfig& config, Rng& rng);

  void set_zero();
  /// Views of every tensor in a fixed order with stable names.
  std::vector<NamedBlock> blocks();

  bool operator==(const SigmaVaeParams& o) const;
};

GaussianParams encode_global(const SigmaVaeParams& params, const SigmaVaeConfig& config,
                             std::span<const double> theta_all, std::span<const double> phi);
GaussianParams encode_local(const SigmaVaeParams& params, const SigmaVaeConfig& config,
                            std::size_t client, std::span<const double> z_global,
                            std::span<const double> phi);

/// Decoder mean per client block, in client order.
std::vector<Tensor1> decode(const SigmaVaeParams& params, const SigmaVaeConfig& config,
                            std::span<const double> z_global, const std::vector<Tensor1>& z_local,
                            std::span<const double> phi);
/// Client blocks written back to their coordinates of θ.
Tensor1 assemble(const ClientPartition& partition, const std::vector<Tensor1>& blocks);

/// Standard-normal noise consumed by one datum's ELBO estimate.
struct LatentNoise {
  Tensor1 global;
  std::vector<Tensor1> local;

  static LatentNoise draw(Rng& rng, const SigmaVaeConfig& config);
};

/// Single-sample ELBO of one (φ, θ) pair. When `grads` is non-null,
/// `scale` times the ELBO gradient is added to it.
double elbo_datum(const SigmaVaeParams& params, const SigmaVaeConfig& config,
                  std::span<const double> theta, std::span<const double> phi,
                  const LatentNoise& noise, SigmaVaeParams* grads, double scale = 1.0);

struct ElboEstimate {
  double value = 0.0;
  SigmaVaeParams grads;
};

/// Batch-mean single-sample ELBO and its exact gradient. Noise is drawn from
/// `rng` datum by datum in batch order.
ElboEstimate elbo_minibatch(const SigmaVaeParams& params, const SigmaVaeConfig& config,
                            const Dataset& data, std::span<const std::size_t> batch, Rng& rng);

struct TrainingMetadata {
  std::size_t iterations_completed = 0;
  double final_smoothed_elbo = 0.0;
  std::uint64_t seed = 0;
};

struct Checkpoint {
  SigmaVaeConfig config;
  SigmaVaeParams params;
  TrainingMetadata metadata;
};

struct TracePoint {
  std::size_t iteration;
  double elbo;
  double smoothed_elbo;
};

struct TrainingRun {
  Checkpoint checkpoint;
  std::vector<TracePoint> trace;
};

/// Adam ascent on the minibatch ELBO for config.training.iterations steps.
/// Minibatches walk a fresh permutation of the data each epoch. Fully
/// determined by config.training.seed.
TrainingRun train(const SigmaVaeConfig& config, const Dataset& data);

}  // namespace sigma
