#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "sigma/hyperprior.hpp"
#include "sigma/variational.hpp"
#include "sigma/vae.hpp"

namespace sigma {

/// A trained VAE used as a drop-in prior: φ from its hyperprior, z_G from
/// N(0, I), each z_Lj from its learned local encoder, θ̂ from the decoder
/// mean. Observations are y_i ~ N(θ_i, noise_sd²).
struct SigmaPriorModel {
  Checkpoint checkpoint;
  Hyperprior hyperprior;
  double noise_sd = 0.5;

  const SigmaVaeConfig& config() const noexcept { return checkpoint.config; }
  const SigmaVaeParams& params() const noexcept { return checkpoint.params; }
  const ClientPartition& partition() const noexcept { return checkpoint.config.partition; }
  void validate() const;
};

enum class ModelVariant { Deterministic, Auxiliary };

/// Inference-time unknowns. `theta` (one block per client) is present only
/// in the auxiliary-variable model.
struct LatentPoint {
  double logit_phi = 0.0;
  Tensor1 z_global;
  std::vector<Tensor1> z_local;
  std::optional<std::vector<Tensor1>> theta;
};

/// Observed values at selected coordinates of θ.
struct Observations {
  std::vector<std::size_t> index;
  Tensor1 y;

  void validate(std::size_t dim) const;
};

/// Observations falling inside one client's block, indexed within it.
struct ClientObservations {
  std::vector<std::size_t> local_index;
  Tensor1 y;
};

std::vector<ClientObservations> split_observations(const ClientPartition& partition,
                                                   const Observations& obs);

struct PriorDraw {
  double phi;
  Tensor1 z_global;
  std::vector<Tensor1> z_local;
  Tensor1 theta;
};

/// n draws from the approximate prior; φ comes from the hyperprior unless
/// `fixed_phi` is given.
std::vector<PriorDraw> sample_sigma_prior(const SigmaPriorModel& model, Rng& rng, std::size_t n,
                                          std::optional<double> fixed_phi = std::nullopt);
/// θ rows of the draws.
Tensor2 draws_matrix(const std::vector<PriorDraw>& draws);

/// Variable blocks for inference: logit_phi and z_G (global), then per
/// client z_L<j> and, for the auxiliary model, theta<j>.
BlockLayout latent_layout(const SigmaVaeConfig& config, ModelVariant variant);
Tensor1 flatten(const LatentPoint& point);
LatentPoint unflatten(const SigmaVaeConfig& config, ModelVariant variant,
                      std::span<const double> x);

/// log p(logit φ) + log N(z_G; 0, I).
class SigmaGlobalTerm final : public GlobalTerm {
 public:
  explicit SigmaGlobalTerm(std::shared_ptr<const SigmaPriorModel> model);
  std::size_t global_size() const override;
  double evaluate(std::span<const double> global, std::span<double> grad_global) const override;

 private:
  std::shared_ptr<const SigmaPriorModel> model_;
};

/// Client j's factor: log N(z_Lj; local encoder(z_G, φ)) plus the client
/// likelihood. Deterministic: Σ log N(y; θ̂_j, σ²). Auxiliary:
/// log N(θ_j; θ̂_j, diag τ²_j) + Σ log N(y; θ_j, σ²). Holds only its own
/// observations and τ² block.
class SigmaClientTerm final : public ClientTerm {
 public:
  SigmaClientTerm(std::shared_ptr<const SigmaPriorModel> model, std::size_t client,
                  ModelVariant variant, ClientObservations obs, Tensor1 tau2_block = {});
  std::size_t global_size() const override;
  std::size_t local_size() const override;
  double evaluate(std::span<const double> global, std::span<const double> local,
                  std::span<double> grad_global, std::span<double> grad_local) const override;

  std::size_t client() const noexcept { return client_; }

 private:
  std::shared_ptr<const SigmaPriorModel> model_;
  std::size_t client_;
  ModelVariant variant_;
  ClientObservations obs_;
  Tensor1 tau2_;
};

/// Global term plus one client term per block. `tau2` (length d_total) is
/// required for the auxiliary variant.
FactorizedModel make_factorized_model(std::shared_ptr<const SigmaPriorModel> model,
                                      ModelVariant variant, const Observations& obs,
                                      std::span<const double> tau2 = {});

double det_model_log_joint(const SigmaPriorModel& model, const LatentPoint& point,
                           const Observations& obs);
double aux_model_log_joint(const SigmaPriorModel& model, std::span<const double> tau2,
                           const LatentPoint& point, const Observations& obs);

struct Tau2Estimate {
  Tensor1 values;
  double lo = 0.01;
  double hi = 100.0;
  double clipped_fraction = 0.0;
};

/// Per-coordinate Var(true draws) - Var(approximate draws), clipped to
/// [lo, hi]. Rows are draws.
Tau2Estimate estimate_tau2(const Tensor2& true_draws, const Tensor2& sigma_draws, double lo = 0.01,
                           double hi = 100.0);

/// Per-coordinate unbiased sample variance of the rows.
Tensor1 column_variance(const Tensor2& draws);

struct ThetaPosterior {
  Tensor1 mean;
  Tensor1 sd;
  Tensor1 lower;  // 5% quantile
  Tensor1 upper;  // 95% quantile
};

/// Summary of θ under a fitted mean-field posterior. Deterministic: decoder
/// pushforward of n_draws latent samples. Auxiliary: the θ blocks of q.
ThetaPosterior summarize_theta(const SigmaPriorModel& model, ModelVariant variant,
                               const MeanFieldApprox& q, Rng& rng, std::size_t n_draws = 1000);

}  // namespace sigma
