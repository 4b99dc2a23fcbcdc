#include "sigma/approx_model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "sigma/error.hpp"

namespace sigma {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr double kZ95 = 1.6448536269514722;

double log_normal_density(double x, double mean, double var) {
  const double d = x - mean;
  return -0.5 * (kLog2Pi + std::log(var)) - 0.5 * d * d / var;
}

double quantile_sorted(const std::vector<double>& v, double p) {
  const double pos = p * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  const double w = pos - static_cast<double>(lo);
  return (1.0 - w) * v[lo] + w * v[hi];
}

}  // namespace

void SigmaPriorModel::validate() const {
  config().validate();
  if (config().phi_dim != 1) throw ConfigError("SIGMA prior model needs a scalar φ");
  hyperprior.validate();
  if (!(noise_sd > 0.0)) throw ConfigError("likelihood noise must be positive");
}

void Observations::validate(std::size_t dim) const {
  require_size(y.size(), index.size(), "observation values");
  if (index.empty()) throw ConfigError("observations are empty");
  for (auto i : index)
    if (i >= dim) throw ConfigError("observation index " + std::to_string(i) + " out of range");
  if (!all_finite(y)) throw ConfigError("observations contain non-finite values");
}

std::vector<ClientObservations> split_observations(const ClientPartition& partition,
                                                   const Observations& obs) {
  obs.validate(partition.total_dim());
  std::vector<ClientObservations> out(partition.clients());
  for (std::size_t k = 0; k < obs.index.size(); ++k) {
    const auto i = obs.index[k];
    auto& c = out[partition.owner(i)];
    c.local_index.push_back(partition.local_index(i));
    c.y.push_back(obs.y[k]);
  }
  return out;
}

std::vector<PriorDraw> sample_sigma_prior(const SigmaPriorModel& model, Rng& rng, std::size_t n,
                                          std::optional<double> fixed_phi) {
  model.validate();
  if (n == 0) throw ConfigError("sample_sigma_prior: n must be at least 1");
  const auto& cfg = model.config();
  std::vector<PriorDraw> out;
  out.reserve(n);
  for (std::size_t s = 0; s < n; ++s) {
    PriorDraw d;
    d.phi = fixed_phi ? *fixed_phi : model.hyperprior.sample_phi(rng);
    const Tensor1 phi{d.phi};
    d.z_global.resize(cfg.global_latent);
    rng.fill_normal(d.z_global);
    for (std::size_t j = 0; j < cfg.clients(); ++j) {
      const auto q = encode_local(model.params(), cfg, j, d.z_global, phi);
      Tensor1 eps(q.mean.size());
      rng.fill_normal(eps);
      d.z_local.push_back(reparam_sample(q.mean, q.log_var, eps));
    }
    d.theta = assemble(cfg.partition, decode(model.params(), cfg, d.z_global, d.z_local, phi));
    out.push_back(std::move(d));
  }
  return out;
}

Tensor2 draws_matrix(const std::vector<PriorDraw>& draws) {
  if (draws.empty()) return {};
  Tensor2 m(draws.size(), draws.front().theta.size());
  for (std::size_t i = 0; i < draws.size(); ++i)
    std::copy(draws[i].theta.begin(), draws[i].theta.end(), m.row(i).begin());
  return m;
}

BlockLayout latent_layout(const SigmaVaeConfig& config, ModelVariant variant) {
  std::vector<BlockSpec> blocks{{"logit_phi", 1, kGlobalOwner}, {"z_G", config.global_latent, kGlobalOwner}};
  const auto dims = config.partition.dims();
  for (std::size_t j = 0; j < config.clients(); ++j) {
    const int owner = static_cast<int>(j);
    blocks.push_back({"z_L" + std::to_string(j), config.local_latents[j], owner});
    if (variant == ModelVariant::Auxiliary) blocks.push_back({"theta" + std::to_string(j), dims[j], owner});
  }
  return BlockLayout(std::move(blocks));
}

Tensor1 flatten(const LatentPoint& p) {
  Tensor1 x{p.logit_phi};
  x.insert(x.end(), p.z_global.begin(), p.z_global.end());
  for (std::size_t j = 0; j < p.z_local.size(); ++j) {
    x.insert(x.end(), p.z_local[j].begin(), p.z_local[j].end());
    if (p.theta) x.insert(x.end(), (*p.theta)[j].begin(), (*p.theta)[j].end());
  }
  return x;
}

LatentPoint unflatten(const SigmaVaeConfig& config, ModelVariant variant,
                      std::span<const double> x) {
  const BlockLayout layout = latent_layout(config, variant);
  require_size(x.size(), layout.total(), "latent point");
  LatentPoint p;
  p.logit_phi = x[0];
  p.z_global.assign(x.begin() + 1, x.begin() + 1 + static_cast<std::ptrdiff_t>(config.global_latent));
  if (variant == ModelVariant::Auxiliary) p.theta.emplace();
  for (std::size_t b = 2; b < layout.blocks().size(); ++b) {
    const auto& spec = layout.blocks()[b];
    auto part = x.subspan(layout.offset(b), spec.size);
    if (spec.name.starts_with("z_L"))
      p.z_local.emplace_back(part.begin(), part.end());
    else
      p.theta->emplace_back(part.begin(), part.end());
  }
  return p;
}

SigmaGlobalTerm::SigmaGlobalTerm(std::shared_ptr<const SigmaPriorModel> model)
    : model_(std::move(model)) {
  model_->validate();
}

std::size_t SigmaGlobalTerm::global_size() const { return 1 + model_->config().global_latent; }

double SigmaGlobalTerm::evaluate(std::span<const double> global,
                                 std::span<double> grad_global) const {
  require_size(global.size(), global_size(), "global term input");
  require_size(grad_global.size(), global_size(), "global term gradient");
  double g = 0.0;
  double v = model_->hyperprior.log_density_unconstrained(global[0], &g);
  grad_global[0] = g;
  for (std::size_t i = 1; i < global.size(); ++i) {
    v += -0.5 * kLog2Pi - 0.5 * global[i] * global[i];
    grad_global[i] = -global[i];
  }
  return v;
}

SigmaClientTerm::SigmaClientTerm(std::shared_ptr<const SigmaPriorModel> model, std::size_t client,
                                 ModelVariant variant, ClientObservations obs, Tensor1 tau2_block)
    : model_(std::move(model)),
      client_(client),
      variant_(variant),
      obs_(std::move(obs)),
      tau2_(std::move(tau2_block)) {
  model_->validate();
  const auto& cfg = model_->config();
  if (client_ >= cfg.clients()) throw ConfigError("client index out of range");
  const auto dj = cfg.partition.block(client_).size();
  require_size(obs_.y.size(), obs_.local_index.size(), "client observations");
  for (auto i : obs_.local_index)
    if (i >= dj) throw ConfigError("client observation index out of range");
  if (variant_ == ModelVariant::Auxiliary) {
    require_size(tau2_.size(), dj, "tau2 block for client " + std::to_string(client_));
    for (double t : tau2_)
      if (!(t > 0.0)) throw ConfigError("tau2 entries must be positive");
  }
}

std::size_t SigmaClientTerm::global_size() const { return 1 + model_->config().global_latent; }

std::size_t SigmaClientTerm::local_size() const {
  const auto& cfg = model_->config();
  const auto n = cfg.local_latents[client_];
  return variant_ == ModelVariant::Auxiliary ? n + cfg.partition.block(client_).size() : n;
}

double SigmaClientTerm::evaluate(std::span<const double> global, std::span<const double> local,
                                 std::span<double> grad_global,
                                 std::span<double> grad_local) const {
  require_size(global.size(), global_size(), "client term global input");
  require_size(local.size(), local_size(), "client term local input");
  require_size(grad_global.size(), global_size(), "client term global gradient");
  require_size(grad_local.size(), local_size(), "client term local gradient");
  const auto& cfg = model_->config();
  const auto& params = model_->params();
  const auto& hp = model_->hyperprior;
  const std::size_t ng = cfg.global_latent;
  const std::size_t nl = cfg.local_latents[client_];
  const std::size_t dj = cfg.partition.block(client_).size();
  const double noise_var = model_->noise_sd * model_->noise_sd;

  const double u = global[0];
  const double phi = hp.to_phi(u);
  const auto zg = global.subspan(1, ng);
  const auto zl = local.subspan(0, nl);
  const Tensor1 zphi = concat({zg, std::span<const double>(&phi, 1)});

  std::fill(grad_global.begin(), grad_global.end(), 0.0);
  std::fill(grad_local.begin(), grad_local.end(), 0.0);
  double dphi = 0.0;

  // Local latent prior from the learned local encoder.
  const auto enc = params.local_encoders[client_].forward_trace(zphi);
  Tensor1 dmean(nl), dlogvar(nl);
  double value = 0.0;
  for (std::size_t i = 0; i < nl; ++i) {
    const double m = enc.out.mean[i];
    const double lv = enc.out.log_var[i];
    const double prec = std::exp(-lv);
    const double r = zl[i] - m;
    value += -0.5 * kLog2Pi - 0.5 * lv - 0.5 * r * r * prec;
    grad_local[i] = -r * prec;
    dmean[i] = r * prec;
    dlogvar[i] = -0.5 + 0.5 * r * r * prec;
  }

  // Decoder mean for this client's block.
  const MlpTrace dec = params.global_decoder.forward_trace(zphi);
  const Tensor1 head_in = concat({dec.output(), zl, std::span<const double>(&phi, 1)});
  const Tensor1 theta_hat = params.local_decoders[client_].apply(head_in);
  Tensor1 dtheta_hat(dj, 0.0);

  if (variant_ == ModelVariant::Deterministic) {
    for (std::size_t k = 0; k < obs_.local_index.size(); ++k) {
      const auto i = obs_.local_index[k];
      value += log_normal_density(obs_.y[k], theta_hat[i], noise_var);
      dtheta_hat[i] += (obs_.y[k] - theta_hat[i]) / noise_var;
    }
  } else {
    const auto theta = local.subspan(nl, dj);
    auto dtheta = grad_local.subspan(nl, dj);
    for (std::size_t i = 0; i < dj; ++i) {
      value += log_normal_density(theta[i], theta_hat[i], tau2_[i]);
      const double pull = (theta[i] - theta_hat[i]) / tau2_[i];
      dtheta_hat[i] += pull;
      dtheta[i] -= pull;
    }
    for (std::size_t k = 0; k < obs_.local_index.size(); ++k) {
      const auto i = obs_.local_index[k];
      value += log_normal_density(obs_.y[k], theta[i], noise_var);
      dtheta[i] += (obs_.y[k] - theta[i]) / noise_var;
    }
  }

  const std::size_t hd = dec.output().size();
  Tensor1 dhead(head_in.size());
  params.local_decoders[client_].backward(head_in, dtheta_hat, nullptr, dhead);
  for (std::size_t i = 0; i < nl; ++i) grad_local[i] += dhead[hd + i];
  dphi += dhead[hd + nl];

  const Tensor1 dzphi_dec = params.global_decoder.backward(
      dec, std::span<const double>(dhead).subspan(0, hd), nullptr);
  const Tensor1 dzphi_enc = params.local_encoders[client_].backward(enc, dmean, dlogvar, nullptr);
  for (std::size_t i = 0; i < ng; ++i) grad_global[1 + i] = dzphi_dec[i] + dzphi_enc[i];
  dphi += dzphi_dec[ng] + dzphi_enc[ng];
  grad_global[0] = dphi * hp.dphi_du(u);
  return value;
}

FactorizedModel make_factorized_model(std::shared_ptr<const SigmaPriorModel> model,
                                      ModelVariant variant, const Observations& obs,
                                      std::span<const double> tau2) {
  model->validate();
  const auto& cfg = model->config();
  if (variant == ModelVariant::Auxiliary) require_size(tau2.size(), cfg.total_dim(), "tau2");
  FactorizedModel fm;
  fm.layout = latent_layout(cfg, variant);
  fm.global = std::make_shared<SigmaGlobalTerm>(model);
  auto per_client = split_observations(cfg.partition, obs);
  for (std::size_t j = 0; j < cfg.clients(); ++j) {
    Tensor1 tau2_block;
    if (variant == ModelVariant::Auxiliary) tau2_block = cfg.partition.gather(tau2, j);
    fm.clients.push_back(std::make_shared<SigmaClientTerm>(model, j, variant,
                                                           std::move(per_client[j]),
                                                           std::move(tau2_block)));
  }
  fm.validate();
  return fm;
}

namespace {
double evaluate_point(const SigmaPriorModel& model, ModelVariant variant,
                      std::span<const double> tau2, const LatentPoint& point,
                      const Observations& obs) {
  auto shared = std::make_shared<const SigmaPriorModel>(model);
  const FactorizedModel fm = make_factorized_model(shared, variant, obs, tau2);
  const Tensor1 x = flatten(point);
  require_size(x.size(), fm.layout.total(), "latent point");
  Tensor1 g(x.size());
  return fm.log_joint(x, g);
}
}  // namespace

double det_model_log_joint(const SigmaPriorModel& model, const LatentPoint& point,
                           const Observations& obs) {
  if (point.theta) throw DimensionError("deterministic model takes no θ block");
  return evaluate_point(model, ModelVariant::Deterministic, {}, point, obs);
}

double aux_model_log_joint(const SigmaPriorModel& model, std::span<const double> tau2,
                           const LatentPoint& point, const Observations& obs) {
  if (!point.theta) throw DimensionError("auxiliary model needs a θ block");
  return evaluate_point(model, ModelVariant::Auxiliary, tau2, point, obs);
}

Tensor1 column_variance(const Tensor2& draws) {
  const std::size_t n = draws.rows();
  if (n < 2) throw ConfigError("variance needs at least two draws");
  Tensor1 mean(draws.cols(), 0.0), var(draws.cols(), 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < draws.cols(); ++c) mean[c] += draws(r, c);
  for (double& m : mean) m /= static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < draws.cols(); ++c) {
      const double d = draws(r, c) - mean[c];
      var[c] += d * d;
    }
  for (double& v : var) v /= static_cast<double>(n - 1);
  return var;
}

Tau2Estimate estimate_tau2(const Tensor2& true_draws, const Tensor2& sigma_draws, double lo,
                           double hi) {
  require_size(sigma_draws.cols(), true_draws.cols(), "tau2 draw dimension");
  if (!(lo > 0.0 && hi >= lo)) throw ConfigError("tau2 clip bounds must satisfy 0 < lo <= hi");
  const Tensor1 vt = column_variance(true_draws);
  const Tensor1 vs = column_variance(sigma_draws);
  Tau2Estimate est{Tensor1(vt.size()), lo, hi, 0.0};
  std::size_t clipped = 0;
  for (std::size_t i = 0; i < vt.size(); ++i) {
    const double d = vt[i] - vs[i];
    const double c = std::clamp(d, lo, hi);
    if (c != d) ++clipped;
    est.values[i] = c;
  }
  est.clipped_fraction = vt.empty() ? 0.0 : static_cast<double>(clipped) / static_cast<double>(vt.size());
  return est;
}

ThetaPosterior summarize_theta(const SigmaPriorModel& model, ModelVariant variant,
                               const MeanFieldApprox& q, Rng& rng, std::size_t n_draws) {
  const auto& cfg = model.config();
  const std::size_t d = cfg.total_dim();
  ThetaPosterior out{Tensor1(d), Tensor1(d), Tensor1(d), Tensor1(d)};
  if (variant == ModelVariant::Auxiliary) {
    for (std::size_t j = 0; j < cfg.clients(); ++j) {
      const auto m = q.block_mean("theta" + std::to_string(j));
      const auto ls = q.block_log_sigma("theta" + std::to_string(j));
      const auto& block = cfg.partition.block(j);
      for (std::size_t k = 0; k < block.size(); ++k) {
        const double sd = std::exp(ls[k]);
        out.mean[block[k]] = m[k];
        out.sd[block[k]] = sd;
        out.lower[block[k]] = m[k] - kZ95 * sd;
        out.upper[block[k]] = m[k] + kZ95 * sd;
      }
    }
    return out;
  }
  if (n_draws < 2) throw ConfigError("posterior summary needs at least two draws");
  std::vector<std::vector<double>> cols(d, std::vector<double>(n_draws));
  Tensor1 eps(q.mean.size());
  for (std::size_t s = 0; s < n_draws; ++s) {
    rng.fill_normal(eps);
    const LatentPoint p = unflatten(cfg, variant, q.sample(eps));
    const Tensor1 phi{model.hyperprior.to_phi(p.logit_phi)};
    const Tensor1 theta = assemble(cfg.partition, decode(model.params(), cfg, p.z_global, p.z_local, phi));
    for (std::size_t i = 0; i < d; ++i) cols[i][s] = theta[i];
  }
  for (std::size_t i = 0; i < d; ++i) {
    auto& c = cols[i];
    double m = 0.0;
    for (double v : c) m += v;
    m /= static_cast<double>(n_draws);
    double ss = 0.0;
    for (double v : c) ss += (v - m) * (v - m);
    out.mean[i] = m;
    out.sd[i] = std::sqrt(ss / static_cast<double>(n_draws - 1));
    std::sort(c.begin(), c.end());
    out.lower[i] = quantile_sorted(c, 0.05);
    out.upper[i] = quantile_sorted(c, 0.95);
  }
  return out;
}

}  // namespace sigma
