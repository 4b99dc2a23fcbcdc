#include "sigma/vae.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numbers>
#include <numeric>

#include "sigma/error.hpp"
#include "sigma/optim.hpp"

namespace sigma {

namespace {

enum StreamKey : std::uint64_t { kInitStream = 1, kNoiseStream = 2, kShuffleStream = 3 };

double gaussian_kl(std::span<const double> mean, std::span<const double> log_var) {
  double kl = 0.0;
  for (std::size_t i = 0; i < mean.size(); ++i)
    kl += 0.5 * (std::exp(log_var[i]) + mean[i] * mean[i] - 1.0 - log_var[i]);
  return kl;
}

}  // namespace

void SigmaVaeConfig::validate() const {
  const auto j = clients();
  if (j == 0) throw ConfigError("VAE config: at least one client is required");
  if (local_latents.size() != j)
    throw ConfigError("VAE config: " + std::to_string(local_latents.size()) +
                      " local latent widths for " + std::to_string(j) + " clients");
  if (phi_dim == 0 || global_latent == 0 || global_encoder_hidden == 0 ||
      local_encoder_hidden == 0 || decoder_hidden == 0)
    throw ConfigError("VAE config: all widths must be positive");
  for (auto n : local_latents)
    if (n == 0) throw ConfigError("VAE config: local latent widths must be positive");
  if (!(gamma > 0.0)) throw ConfigError("VAE config: gamma must be positive");
  if (training.batch_size == 0) throw ConfigError("VAE config: batch size must be positive");
  if (!(training.learning_rate >= 0.0)) throw ConfigError("VAE config: learning rate must be >= 0");
  if (training.smoothing_window == 0) throw ConfigError("VAE config: smoothing window must be positive");
}

GaussianEncoder::GaussianEncoder(std::size_t in, std::size_t hidden, std::size_t latent)
    : trunk(std::vector<std::size_t>{in, hidden, hidden}),
      mean_head(hidden, latent),
      log_var_head(hidden, latent) {}

GaussianParams GaussianEncoder::forward(std::span<const double> input) const {
  const Tensor1 f = trunk.forward(input);
  return {mean_head.apply(f), log_var_head.apply(f)};
}

GaussianEncoder::Trace GaussianEncoder::forward_trace(std::span<const double> input) const {
  Trace t{trunk.forward_trace(input), {}};
  t.out.mean = mean_head.apply(t.trunk.output());
  t.out.log_var = log_var_head.apply(t.trunk.output());
  return t;
}

Tensor1 GaussianEncoder::backward(const Trace& trace, std::span<const double> d_mean,
                                  std::span<const double> d_log_var, GaussianEncoder* grads) const {
  const Tensor1& f = trace.trunk.output();
  Tensor1 df(f.size());
  Tensor1 tmp(f.size());
  mean_head.backward(f, d_mean, grads ? &grads->mean_head : nullptr, df);
  log_var_head.backward(f, d_log_var, grads ? &grads->log_var_head : nullptr, tmp);
  for (std::size_t i = 0; i < df.size(); ++i) df[i] += tmp[i];
  return trunk.backward(trace.trunk, df, grads ? &grads->trunk : nullptr);
}

void GaussianEncoder::init_uniform(Rng& rng) {
  trunk.init_uniform(rng);
  mean_head.init_uniform(rng);
  log_var_head.init_uniform(rng);
}

void GaussianEncoder::set_zero() {
  trunk.set_zero();
  mean_head.set_zero();
  log_var_head.set_zero();
}

void GaussianEncoder::append_blocks(const std::string& prefix, std::vector<NamedBlock>& out) {
  trunk.append_blocks(prefix + ".trunk", out);
  mean_head.append_blocks(prefix + ".mean_head", out);
  log_var_head.append_blocks(prefix + ".log_var_head", out);
}

SigmaVaeParams SigmaVaeParams::zeros(const SigmaVaeConfig& config) {
  config.validate();
  const auto d = config.phi_dim;
  const auto ng = config.global_latent;
  SigmaVaeParams p;
  p.global_encoder = GaussianEncoder(config.total_dim() + d, config.global_encoder_hidden, ng);
  p.global_decoder = Mlp(std::vector<std::size_t>{ng + d, config.decoder_hidden, config.decoder_hidden});
  const auto dims = config.partition.dims();
  for (std::size_t j = 0; j < config.clients(); ++j) {
    p.local_encoders.emplace_back(ng + d, config.local_encoder_hidden, config.local_latents[j]);
    p.local_decoders.emplace_back(config.decoder_hidden + config.local_latents[j] + d, dims[j]);
  }
  return p;
}

SigmaVaeParams SigmaVaeParams::initialize(const SigmaVaeConfig& config, Rng& rng) {
  SigmaVaeParams p = zeros(config);
  p.global_encoder.init_uniform(rng);
  for (auto& e : p.local_encoders) e.init_uniform(rng);
  p.global_decoder.init_uniform(rng);
  for (auto& l : p.local_decoders) l.init_uniform(rng);
  return p;
}

void SigmaVaeParams::set_zero() {
  global_encoder.set_zero();
  for (auto& e : local_encoders) e.set_zero();
  global_decoder.set_zero();
  for (auto& l : local_decoders) l.set_zero();
}

std::vector<NamedBlock> SigmaVaeParams::blocks() {
  std::vector<NamedBlock> out;
  global_encoder.append_blocks("global_encoder", out);
  for (std::size_t j = 0; j < local_encoders.size(); ++j)
    local_encoders[j].append_blocks("local_encoder." + std::to_string(j), out);
  global_decoder.append_blocks("global_decoder", out);
  for (std::size_t j = 0; j < local_decoders.size(); ++j)
    local_decoders[j].append_blocks("local_decoder." + std::to_string(j), out);
  return out;
}

bool SigmaVaeParams::operator==(const SigmaVaeParams& o) const {
  auto a = const_cast<SigmaVaeParams&>(*this).blocks();
  auto b = const_cast<SigmaVaeParams&>(o).blocks();
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].name != b[i].name || !std::ranges::equal(a[i].data, b[i].data)) return false;
  return true;
}

GaussianParams encode_global(const SigmaVaeParams& params, const SigmaVaeConfig& config,
                             std::span<const double> theta_all, std::span<const double> phi) {
  require_size(theta_all.size(), config.total_dim(), "encode_global theta");
  require_size(phi.size(), config.phi_dim, "encode_global phi");
  return params.global_encoder.forward(concat({theta_all, phi}));
}

GaussianParams encode_local(const SigmaVaeParams& params, const SigmaVaeConfig& config,
                            std::size_t client, std::span<const double> z_global,
                            std::span<const double> phi) {
  if (client >= config.clients()) throw DimensionError("encode_local: client index out of range");
  require_size(z_global.size(), config.global_latent, "encode_local z_G");
  require_size(phi.size(), config.phi_dim, "encode_local phi");
  return params.local_encoders[client].forward(concat({z_global, phi}));
}

std::vector<Tensor1> decode(const SigmaVaeParams& params, const SigmaVaeConfig& config,
                            std::span<const double> z_global, const std::vector<Tensor1>& z_local,
                            std::span<const double> phi) {
  require_size(z_global.size(), config.global_latent, "decode z_G");
  require_size(z_local.size(), config.clients(), "decode local latent count");
  require_size(phi.size(), config.phi_dim, "decode phi");
  const Tensor1 h = params.global_decoder.forward(concat({z_global, phi}));
  std::vector<Tensor1> out;
  out.reserve(config.clients());
  for (std::size_t j = 0; j < config.clients(); ++j) {
    require_size(z_local[j].size(), config.local_latents[j],
                 "decode z_L" + std::to_string(j));
    out.push_back(params.local_decoders[j].apply(concat({h, z_local[j], phi})));
  }
  return out;
}

Tensor1 assemble(const ClientPartition& partition, const std::vector<Tensor1>& blocks) {
  require_size(blocks.size(), partition.clients(), "assemble block count");
  Tensor1 full(partition.total_dim());
  for (std::size_t j = 0; j < blocks.size(); ++j) partition.scatter(blocks[j], j, full);
  return full;
}

LatentNoise LatentNoise::draw(Rng& rng, const SigmaVaeConfig& config) {
  LatentNoise n;
  n.global.resize(config.global_latent);
  rng.fill_normal(n.global);
  for (auto width : config.local_latents) {
    Tensor1 e(width);
    rng.fill_normal(e);
    n.local.push_back(std::move(e));
  }
  return n;
}

double elbo_datum(const SigmaVaeParams& params, const SigmaVaeConfig& config,
                  std::span<const double> theta, std::span<const double> phi,
                  const LatentNoise& noise, SigmaVaeParams* grads, double scale) {
  require_size(theta.size(), config.total_dim(), "elbo theta");
  require_size(phi.size(), config.phi_dim, "elbo phi");
  const std::size_t ng = config.global_latent;
  const std::size_t nj = config.clients();
  const double gamma2 = config.gamma * config.gamma;
  const double log_norm = -0.5 * std::log(2.0 * std::numbers::pi * gamma2);

  // Global posterior and its sample.
  const auto genc = params.global_encoder.forward_trace(concat({theta, phi}));
  const auto& mg = genc.out.mean;
  const auto& lvg = genc.out.log_var;
  Tensor1 sdg(ng), zg(ng);
  for (std::size_t i = 0; i < ng; ++i) {
    sdg[i] = std::exp(0.5 * lvg[i]);
    zg[i] = mg[i] + sdg[i] * noise.global[i];
  }
  double elbo = -gaussian_kl(mg, lvg);

  const Tensor1 zphi = concat({zg, phi});
  const MlpTrace dec = params.global_decoder.forward_trace(zphi);
  const Tensor1& h = dec.output();

  std::vector<GaussianEncoder::Trace> lenc;
  std::vector<Tensor1> zl(nj), head_in(nj), resid(nj), sdl(nj);
  lenc.reserve(nj);
  for (std::size_t j = 0; j < nj; ++j) {
    lenc.push_back(params.local_encoders[j].forward_trace(zphi));
    const auto& ml = lenc[j].out.mean;
    const auto& lvl = lenc[j].out.log_var;
    const std::size_t nl = ml.size();
    sdl[j].resize(nl);
    zl[j].resize(nl);
    for (std::size_t i = 0; i < nl; ++i) {
      sdl[j][i] = std::exp(0.5 * lvl[i]);
      zl[j][i] = ml[i] + sdl[j][i] * noise.local[j][i];
    }
    elbo -= gaussian_kl(ml, lvl);

    head_in[j] = concat({h, zl[j], phi});
    const Tensor1 mean = params.local_decoders[j].apply(head_in[j]);
    const auto& block = config.partition.block(j);
    resid[j].resize(block.size());
    for (std::size_t k = 0; k < block.size(); ++k) {
      const double r = theta[block[k]] - mean[k];
      resid[j][k] = r;
      elbo += log_norm - 0.5 * r * r / gamma2;
    }
  }

  if (grads == nullptr) return elbo;

  // Reverse pass. Every seed is multiplied by `scale`.
  const std::size_t hd = h.size();
  Tensor1 dh(hd, 0.0);
  Tensor1 dzg(ng, 0.0);
  for (std::size_t j = 0; j < nj; ++j) {
    Tensor1 dmean(resid[j].size());
    for (std::size_t k = 0; k < dmean.size(); ++k) dmean[k] = scale * resid[j][k] / gamma2;
    Tensor1 din(head_in[j].size());
    params.local_decoders[j].backward(head_in[j], dmean, &grads->local_decoders[j], din);
    for (std::size_t i = 0; i < hd; ++i) dh[i] += din[i];

    const auto& ml = lenc[j].out.mean;
    const auto& lvl = lenc[j].out.log_var;
    const std::size_t nl = ml.size();
    Tensor1 dml(nl), dlvl(nl);
    for (std::size_t i = 0; i < nl; ++i) {
      const double dz = din[hd + i];
      dml[i] = dz - scale * ml[i];
      dlvl[i] = dz * 0.5 * sdl[j][i] * noise.local[j][i] - scale * 0.5 * (std::exp(lvl[i]) - 1.0);
    }
    const Tensor1 dinput =
        params.local_encoders[j].backward(lenc[j], dml, dlvl, &grads->local_encoders[j]);
    for (std::size_t i = 0; i < ng; ++i) dzg[i] += dinput[i];
  }
  const Tensor1 ddec = params.global_decoder.backward(dec, dh, &grads->global_decoder);
  for (std::size_t i = 0; i < ng; ++i) dzg[i] += ddec[i];

  Tensor1 dmg(ng), dlvg(ng);
  for (std::size_t i = 0; i < ng; ++i) {
    dmg[i] = dzg[i] - scale * mg[i];
    dlvg[i] = dzg[i] * 0.5 * sdg[i] * noise.global[i] - scale * 0.5 * (std::exp(lvg[i]) - 1.0);
  }
  params.global_encoder.backward(genc, dmg, dlvg, &grads->global_encoder);
  return elbo;
}

ElboEstimate elbo_minibatch(const SigmaVaeParams& params, const SigmaVaeConfig& config,
                            const Dataset& data, std::span<const std::size_t> batch, Rng& rng) {
  if (batch.empty()) throw ConfigError("elbo_minibatch: empty batch");
  require_size(data.dim(), config.total_dim(), "dataset dimension");
  require_size(data.phi_dim(), config.phi_dim, "dataset phi dimension");
  ElboEstimate est{0.0, SigmaVaeParams::zeros(config)};
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto i = batch[b];
    const LatentNoise noise = LatentNoise::draw(rng, config);
    const double v =
        elbo_datum(params, config, data.theta.row(i), data.phi.row(i), noise, &est.grads, scale);
    if (!std::isfinite(v))
      throw NumericError("non-finite ELBO at batch index " + std::to_string(b) + " (row " +
                         std::to_string(i) + ")");
    est.value += v * scale;
  }
  return est;
}

namespace {

/// Epoch-wise permutation sampler.
class BatchSampler {
 public:
  BatchSampler(std::size_t n, std::uint64_t seed) : n_(n), seed_(seed) {}

  std::vector<std::size_t> next(std::size_t batch) {
    std::vector<std::size_t> out;
    out.reserve(batch);
    while (out.size() < batch) {
      if (cursor_ == order_.size()) reshuffle();
      out.push_back(order_[cursor_++]);
    }
    return out;
  }

 private:
  void reshuffle() {
    order_.resize(n_);
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    Rng rng = Rng::derive(seed_, kShuffleStream, epoch_++);
    for (std::size_t i = n_; i > 1; --i) std::swap(order_[i - 1], order_[rng.below(i)]);
    cursor_ = 0;
  }

  std::size_t n_;
  std::uint64_t seed_;
  std::uint64_t epoch_ = 0;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

}  // namespace

TrainingRun train(const SigmaVaeConfig& config, const Dataset& data) {
  config.validate();
  require_size(data.dim(), config.total_dim(), "training data dimension");
  require_size(data.phi_dim(), config.phi_dim, "training data phi dimension");
  if (data.size() == 0) throw ConfigError("training data is empty");
  const auto& tc = config.training;

  Rng init_rng = Rng::derive(tc.seed, kInitStream);
  TrainingRun run{{config, SigmaVaeParams::initialize(config, init_rng), {0, 0.0, tc.seed}}, {}};
  auto& params = run.checkpoint.params;
  auto param_blocks = params.blocks();
  AdamState adam({tc.learning_rate, 0.9, 0.999, 1e-8}, param_blocks);
  Rng noise_rng = Rng::derive(tc.seed, kNoiseStream);
  BatchSampler sampler(data.size(), tc.seed);

  std::deque<double> window;
  run.trace.reserve(tc.iterations);
  for (std::size_t it = 0; it < tc.iterations; ++it) {
    const auto batch = sampler.next(tc.batch_size);
    ElboEstimate est;
    try {
      est = elbo_minibatch(params, config, data, batch, noise_rng);
    } catch (const NumericError& e) {
      throw NumericError("training iteration " + std::to_string(it) + ": " + e.what());
    }
    auto grad_blocks = est.grads.blocks();
    for (auto& g : grad_blocks)
      for (double& v : g.data) v = -v;
    adam.step(param_blocks, grad_blocks);

    window.push_back(est.value);
    if (window.size() > tc.smoothing_window) window.pop_front();
    const double mean = std::accumulate(window.begin(), window.end(), 0.0) / static_cast<double>(window.size());
    run.trace.push_back({it, est.value, mean});
  }
  run.checkpoint.metadata.iterations_completed = tc.iterations;
  run.checkpoint.metadata.final_smoothed_elbo = run.trace.empty() ? 0.0 : run.trace.back().smoothed_elbo;
  return run;
}

}  // namespace sigma
