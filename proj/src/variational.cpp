#include "sigma/variational.hpp"

#include <cmath>
#include <numbers>

#include "sigma/error.hpp"
#include "sigma/rng.hpp"

namespace sigma {

BlockLayout::BlockLayout(std::vector<BlockSpec> blocks) : blocks_(std::move(blocks)) {
  int last_owner = kGlobalOwner;
  for (const auto& b : blocks_) {
    if (b.size == 0) throw ConfigError("block '" + b.name + "' is empty");
    if (b.owner < last_owner)
      throw ConfigError("block '" + b.name + "' breaks the global-then-client ordering");
    if (b.owner > last_owner) {
      if (b.owner != static_cast<int>(client_offsets_.size()))
        throw ConfigError("block '" + b.name + "': client ids must be consecutive from 0");
      client_offsets_.push_back(total_);
      client_sizes_.push_back(0);
      last_owner = b.owner;
    }
    offsets_.push_back(total_);
    total_ += b.size;
    if (b.owner == kGlobalOwner)
      global_size_ += b.size;
    else
      client_sizes_.back() += b.size;
  }
  for (std::size_t i = 0; i < blocks_.size(); ++i)
    for (std::size_t k = i + 1; k < blocks_.size(); ++k)
      if (blocks_[i].name == blocks_[k].name)
        throw ConfigError("duplicate block name '" + blocks_[i].name + "'");
}

std::optional<std::size_t> BlockLayout::find(const std::string& name) const {
  for (std::size_t i = 0; i < blocks_.size(); ++i)
    if (blocks_[i].name == name) return i;
  return std::nullopt;
}

std::vector<BlockSpec> BlockLayout::global_blocks() const {
  std::vector<BlockSpec> out;
  for (const auto& b : blocks_)
    if (b.owner == kGlobalOwner) out.push_back(b);
  return out;
}

std::vector<BlockSpec> BlockLayout::client_blocks(std::size_t j) const {
  std::vector<BlockSpec> out;
  for (const auto& b : blocks_)
    if (b.owner == static_cast<int>(j)) out.push_back(b);
  return out;
}

MeanFieldApprox MeanFieldApprox::initial(BlockLayout layout, double mean, double log_sigma) {
  const auto n = layout.total();
  return {std::move(layout), Tensor1(n, mean), Tensor1(n, log_sigma)};
}

Tensor1 mean_field_sample(std::span<const double> mean, std::span<const double> log_sigma,
                          std::span<const double> eps) {
  require_size(eps.size(), mean.size(), "mean-field noise");
  require_size(log_sigma.size(), mean.size(), "mean-field log sigma");
  Tensor1 x(mean.size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = mean[i] + std::exp(log_sigma[i]) * eps[i];
  return x;
}

double mean_field_log_density(std::span<const double> mean, std::span<const double> log_sigma,
                              std::span<const double> x) {
  require_size(x.size(), mean.size(), "mean-field point");
  require_size(log_sigma.size(), mean.size(), "mean-field log sigma");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double z = (x[i] - mean[i]) * std::exp(-log_sigma[i]);
    s += -0.5 * std::log(2.0 * std::numbers::pi) - log_sigma[i] - 0.5 * z * z;
  }
  return s;
}

Tensor1 MeanFieldApprox::sample(std::span<const double> eps) const {
  return mean_field_sample(mean, log_sigma, eps);
}

double MeanFieldApprox::log_density(std::span<const double> x) const {
  return mean_field_log_density(mean, log_sigma, x);
}

std::span<const double> MeanFieldApprox::block_mean(const std::string& name) const {
  const auto b = layout.find(name);
  if (!b) throw DimensionError("no block named '" + name + "'");
  return std::span<const double>(mean).subspan(layout.offset(*b), layout.blocks()[*b].size);
}

std::span<const double> MeanFieldApprox::block_log_sigma(const std::string& name) const {
  const auto b = layout.find(name);
  if (!b) throw DimensionError("no block named '" + name + "'");
  return std::span<const double>(log_sigma).subspan(layout.offset(*b), layout.blocks()[*b].size);
}

void FactorizedModel::validate() const {
  if (!global) throw ConfigError("factorized model has no global term");
  require_size(clients.size(), layout.clients(), "factorized model client count");
  require_size(global->global_size(), layout.global_size(), "global term size");
  for (std::size_t j = 0; j < clients.size(); ++j) {
    require_size(clients[j]->global_size(), layout.global_size(),
                 "client " + std::to_string(j) + " global size");
    require_size(clients[j]->local_size(), layout.client_size(j),
                 "client " + std::to_string(j) + " local size");
  }
}

double FactorizedModel::log_joint(std::span<const double> x, std::span<double> grad) const {
  require_size(x.size(), layout.total(), "log_joint point");
  require_size(grad.size(), layout.total(), "log_joint gradient");
  const std::size_t ng = layout.global_size();
  const auto xg = x.subspan(0, ng);
  auto gg = grad.subspan(0, ng);
  double value = global->evaluate(xg, gg);
  Tensor1 tmp(ng);
  for (std::size_t j = 0; j < clients.size(); ++j) {
    const auto off = layout.client_offset(j);
    const auto n = layout.client_size(j);
    value += clients[j]->evaluate(xg, x.subspan(off, n), tmp, grad.subspan(off, n));
    for (std::size_t i = 0; i < ng; ++i) gg[i] += tmp[i];
  }
  return value;
}

LogJointFn FactorizedModel::as_log_joint() const {
  validate();
  return [this](std::span<const double> x, std::span<double> g) { return log_joint(x, g); };
}

void stl_chain(std::span<const double> grad_log_p, std::span<const double> log_sigma,
               std::span<const double> eps, std::span<double> d_mean,
               std::span<double> d_log_sigma) {
  for (std::size_t i = 0; i < grad_log_p.size(); ++i) {
    const double sigma = std::exp(log_sigma[i]);
    const double g = grad_log_p[i] + eps[i] / sigma;
    d_mean[i] = g;
    d_log_sigma[i] = g * sigma * eps[i];
  }
}

StlGradient stl_gradient(const LogJointFn& log_joint, const MeanFieldApprox& q,
                         std::span<const double> eps) {
  const Tensor1 x = q.sample(eps);
  Tensor1 g(x.size(), 0.0);
  const double lp = log_joint(x, g);
  StlGradient out{Tensor1(x.size()), Tensor1(x.size()), 0.0};
  stl_chain(g, q.log_sigma, eps, out.d_mean, out.d_log_sigma);
  if (!all_finite(out.d_mean) || !all_finite(out.d_log_sigma))
    throw NumericError("non-finite STL gradient");
  out.elbo_sample = lp - q.log_density(x);
  return out;
}

NoiseFn sequential_noise(std::uint64_t seed) {
  auto rng = std::make_shared<Rng>(seed);
  return [rng](std::size_t, std::span<double> eps) { rng->fill_normal(eps); };
}

void fill_keyed_noise(std::uint64_t seed, std::uint64_t step, std::uint64_t stream,
                      std::span<double> out) {
  Rng rng = Rng::derive(seed, step, stream);
  rng.fill_normal(out);
}

NoiseFn block_keyed_noise(const BlockLayout& layout, std::uint64_t seed) {
  return [layout, seed](std::size_t step, std::span<double> eps) {
    require_size(eps.size(), layout.total(), "keyed noise");
    fill_keyed_noise(seed, step, 0, eps.subspan(0, layout.global_size()));
    for (std::size_t j = 0; j < layout.clients(); ++j)
      fill_keyed_noise(seed, step, j + 1, eps.subspan(layout.client_offset(j), layout.client_size(j)));
  };
}

MfviResult mfvi_fit(const LogJointFn& log_joint, MeanFieldApprox init, const MfviOptions& options) {
  MfviResult res{std::move(init), {}};
  auto& q = res.approx;
  const std::size_t n = q.mean.size();
  require_size(q.log_sigma.size(), n, "mean-field log sigma");
  NoiseFn noise = options.noise ? options.noise : sequential_noise(0);
  std::vector<NamedBlock> params{{"mean", q.mean}, {"log_sigma", q.log_sigma}};
  AdamState adam(options.adam, params);
  Tensor1 eps(n), gm(n), gs(n);
  std::vector<NamedBlock> grads{{"mean", gm}, {"log_sigma", gs}};
  res.elbo_trace.reserve(options.steps);
  for (std::size_t step = 0; step < options.steps; ++step) {
    noise(step, eps);
    StlGradient g;
    try {
      g = stl_gradient(log_joint, q, eps);
    } catch (const NumericError& e) {
      throw NumericError("MFVI step " + std::to_string(step) + ": " + e.what());
    }
    if (!std::isfinite(g.elbo_sample))
      throw NumericError("MFVI step " + std::to_string(step) + ": non-finite ELBO");
    for (std::size_t i = 0; i < n; ++i) {
      gm[i] = -g.d_mean[i];
      gs[i] = -g.d_log_sigma[i];
    }
    if (options.clip_norm) clip_grad_norm(grads, *options.clip_norm);
    adam.step(params, grads);
    res.elbo_trace.push_back(g.elbo_sample);
    if (options.on_step) options.on_step(step, q);
  }
  return res;
}

}  // namespace sigma
