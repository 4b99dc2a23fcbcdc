#include "sigma/nn.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "sigma/error.hpp"

namespace sigma {

void DenseLayer::apply(std::span<const double> x, std::span<double> out) const {
  matvec(weights, x, out);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bias[i];
}

Tensor1 DenseLayer::apply(std::span<const double> x) const {
  Tensor1 out(out_dim());
  apply(x, out);
  return out;
}

void DenseLayer::backward(std::span<const double> x, std::span<const double> g, DenseLayer* grad,
                          std::span<double> input_grad) const {
  if (grad != nullptr) {
    for (std::size_t r = 0; r < out_dim(); ++r) {
      const double gr = g[r];
      grad->bias[r] += gr;
      if (gr == 0.0) continue;
      auto row = grad->weights.row(r);
      for (std::size_t c = 0; c < in_dim(); ++c) row[c] += gr * x[c];
    }
  }
  if (!input_grad.empty()) matvec_transposed(weights, g, input_grad);
}

void DenseLayer::init_uniform(Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in_dim() + out_dim()));
  for (double& w : weights.flat()) w = rng.uniform(-limit, limit);
  std::fill(bias.begin(), bias.end(), 0.0);
}

void DenseLayer::set_zero() {
  std::fill(weights.flat().begin(), weights.flat().end(), 0.0);
  std::fill(bias.begin(), bias.end(), 0.0);
}

void DenseLayer::append_blocks(const std::string& prefix, std::vector<NamedBlock>& out) {
  out.push_back({prefix + ".weight", weights.flat()});
  out.push_back({prefix + ".bias", bias});
}

Mlp::Mlp(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw DimensionError("Mlp needs at least one layer");
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    if (layers_[k].bias.size() != layers_[k].out_dim())
      throw DimensionError("Mlp layer " + std::to_string(k) + ": bias length " +
                           std::to_string(layers_[k].bias.size()) + " != weight rows " +
                           std::to_string(layers_[k].out_dim()));
    if (k > 0 && layers_[k].in_dim() != layers_[k - 1].out_dim())
      throw DimensionError("Mlp layer " + std::to_string(k) + ": input width " +
                           std::to_string(layers_[k].in_dim()) + " != previous output width " +
                           std::to_string(layers_[k - 1].out_dim()));
  }
}

Mlp::Mlp(const std::vector<std::size_t>& dims) {
  if (dims.size() < 2) throw DimensionError("Mlp needs at least input and output widths");
  for (std::size_t k = 0; k + 1 < dims.size(); ++k) layers_.emplace_back(dims[k], dims[k + 1]);
}

void Mlp::check_input(std::size_t n) const {
  if (n != in_dim())
    throw DimensionError("Mlp layer 0: expected input length " + std::to_string(in_dim()) +
                         ", got " + std::to_string(n));
}

Tensor1 Mlp::forward(std::span<const double> input) const {
  check_input(input.size());
  Tensor1 x(input.begin(), input.end());
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    Tensor1 y = layers_[k].apply(x);
    if (k + 1 < layers_.size())
      for (double& v : y) v = std::max(v, 0.0);
    x = std::move(y);
  }
  return x;
}

MlpTrace Mlp::forward_trace(std::span<const double> input) const {
  check_input(input.size());
  MlpTrace t;
  t.inputs.reserve(layers_.size() + 1);
  t.pre.reserve(layers_.size());
  t.inputs.emplace_back(input.begin(), input.end());
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    t.pre.push_back(layers_[k].apply(t.inputs.back()));
    Tensor1 a = t.pre.back();
    if (k + 1 < layers_.size())
      for (double& v : a) v = std::max(v, 0.0);
    t.inputs.push_back(std::move(a));
  }
  return t;
}

Tensor1 Mlp::backward(const MlpTrace& trace, std::span<const double> upstream, Mlp* grads) const {
  require_size(upstream.size(), out_dim(), "Mlp upstream gradient");
  Tensor1 g(upstream.begin(), upstream.end());
  for (std::size_t k = layers_.size(); k-- > 0;) {
    if (k + 1 < layers_.size()) {
      const Tensor1& pre = trace.pre[k];
      for (std::size_t i = 0; i < g.size(); ++i)
        if (pre[i] <= 0.0) g[i] = 0.0;
    }
    Tensor1 gin(layers_[k].in_dim());
    layers_[k].backward(trace.inputs[k], g, grads ? &grads->layers_[k] : nullptr, gin);
    g = std::move(gin);
  }
  return g;
}

void Mlp::init_uniform(Rng& rng) {
  for (auto& l : layers_) l.init_uniform(rng);
}

Mlp Mlp::zeros_like() const {
  Mlp out = *this;
  out.set_zero();
  return out;
}

void Mlp::set_zero() {
  for (auto& l : layers_) l.set_zero();
}

void Mlp::append_blocks(const std::string& prefix, std::vector<NamedBlock>& out) {
  for (std::size_t k = 0; k < layers_.size(); ++k)
    layers_[k].append_blocks(prefix + "." + std::to_string(k), out);
}

MlpGradients backprop(const Mlp& net, std::span<const double> input,
                      std::span<const double> upstream) {
  MlpGradients out{net.zeros_like(), {}};
  const MlpTrace trace = net.forward_trace(input);
  out.input = net.backward(trace, upstream, &out.params);
  return out;
}

Tensor1 reparam_sample(std::span<const double> mu, std::span<const double> log_var,
                       std::span<const double> eps) {
  require_size(log_var.size(), mu.size(), "reparam_sample log_var");
  require_size(eps.size(), mu.size(), "reparam_sample eps");
  Tensor1 out(mu.size());
  for (std::size_t i = 0; i < mu.size(); ++i) out[i] = mu[i] + std::exp(0.5 * log_var[i]) * eps[i];
  return out;
}

}  // namespace sigma
