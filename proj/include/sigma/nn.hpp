#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "sigma/rng.hpp"
#include "sigma/tensor.hpp"

namespace sigma {

/// A named, mutable view of one parameter (or gradient) tensor.
struct NamedBlock {
  std::string name;
  std::span<double> data;
};

/// Affine map `weights * x + bias`; weights are (out x in).
struct DenseLayer {
  Tensor2 weights;
  Tensor1 bias;

  DenseLayer() = default;
  DenseLayer(std::size_t in, std::size_t out) : weights(out, in), bias(out, 0.0) {}

  std::size_t in_dim() const noexcept { return weights.cols(); }
  std::size_t out_dim() const noexcept { return weights.rows(); }

  void apply(std::span<const double> x, std::span<double> out) const;
  Tensor1 apply(std::span<const double> x) const;

  /// Accumulate parameter gradients for upstream `g` at input `x` into
  /// `grad` (skipped when null), and write the input gradient into
  /// `input_grad` (skipped when empty).
  void backward(std::span<const double> x, std::span<const double> g, DenseLayer* grad,
                std::span<double> input_grad) const;

  /// Uniform in ±sqrt(6 / (fan_in + fan_out)); bias zero.
  void init_uniform(Rng& rng);
  void set_zero();

  void append_blocks(const std::string& prefix, std::vector<NamedBlock>& out);
};

/// Per-layer values recorded by a forward pass, needed for backprop.
struct MlpTrace {
  /// inputs[k] is the input to layer k; inputs.back() is the network output.
  std::vector<Tensor1> inputs;
  /// Pre-activations of each layer.
  std::vector<Tensor1> pre;

  const Tensor1& output() const { return inputs.back(); }
};

/// Stack of dense layers with ReLU between layers and identity output.
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<DenseLayer> layers);
  /// Layers of the given widths: dims = {in, h1, ..., out}.
  explicit Mlp(const std::vector<std::size_t>& dims);

  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
  std::vector<DenseLayer>& layers() noexcept { return layers_; }
  std::size_t in_dim() const { return layers_.front().in_dim(); }
  std::size_t out_dim() const { return layers_.back().out_dim(); }

  Tensor1 forward(std::span<const double> input) const;
  MlpTrace forward_trace(std::span<const double> input) const;

  /// Reverse pass: accumulates d(output·upstream)/dθ into `grads` (which
  /// must have this network's shape, or be null to skip parameter
  /// gradients) and returns the input gradient.
  Tensor1 backward(const MlpTrace& trace, std::span<const double> upstream, Mlp* grads) const;

  void init_uniform(Rng& rng);
  /// Same architecture, all parameters zero. Used as a gradient accumulator.
  Mlp zeros_like() const;
  void set_zero();

  void append_blocks(const std::string& prefix, std::vector<NamedBlock>& out);

 private:
  void check_input(std::size_t n) const;
  std::vector<DenseLayer> layers_;
};

struct MlpGradients {
  Mlp params;
  Tensor1 input;
};

/// Gradients of output·upstream with respect to every parameter and the input.
MlpGradients backprop(const Mlp& net, std::span<const double> input,
                      std::span<const double> upstream);

/// mu + exp(0.5 * log_var) * eps, elementwise.
Tensor1 reparam_sample(std::span<const double> mu, std::span<const double> log_var,
                       std::span<const double> eps);

}  // namespace sigma
