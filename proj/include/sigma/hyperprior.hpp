#pragma once

#include "sigma/rng.hpp"

namespace sigma {

/// Prior on the scalar hyperparameter φ, expressed on an unconstrained
/// coordinate u with φ = lo + (hi - lo) * sigmoid(u).
///
/// Uniform: φ ~ U(lo, hi), so u is standard logistic.
/// LogitNormal: u ~ N(loc, scale), where scale is a variance unless
/// scale_is_variance is false.
struct Hyperprior {
  enum class Kind { Uniform, LogitNormal };

  Kind kind = Kind::Uniform;
  double lo = 0.0;
  double hi = 1.0;
  double loc = 0.0;
  double scale = 2.0;
  bool scale_is_variance = true;

  static Hyperprior uniform(double lo, double hi);
  static Hyperprior logit_normal(double loc, double scale, bool scale_is_variance = true);

  void validate() const;
  double variance() const { return scale_is_variance ? scale : scale * scale; }

  double to_phi(double u) const;
  double dphi_du(double u) const;
  double to_unconstrained(double phi) const;
  /// log p(u); writes d/du log p(u) to grad when non-null.
  double log_density_unconstrained(double u, double* grad = nullptr) const;
  /// Density of φ itself (zero outside (lo, hi)).
  double density_phi(double phi) const;
  double sample_phi(Rng& rng) const;
};

}  // namespace sigma
