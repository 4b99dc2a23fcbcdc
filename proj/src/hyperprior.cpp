#include "sigma/hyperprior.hpp"

#include <cmath>
#include <numbers>

#include "sigma/error.hpp"

namespace sigma {

namespace {
double sigmoid(double u) {
  if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
  const double e = std::exp(u);
  return e / (1.0 + e);
}
/// log(1 + exp(x)) without overflow.
double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
}  // namespace

Hyperprior Hyperprior::uniform(double lo, double hi) {
  Hyperprior h;
  h.kind = Kind::Uniform;
  h.lo = lo;
  h.hi = hi;
  h.validate();
  return h;
}

Hyperprior Hyperprior::logit_normal(double loc, double scale, bool scale_is_variance) {
  Hyperprior h;
  h.kind = Kind::LogitNormal;
  h.loc = loc;
  h.scale = scale;
  h.scale_is_variance = scale_is_variance;
  h.validate();
  return h;
}

void Hyperprior::validate() const {
  if (!(hi > lo)) throw ConfigError("hyperprior: hi must exceed lo");
  if (kind == Kind::LogitNormal && !(scale > 0.0))
    throw ConfigError("hyperprior: logit-normal scale must be positive");
}

double Hyperprior::to_phi(double u) const { return lo + (hi - lo) * sigmoid(u); }

double Hyperprior::dphi_du(double u) const {
  const double s = sigmoid(u);
  return (hi - lo) * s * (1.0 - s);
}

double Hyperprior::to_unconstrained(double phi) const {
  const double p = (phi - lo) / (hi - lo);
  if (!(p > 0.0 && p < 1.0)) throw ConfigError("hyperprior: φ outside (lo, hi)");
  return std::log(p) - std::log1p(-p);
}

double Hyperprior::log_density_unconstrained(double u, double* grad) const {
  if (kind == Kind::Uniform) {
    if (grad) *grad = 1.0 - 2.0 * sigmoid(u);
    return -softplus(-u) - softplus(u);
  }
  const double v = variance();
  const double d = u - loc;
  if (grad) *grad = -d / v;
  return -0.5 * std::log(2.0 * std::numbers::pi * v) - 0.5 * d * d / v;
}

double Hyperprior::density_phi(double phi) const {
  if (!(phi > lo && phi < hi)) return 0.0;
  const double u = to_unconstrained(phi);
  return std::exp(log_density_unconstrained(u)) / dphi_du(u);
}

double Hyperprior::sample_phi(Rng& rng) const {
  if (kind == Kind::Uniform) return rng.uniform(lo, hi);
  return to_phi(loc + std::sqrt(variance()) * rng.normal());
}

}  // namespace sigma
