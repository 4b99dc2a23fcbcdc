#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "sigma/error.hpp"
#include "sigma/variational.hpp"
#include "test_support.hpp"
#include "toy_models.hpp"

using namespace sigma;

namespace {

BlockLayout single_block(std::size_t n) { return BlockLayout({{"x", n, kGlobalOwner}}); }

// Gaussian target N(m, S) with S given by its inverse P.
LogJointFn gaussian_target(Tensor1 m, Tensor2 p) {
  return [m, p](std::span<const double> x, std::span<double> g) {
    const std::size_t n = m.size();
    Tensor1 r(n);
    for (std::size_t i = 0; i < n; ++i) r[i] = x[i] - m[i];
    const Tensor1 pr = matvec(p, r);
    for (std::size_t i = 0; i < n; ++i) g[i] = -pr[i];
    return -0.5 * dot(r, pr);
  };
}

// Closed-form ELBO (up to the target's constant) of q = N(mu, diag sigma²).
double gaussian_elbo(const Tensor1& m, const Tensor2& p, std::span<const double> mu,
                     std::span<const double> log_sigma) {
  const std::size_t n = m.size();
  Tensor1 r(n);
  for (std::size_t i = 0; i < n; ++i) r[i] = mu[i] - m[i];
  double v = -0.5 * dot(r, matvec(p, r));
  for (std::size_t i = 0; i < n; ++i) {
    v -= 0.5 * p(i, i) * std::exp(2.0 * log_sigma[i]);
    v += log_sigma[i] + 0.5 * (1.0 + std::log(2.0 * std::numbers::pi));
  }
  return v;
}

}  // namespace

TEST_CASE("STL is identically zero at the optimum of a standard normal target") {
  MeanFieldApprox q = MeanFieldApprox::initial(single_block(3), 0.0, 0.0);
  const LogJointFn f = gaussian_target({0, 0, 0}, Tensor2::identity(3));
  Rng rng(1);
  for (int k = 0; k < 1000; ++k) {
    Tensor1 eps(3);
    rng.fill_normal(eps);
    const StlGradient g = stl_gradient(f, q, eps);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(g.d_mean[i] == 0.0);
      CHECK(g.d_log_sigma[i] == 0.0);
    }
  }
}

TEST_CASE("STL hand computation for q = N(0, 2^2) against N(0, 1)") {
  MeanFieldApprox q = MeanFieldApprox::initial(single_block(1), 0.0, std::log(2.0));
  const LogJointFn f = gaussian_target({0}, Tensor2::identity(1));
  const StlGradient at0 = stl_gradient(f, q, Tensor1{0.0});
  CHECK(at0.d_mean[0] == 0.0);
  CHECK(at0.d_log_sigma[0] == 0.0);
  // x = 2, grad log p = -2, entropy path term eps/sigma = 0.5.
  const StlGradient at1 = stl_gradient(f, q, Tensor1{1.0});
  CHECK(at1.d_mean[0] == doctest::Approx(-1.5).epsilon(1e-15));
  CHECK(at1.d_log_sigma[0] == doctest::Approx(-3.0).epsilon(1e-15));
}

TEST_CASE("STL mean matches the finite-difference ELBO gradient") {
  const Tensor1 m{0.5, -1.0};
  const Tensor2 p(2, 2, {2.0, 0.6, 0.6, 1.0});
  const LogJointFn f = gaussian_target(m, p);
  MeanFieldApprox q = MeanFieldApprox::initial(single_block(2), 0.0, -0.3);
  q.mean = {0.1, 0.2};
  q.log_sigma = {-0.2, 0.3};
  const std::size_t n = 100000;
  Tensor1 s(4, 0.0), ss(4, 0.0);
  Rng rng(3);
  Tensor1 eps(2);
  for (std::size_t k = 0; k < n; ++k) {
    rng.fill_normal(eps);
    const StlGradient g = stl_gradient(f, q, eps);
    const double v[] = {g.d_mean[0], g.d_mean[1], g.d_log_sigma[0], g.d_log_sigma[1]};
    for (int i = 0; i < 4; ++i) {
      s[i] += v[i];
      ss[i] += v[i] * v[i];
    }
  }
  const auto elbo_of = [&](std::span<const double> theta) {
    return gaussian_elbo(m, p, theta.subspan(0, 2), theta.subspan(2, 2));
  };
  const Tensor1 fd =
      sigma::testing::numeric_gradient(elbo_of, {q.mean[0], q.mean[1], q.log_sigma[0], q.log_sigma[1]});
  for (int i = 0; i < 4; ++i) {
    const double mean = s[i] / n;
    const double se = std::sqrt((ss[i] / n - mean * mean) / n);
    CHECK(std::abs(mean - fd[i]) < 3.0 * se + 1e-9);
  }
}

TEST_CASE("STL rejects non-finite gradients") {
  MeanFieldApprox q = MeanFieldApprox::initial(single_block(1));
  const LogJointFn bad = [](std::span<const double>, std::span<double> g) {
    g[0] = std::nan("");
    return 0.0;
  };
  CHECK_THROWS_AS(stl_gradient(bad, q, Tensor1{0.3}), NumericError);
}

TEST_CASE("mfvi_fit on a conjugate Gaussian target") {
  const double m = 1.5, v = 0.5;
  const LogJointFn f = gaussian_target({m}, Tensor2(1, 1, {1.0 / v}));
  MfviOptions opt;
  opt.steps = 5000;
  opt.adam.learning_rate = 1e-2;
  opt.noise = sequential_noise(7);
  const MfviResult r = mfvi_fit(f, MeanFieldApprox::initial(single_block(1)), opt);
  CHECK(std::abs(r.approx.mean[0] - m) < 0.02);
  CHECK(std::abs(std::exp(2.0 * r.approx.log_sigma[0]) / v - 1.0) < 0.05);
  CHECK(r.elbo_trace.size() == 5000);

  // Smoothed trace (window 200) from step 200 on. Single-sample noise and
  // Adam's fixed-size steps near the optimum make small dips unavoidable, so
  // every dip is bounded by 2% of the total rise.
  opt.adam.learning_rate = 1e-3;
  const MfviResult slow = mfvi_fit(f, MeanFieldApprox::initial(single_block(1)), opt);
  std::vector<double> smooth;
  double acc = 0.0;
  for (std::size_t t = 0; t < slow.elbo_trace.size(); ++t) {
    acc += slow.elbo_trace[t];
    if (t >= 200) acc -= slow.elbo_trace[t - 200];
    if (t + 1 >= 200) smooth.push_back(acc / 200.0);
  }
  const double rise = smooth.back() - smooth.front();
  CHECK(rise > 0.0);
  double worst_dip = 0.0;
  for (std::size_t t = 1; t < smooth.size(); ++t) worst_dip = std::max(worst_dip, smooth[t - 1] - smooth[t]);
  INFO("worst dip " << worst_dip << ", rise " << rise);
  CHECK(worst_dip <= 0.02 * rise);
}

TEST_CASE("mfvi_fit with zero steps returns the initialization") {
  const LogJointFn f = gaussian_target({1.0}, Tensor2::identity(1));
  MfviOptions opt;
  opt.steps = 0;
  MeanFieldApprox init = MeanFieldApprox::initial(single_block(1));
  const MfviResult r = mfvi_fit(f, init, opt);
  CHECK(r.approx.mean == init.mean);
  CHECK(r.approx.log_sigma == init.log_sigma);
}

TEST_CASE("mfvi_fit aborts on a non-finite ELBO with the step index") {
  int calls = 0;
  const LogJointFn f = [&](std::span<const double> x, std::span<double> g) {
    g[0] = -x[0];
    return ++calls > 3 ? -std::numeric_limits<double>::infinity() : -0.5 * x[0] * x[0];
  };
  MfviOptions opt;
  opt.steps = 10;
  try {
    mfvi_fit(f, MeanFieldApprox::initial(single_block(1)), opt);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("step 3") != std::string::npos);
  }
}

TEST_CASE("block layout validation") {
  CHECK_THROWS_AS(BlockLayout({{"a", 1, 0}, {"g", 1, kGlobalOwner}}), ConfigError);
  CHECK_THROWS_AS(BlockLayout({{"a", 1, kGlobalOwner}, {"a", 1, 0}}), ConfigError);
  CHECK_THROWS_AS(BlockLayout({{"g", 1, kGlobalOwner}, {"a", 1, 1}}), ConfigError);
  const BlockLayout l({{"g", 2, kGlobalOwner}, {"a", 3, 0}, {"b", 1, 0}, {"c", 4, 1}});
  CHECK(l.total() == 10);
  CHECK(l.global_size() == 2);
  CHECK(l.client_offset(1) == 6);
  CHECK(l.client_size(0) == 4);
}

TEST_CASE("factorized model log joint is the sum of its pieces") {
  const FactorizedModel m = sigma::testing::toy_model(2, {{0.1, 0.2, 0.3}, {-1.0}, {0.5, 0.5}});
  Rng rng(2);
  Tensor1 x(m.layout.total()), g(x.size());
  rng.fill_normal(x);
  const double total = m.log_joint(x, g);
  Tensor1 gg(2), scratch(3);
  double parts = m.global->evaluate(std::span<const double>(x).subspan(0, 2), gg);
  for (std::size_t j = 0; j < 3; ++j) {
    Tensor1 gl(m.layout.client_size(j)), tmp(2);
    parts += m.clients[j]->evaluate(std::span<const double>(x).subspan(0, 2),
                                    std::span<const double>(x).subspan(m.layout.client_offset(j),
                                                                       m.layout.client_size(j)),
                                    tmp, gl);
  }
  CHECK(std::abs(total - parts) < 1e-12);
  const auto f = [&](std::span<const double> p) {
    Tensor1 t(p.size());
    return m.log_joint(p, t);
  };
  CHECK(sigma::testing::rel_error(g, sigma::testing::numeric_gradient(f, x)) < 1e-6);
}
