#pragma once

// Exponential-family numerics for the diagonal Gaussian bias and the two
// likelihood families (fixed-variance Gaussian, Bernoulli): log normalizers,
// the Legendre maps between natural and mean coordinates, conjugate posterior
// updates and log densities along two algebraically distinct routes.

#include <cstddef>
#include <span>
#include <variant>
#include <vector>

#include "cebm/rng.hpp"

namespace cebm::expfam {

// Agreement tolerance of the canonical and Bregman density routes.
inline constexpr double kIdentityTolerance = 1e-10;
// Agreement tolerance of the closed-form log normalizer against quadrature.
inline constexpr double kQuadratureTolerance = 1e-6;

// Natural parameters of a diagonal Gaussian in (z, z^2) form:
// lam1 = mu / sigma^2, lam2 = -1 / (2 sigma^2).
class GaussianNaturalParams {
 public:
  // Throws DomainError unless sizes match, values are finite and lam2 < 0.
  GaussianNaturalParams(std::vector<double> lam1, std::vector<double> lam2);

  static GaussianNaturalParams standard(std::size_t dims);

  std::size_t dims() const noexcept { return lam1_.size(); }
  const std::vector<double>& lam1() const noexcept { return lam1_; }
  const std::vector<double>& lam2() const noexcept { return lam2_; }

  friend bool operator==(const GaussianNaturalParams&, const GaussianNaturalParams&) = default;

 private:
  std::vector<double> lam1_;
  std::vector<double> lam2_;
};

// Mean parameters: m1 = E[z], m2 = E[z^2].
class GaussianMeanParams {
 public:
  // Throws DomainError unless sizes match, values are finite and m2 > m1^2.
  GaussianMeanParams(std::vector<double> m1, std::vector<double> m2);

  std::size_t dims() const noexcept { return m1_.size(); }
  const std::vector<double>& m1() const noexcept { return m1_; }
  const std::vector<double>& m2() const noexcept { return m2_; }
  std::vector<double> variance() const;

 private:
  std::vector<double> m1_;
  std::vector<double> m2_;
};

// sum_k [ -lam1^2 / (4 lam2) - 1/2 log(-2 lam2) ]
double log_normalizer_b(const GaussianNaturalParams& p);
// Same value from raw spans; throws DomainError on lam2 >= 0 or non-finite input.
double log_normalizer_b(std::span<const double> lam1, std::span<const double> lam2);

GaussianMeanParams natural_to_mean(const GaussianNaturalParams& p);
GaussianNaturalParams mean_to_natural(const GaussianMeanParams& m);

// Convex conjugate B*(m) = <m, eta(m)> - B(eta(m)).
double dual_b_star(const GaussianMeanParams& m);

// Conjugate update lambda + t. Throws DomainError when a summed lam2 is not negative.
GaussianNaturalParams posterior_params(const GaussianNaturalParams& bias,
                                       std::span<const double> t1, std::span<const double> t2);

// Draws z_k ~ N(m1_k, m2_k - m1_k^2).
std::vector<double> gaussian_sample(const GaussianNaturalParams& p, Rng& rng);

// --- convex functions for Bregman divergences -------------------------------

// F(mu) = <mu, mu>
struct SquaredNorm {};
// F(mu) = sum_k mu_k log mu_k on the positive orthant
struct NegativeEntropy {};
// F = B* of the diagonal Gaussian; points are [m1_1..m1_K, m2_1..m2_K].
struct GaussianDual {};

using ConvexFunction = std::variant<SquaredNorm, NegativeEntropy, GaussianDual>;

double convex_value(const ConvexFunction& f, std::span<const double> mu);
std::vector<double> convex_gradient(const ConvexFunction& f, std::span<const double> mu);

// D_F(a, b) = F(a) - F(b) - <a - b, grad F(b)>. Throws DomainError outside dom F.
double bregman_divergence(const ConvexFunction& f, std::span<const double> mu_a,
                          std::span<const double> mu_b);

// --- log densities ----------------------------------------------------------

enum class DensityRoute { canonical, bregman };

enum class LikelihoodKind { gaussian_fixed_variance, bernoulli };

// Per-coordinate likelihood over x with sufficient statistic t(x) = x.
struct LikelihoodFamily {
  LikelihoodKind kind = LikelihoodKind::bernoulli;
  double variance = 1.0;  // used by gaussian_fixed_variance only

  static LikelihoodFamily bernoulli() { return {LikelihoodKind::bernoulli, 1.0}; }
  static LikelihoodFamily gaussian(double variance);
};

// Log normalizer A(eta), its gradient mu(eta), and the dual A*(mu) per coordinate.
double likelihood_log_normalizer(const LikelihoodFamily& fam, double eta);
double likelihood_mean(const LikelihoodFamily& fam, double eta);
double likelihood_dual(const LikelihoodFamily& fam, double mu);
double likelihood_natural(const LikelihoodFamily& fam, double mu);
double likelihood_log_base(const LikelihoodFamily& fam, double x);

// Normalized log density of z under the diagonal Gaussian with base measure
// (2 pi)^{-1/2} per coordinate.
//   canonical: <t(z), lambda> - B(lambda) + log h(z)
//   bregman:   B*(mu) + <t(z) - mu, grad B*(mu)> + log h(z)
// Under t(z) = (z, z^2) the statistic sits on the boundary of the mean domain
// where B* is infinite, so the Bregman route uses the form in which the
// -D(t, mu) + B*(t) terms have been cancelled.
double log_density(const GaussianNaturalParams& p, std::span<const double> z, DensityRoute route);

// Log density of x under independent coordinates with natural parameters eta.
//   canonical: sum_i x_i eta_i - A(eta_i) + log h(x_i)
//   bregman:   sum_i -D_{A*}(x_i, mu_i) + A*(x_i) + log h(x_i)
// Throws DomainError for Bernoulli points outside {0, 1}.
double log_density(const LikelihoodFamily& fam, std::span<const double> eta,
                   std::span<const double> x, DensityRoute route);

}  // namespace cebm::expfam
