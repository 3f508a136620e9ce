#include "cebm/expfam.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "cebm/errors.hpp"

namespace cebm::expfam {

namespace {

constexpr double kHalfLogTwoPi = 0.91893853320467274178;  // 0.5 * log(2 pi)

void require_finite(std::span<const double> v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw DomainError(std::string(what) + ": non-finite entry");
  }
}

void require_same_size(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw DomainError(std::string(what) + ": length mismatch " + std::to_string(a) + " vs " +
                      std::to_string(b));
  }
}

double xlogx(double x) { return x == 0.0 ? 0.0 : x * std::log(x); }

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace

// --- parameter types --------------------------------------------------------

GaussianNaturalParams::GaussianNaturalParams(std::vector<double> lam1, std::vector<double> lam2)
    : lam1_(std::move(lam1)), lam2_(std::move(lam2)) {
  require_same_size(lam1_.size(), lam2_.size(), "GaussianNaturalParams");
  require_finite(lam1_, "GaussianNaturalParams");
  require_finite(lam2_, "GaussianNaturalParams");
  for (std::size_t k = 0; k < lam2_.size(); ++k) {
    if (!(lam2_[k] < 0.0)) {
      throw DomainError("GaussianNaturalParams: lam2[" + std::to_string(k) +
                        "] must be negative, got " + std::to_string(lam2_[k]));
    }
  }
}

GaussianNaturalParams GaussianNaturalParams::standard(std::size_t dims) {
  return GaussianNaturalParams(std::vector<double>(dims, 0.0), std::vector<double>(dims, -0.5));
}

GaussianMeanParams::GaussianMeanParams(std::vector<double> m1, std::vector<double> m2)
    : m1_(std::move(m1)), m2_(std::move(m2)) {
  require_same_size(m1_.size(), m2_.size(), "GaussianMeanParams");
  require_finite(m1_, "GaussianMeanParams");
  require_finite(m2_, "GaussianMeanParams");
  for (std::size_t k = 0; k < m1_.size(); ++k) {
    if (!(m2_[k] - m1_[k] * m1_[k] > 0.0)) {
      throw DomainError("GaussianMeanParams: implied variance at index " + std::to_string(k) +
                        " is not positive");
    }
  }
}

std::vector<double> GaussianMeanParams::variance() const {
  std::vector<double> v(m1_.size());
  for (std::size_t k = 0; k < v.size(); ++k) v[k] = m2_[k] - m1_[k] * m1_[k];
  return v;
}

// --- Gaussian numerics ------------------------------------------------------

double log_normalizer_b(std::span<const double> lam1, std::span<const double> lam2) {
  require_same_size(lam1.size(), lam2.size(), "log_normalizer_b");
  require_finite(lam1, "log_normalizer_b");
  require_finite(lam2, "log_normalizer_b");
  double acc = 0.0;
  for (std::size_t k = 0; k < lam1.size(); ++k) {
    if (!(lam2[k] < 0.0)) throw DomainError("log_normalizer_b: lam2 must be negative");
    acc += -lam1[k] * lam1[k] / (4.0 * lam2[k]) - 0.5 * std::log(-2.0 * lam2[k]);
  }
  return acc;
}

double log_normalizer_b(const GaussianNaturalParams& p) { return log_normalizer_b(p.lam1(), p.lam2()); }

GaussianMeanParams natural_to_mean(const GaussianNaturalParams& p) {
  const std::size_t k = p.dims();
  std::vector<double> m1(k), m2(k);
  for (std::size_t i = 0; i < k; ++i) {
    m1[i] = -p.lam1()[i] / (2.0 * p.lam2()[i]);
    m2[i] = m1[i] * m1[i] - 1.0 / (2.0 * p.lam2()[i]);
  }
  return GaussianMeanParams(std::move(m1), std::move(m2));
}

GaussianNaturalParams mean_to_natural(const GaussianMeanParams& m) {
  const std::size_t k = m.dims();
  std::vector<double> l1(k), l2(k);
  for (std::size_t i = 0; i < k; ++i) {
    const double var = m.m2()[i] - m.m1()[i] * m.m1()[i];
    l1[i] = m.m1()[i] / var;
    l2[i] = -1.0 / (2.0 * var);
  }
  return GaussianNaturalParams(std::move(l1), std::move(l2));
}

double dual_b_star(const GaussianMeanParams& m) {
  const GaussianNaturalParams eta = mean_to_natural(m);
  return dot(m.m1(), eta.lam1()) + dot(m.m2(), eta.lam2()) - log_normalizer_b(eta);
}

GaussianNaturalParams posterior_params(const GaussianNaturalParams& bias,
                                       std::span<const double> t1, std::span<const double> t2) {
  require_same_size(bias.dims(), t1.size(), "posterior_params");
  require_same_size(bias.dims(), t2.size(), "posterior_params");
  std::vector<double> l1(bias.dims()), l2(bias.dims());
  for (std::size_t k = 0; k < bias.dims(); ++k) {
    l1[k] = bias.lam1()[k] + t1[k];
    l2[k] = bias.lam2()[k] + t2[k];
  }
  return GaussianNaturalParams(std::move(l1), std::move(l2));
}

std::vector<double> gaussian_sample(const GaussianNaturalParams& p, Rng& rng) {
  const GaussianMeanParams m = natural_to_mean(p);
  const std::vector<double> var = m.variance();
  std::vector<double> z(p.dims());
  for (std::size_t k = 0; k < z.size(); ++k) z[k] = m.m1()[k] + std::sqrt(var[k]) * rng.normal();
  return z;
}

// --- convex functions -------------------------------------------------------

namespace {

GaussianMeanParams split_mean_point(std::span<const double> mu) {
  if (mu.size() % 2 != 0) throw DomainError("GaussianDual: point length must be even");
  const std::size_t k = mu.size() / 2;
  return GaussianMeanParams(std::vector<double>(mu.begin(), mu.begin() + static_cast<std::ptrdiff_t>(k)),
                            std::vector<double>(mu.begin() + static_cast<std::ptrdiff_t>(k), mu.end()));
}

struct ValueVisitor {
  std::span<const double> mu;
  double operator()(SquaredNorm) const { return dot(mu, mu); }
  double operator()(NegativeEntropy) const {
    double acc = 0.0;
    for (double v : mu) {
      if (!(v > 0.0)) throw DomainError("NegativeEntropy: entries must be positive");
      acc += v * std::log(v);
    }
    return acc;
  }
  double operator()(GaussianDual) const { return dual_b_star(split_mean_point(mu)); }
};

struct GradientVisitor {
  std::span<const double> mu;
  std::vector<double> operator()(SquaredNorm) const {
    std::vector<double> g(mu.begin(), mu.end());
    for (double& v : g) v *= 2.0;
    return g;
  }
  std::vector<double> operator()(NegativeEntropy) const {
    std::vector<double> g(mu.size());
    for (std::size_t i = 0; i < mu.size(); ++i) {
      if (!(mu[i] > 0.0)) throw DomainError("NegativeEntropy: entries must be positive");
      g[i] = std::log(mu[i]) + 1.0;
    }
    return g;
  }
  std::vector<double> operator()(GaussianDual) const {
    // grad B*(mu) = eta(mu)
    const GaussianNaturalParams eta = mean_to_natural(split_mean_point(mu));
    std::vector<double> g = eta.lam1();
    g.insert(g.end(), eta.lam2().begin(), eta.lam2().end());
    return g;
  }
};

}  // namespace

double convex_value(const ConvexFunction& f, std::span<const double> mu) {
  require_finite(mu, "convex_value");
  return std::visit(ValueVisitor{mu}, f);
}

std::vector<double> convex_gradient(const ConvexFunction& f, std::span<const double> mu) {
  require_finite(mu, "convex_gradient");
  return std::visit(GradientVisitor{mu}, f);
}

double bregman_divergence(const ConvexFunction& f, std::span<const double> mu_a,
                          std::span<const double> mu_b) {
  require_same_size(mu_a.size(), mu_b.size(), "bregman_divergence");
  const double fa = convex_value(f, mu_a);
  const double fb = convex_value(f, mu_b);
  const std::vector<double> grad = convex_gradient(f, mu_b);
  double inner = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) inner += (mu_a[i] - mu_b[i]) * grad[i];
  // Rounding can leave a tiny negative residue when the points coincide.
  return std::max(0.0, fa - fb - inner);
}

// --- likelihood families ----------------------------------------------------

LikelihoodFamily LikelihoodFamily::gaussian(double variance) {
  if (!(variance > 0.0) || !std::isfinite(variance)) {
    throw DomainError("gaussian likelihood: variance must be positive");
  }
  return {LikelihoodKind::gaussian_fixed_variance, variance};
}

double likelihood_log_normalizer(const LikelihoodFamily& fam, double eta) {
  if (fam.kind == LikelihoodKind::bernoulli) {
    return eta > 0.0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
  }
  return 0.5 * fam.variance * eta * eta;
}

double likelihood_mean(const LikelihoodFamily& fam, double eta) {
  if (fam.kind == LikelihoodKind::bernoulli) {
    return eta >= 0.0 ? 1.0 / (1.0 + std::exp(-eta)) : std::exp(eta) / (1.0 + std::exp(eta));
  }
  return fam.variance * eta;
}

double likelihood_dual(const LikelihoodFamily& fam, double mu) {
  if (fam.kind == LikelihoodKind::bernoulli) {
    if (mu < 0.0 || mu > 1.0) throw DomainError("Bernoulli dual: mean outside [0, 1]");
    return xlogx(mu) + xlogx(1.0 - mu);
  }
  return mu * mu / (2.0 * fam.variance);
}

double likelihood_natural(const LikelihoodFamily& fam, double mu) {
  if (fam.kind == LikelihoodKind::bernoulli) {
    if (!(mu > 0.0 && mu < 1.0)) throw DomainError("Bernoulli natural map: mean outside (0, 1)");
    return std::log(mu) - std::log1p(-mu);
  }
  return mu / fam.variance;
}

double likelihood_log_base(const LikelihoodFamily& fam, double x) {
  if (fam.kind == LikelihoodKind::bernoulli) {
    if (x != 0.0 && x != 1.0) throw DomainError("Bernoulli point must be 0 or 1");
    return 0.0;
  }
  return -x * x / (2.0 * fam.variance) - 0.5 * std::log(2.0 * std::numbers::pi * fam.variance);
}

// --- log densities ----------------------------------------------------------

double log_density(const GaussianNaturalParams& p, std::span<const double> z, DensityRoute route) {
  require_same_size(p.dims(), z.size(), "log_density");
  require_finite(z, "log_density");
  const double log_h = -kHalfLogTwoPi * static_cast<double>(z.size());
  if (route == DensityRoute::canonical) {
    double inner = 0.0;
    for (std::size_t k = 0; k < z.size(); ++k) inner += z[k] * p.lam1()[k] + z[k] * z[k] * p.lam2()[k];
    return inner - log_normalizer_b(p) + log_h;
  }
  const GaussianMeanParams mu = natural_to_mean(p);
  std::vector<double> mu_flat = mu.m1();
  mu_flat.insert(mu_flat.end(), mu.m2().begin(), mu.m2().end());
  const ConvexFunction dual = GaussianDual{};
  const std::vector<double> grad = convex_gradient(dual, mu_flat);
  const std::size_t k = z.size();
  double inner = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    inner += (z[i] - mu_flat[i]) * grad[i];
    inner += (z[i] * z[i] - mu_flat[k + i]) * grad[k + i];
  }
  return convex_value(dual, mu_flat) + inner + log_h;
}

double log_density(const LikelihoodFamily& fam, std::span<const double> eta,
                   std::span<const double> x, DensityRoute route) {
  require_same_size(eta.size(), x.size(), "log_density");
  require_finite(eta, "log_density");
  require_finite(x, "log_density");
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double log_h = likelihood_log_base(fam, x[i]);
    if (route == DensityRoute::canonical) {
      total += x[i] * eta[i] - likelihood_log_normalizer(fam, eta[i]) + log_h;
      continue;
    }
    const double mu = likelihood_mean(fam, eta[i]);
    const double grad = likelihood_natural(fam, mu);
    const double divergence = likelihood_dual(fam, x[i]) - likelihood_dual(fam, mu) - (x[i] - mu) * grad;
    total += -divergence + likelihood_dual(fam, x[i]) + log_h;
  }
  return total;
}

}  // namespace cebm::expfam
