#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "cebm/errors.hpp"
#include "cebm/model.hpp"
#include "support/oracles.hpp"

using namespace cebm;
using namespace cebm::model;

namespace {

Tensor random_images(std::size_t n, const EncoderConfig& cfg, Rng& rng) {
  Tensor x({n, cfg.channels, cfg.height, cfg.width});
  for (double& v : x.data()) v = rng.uniform();
  return x;
}

std::vector<double> column(const Tensor& t, std::size_t row) {
  const std::size_t k = t.dim(1);
  return {t.data().begin() + static_cast<std::ptrdiff_t>(row * k), t.data().begin() + static_cast<std::ptrdiff_t>((row + 1) * k)};
}

// Energy summed over a batch as a function of parameter entry `index`.
ad::ScalarFn energy_of_param(const EnergyModel& m, const Tensor& x, std::size_t index) {
  return [&m, x, index](ad::Tape& tape, const ad::Var& v) {
    auto params = m.params().bind(tape, false);
    params[index] = v;
    return ad::sum(m.energy(params, tape.constant(x)));
  };
}

ad::ScalarFn energy_of_input(const EnergyModel& m) {
  return [&m](ad::Tape& tape, const ad::Var& x) {
    const auto params = m.params().bind(tape, false);
    return ad::sum(m.energy(params, x));
  };
}

}  // namespace

TEST(Encode, ZeroWeights) {
  Rng rng(1);
  CebmModel m(EncoderConfig::mlp(1, 3, 3, 4, 1, 3), expfam::GaussianNaturalParams::standard(3), 1.5, rng);
  m.zero_weights();
  const auto [t1, t2] = m.encode(random_images(2, m.config(), rng));
  ASSERT_EQ(t1.shape(), (Shape{2, 3}));
  ASSERT_EQ(t2.shape(), (Shape{2, 3}));
  for (double v : t1.data()) EXPECT_EQ(v, 0.0);
  for (double v : t2.data()) EXPECT_NEAR(v, -1.5 * std::log(2.0), 1e-15);
}

TEST(Encode, SecondStatisticNegativeAndPosteriorValid) {
  Rng rng(2);
  CebmModel m(EncoderConfig::mlp(1, 2, 2, 6, 2, 2), expfam::GaussianNaturalParams::standard(2), 1.0, rng);
  for (auto& e : m.params())
    if (e.trainable)
      for (double& v : e.value.data()) v *= 5.0;
  Tensor x({10000, 1, 2, 2});
  for (double& v : x.data()) v = rng.uniform(-3.0, 3.0);
  const auto [t1, t2] = m.encode(x);
  for (double v : t2.data()) EXPECT_LE(v, 0.0);
  EXPECT_NO_THROW(m.posterior_mixtures(x));
}

TEST(EnergyJoint, ZeroWeightsAtOrigin) {
  Rng rng(3);
  CebmModel m(EncoderConfig::mlp(1, 2, 2, 4, 1, 2), expfam::GaussianNaturalParams::standard(2), 1.0, rng);
  m.zero_weights();
  const std::vector<double> z{0.0, 0.0};
  EXPECT_DOUBLE_EQ(m.energy_joint(random_images(1, m.config(), rng), z), 0.0);
  const std::vector<double> bad{0.0, std::nan("")};
  EXPECT_THROW(m.energy_joint(random_images(1, m.config(), rng), bad), DomainError);
}

TEST(EnergyJoint, FactorisesIntoPosteriorAndMarginal) {
  Rng rng(4);
  const std::size_t k = 3;
  CebmModel m(EncoderConfig::mlp(1, 3, 3, 8, 2, k), expfam::GaussianNaturalParams({0.2, -0.1, 0.0}, {-0.5, -1.0, -0.3}),
              1.0, rng);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor x = random_images(1, m.config(), rng);
    const auto post = m.posterior(x);
    std::vector<double> z(k);
    for (double& v : z) v = rng.uniform(-2.0, 2.0);
    double log_post = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      log_post += oracle::normal_log_pdf(z[i], oracle::natural_mean(post.lam1()[i], post.lam2()[i]),
                                         oracle::natural_var(post.lam2()[i]));
    }
    const double lhs = m.energy_joint(x, z) - m.energy_marginal(x);
    EXPECT_NEAR(lhs, -log_post - 0.5 * static_cast<double>(k) * std::log(2.0 * std::numbers::pi), 1e-8);
  }
}

TEST(EnergyMarginal, ZeroStatisticsGiveZero) {
  Rng rng(5);
  CebmModel m(EncoderConfig::mlp(1, 2, 2, 4, 1, 2), expfam::GaussianNaturalParams::standard(2), 0.0, rng);
  m.zero_weights();
  const Tensor x = random_images(1, m.config(), rng);
  EXPECT_EQ(m.energy_marginal(x), 0.0);
  EXPECT_EQ(m.posterior(x), m.bias());
  const Tensor codes = m.representation(random_images(4, m.config(), rng));
  for (double v : codes.data()) EXPECT_EQ(v, 0.0);
}

TEST(EnergyMarginal, ClosedFormValue) {
  const auto bias = expfam::GaussianNaturalParams::standard(1);
  const std::vector<double> t1{1.0}, t2{-0.5};
  // B((1, -1)) = 1/4 - log(2)/2.
  EXPECT_NEAR(marginal_energy_from_stats(bias, t1, t2), -(0.25 - 0.5 * std::log(2.0)), 1e-15);
  EXPECT_NEAR(marginal_energy_from_stats(bias, t1, t2), 0.09657, 1e-5);
}

TEST(EnergyMarginal, PermutationInvariant) {
  const expfam::GaussianNaturalParams bias({0.1, -0.4, 0.7}, {-0.5, -2.0, -0.8});
  const expfam::GaussianNaturalParams perm({0.7, 0.1, -0.4}, {-0.8, -0.5, -2.0});
  const std::vector<double> t1{0.3, 1.2, -0.6}, t2{-0.1, -0.7, -1.1};
  const std::vector<double> p1{-0.6, 0.3, 1.2}, p2{-1.1, -0.1, -0.7};
  EXPECT_NEAR(marginal_energy_from_stats(bias, t1, t2), marginal_energy_from_stats(perm, p1, p2), 1e-14);
}

TEST(EnergyMarginal, MatchesBatchedEnergy) {
  Rng rng(6);
  CebmModel m(EncoderConfig::conv_small(1, 6, 6, 2, 5, 2), expfam::GaussianNaturalParams::standard(2), 1.0, rng);
  const Tensor x = random_images(3, m.config(), rng);
  const Tensor e = m.energies(x);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(e[i], m.energy_marginal(x.slice_rows(i, i + 1)), 1e-12);
}

TEST(Posterior, MeanIsRepresentation) {
  Rng rng(7);
  CebmModel m(EncoderConfig::mlp(1, 3, 3, 8, 1, 4), expfam::GaussianNaturalParams::standard(4), 1.0, rng);
  const Tensor x = random_images(5, m.config(), rng);
  const Tensor codes = m.representation(x);
  for (std::size_t i = 0; i < 5; ++i) {
    const auto mean = expfam::natural_to_mean(m.posterior(x.slice_rows(i, i + 1))).m1();
    const auto row = column(codes, i);
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(row[j], mean[j], 1e-14);
  }
}

TEST(Posterior, GridNormalisedJointMatchesAnalytic) {
  Rng rng(8);
  CebmModel m(EncoderConfig::mlp(1, 1, 1, 6, 2, 1), expfam::GaussianNaturalParams::standard(1), 1.0, rng);
  const std::size_t points = 2001;
  const double lo = -6.0, dz = 12.0 / static_cast<double>(points - 1);
  for (double xv = 0.0; xv <= 1.0; xv += 0.125) {
    const Tensor x({1, 1, 1, 1}, {xv});
    std::vector<double> dens(points);
    double total = 0.0;
    for (std::size_t i = 0; i < points; ++i) {
      const std::vector<double> z{lo + dz * static_cast<double>(i)};
      dens[i] = std::exp(-m.energy_joint(x, z));
      total += (i == 0 || i + 1 == points ? 0.5 : 1.0) * dens[i] * dz;
    }
    const auto post = m.posterior(x);
    double worst = 0.0;
    for (std::size_t i = 0; i < points; ++i) {
      const double z = lo + dz * static_cast<double>(i);
      const double analytic = std::exp(oracle::normal_log_pdf(z, oracle::natural_mean(post.lam1()[0], post.lam2()[0]),
                                                              oracle::natural_var(post.lam2()[0])));
      worst = std::max(worst, std::abs(dens[i] / total - analytic));
    }
    EXPECT_LT(worst, 1e-3) << "x=" << xv;
  }
}

TEST(GmmEnergy, IdenticalComponentsOffsetByLogL) {
  const expfam::GaussianNaturalParams c({0.3, -0.2}, {-0.6, -1.4});
  const std::vector<expfam::GaussianNaturalParams> comps(5, c);
  const std::vector<double> t1{0.5, -1.0}, t2{-0.2, -0.05};
  EXPECT_NEAR(mixture_marginal_energy(comps, t1, t2), marginal_energy_from_stats(c, t1, t2) - std::log(5.0), 1e-13);
}

TEST(GmmEnergy, SingleComponentEqualsGaussianBias) {
  const expfam::GaussianNaturalParams c({0.3}, {-0.6});
  const std::vector<expfam::GaussianNaturalParams> comps{c};
  const std::vector<double> t1{0.5}, t2{-0.2};
  EXPECT_EQ(mixture_marginal_energy(comps, t1, t2), marginal_energy_from_stats(c, t1, t2));
}

TEST(GmmEnergy, TwoComponentHandCase) {
  const expfam::GaussianNaturalParams a({1.0}, {-0.5}), b({-1.0}, {-0.5});
  const std::vector<expfam::GaussianNaturalParams> comps{a, b};
  const std::vector<double> t1{0.4}, t2{-0.25};
  auto bnorm = [](double l1, double l2) { return -l1 * l1 / (4 * l2) - 0.5 * std::log(-2 * l2); };
  const double ga = bnorm(1.4, -0.75) - bnorm(1.0, -0.5);
  const double gb = bnorm(-0.6, -0.75) - bnorm(-1.0, -0.5);
  EXPECT_NEAR(mixture_marginal_energy(comps, t1, t2), -std::log(std::exp(ga) + std::exp(gb)), 1e-14);
}

TEST(GmmEnergy, StableUnderDominance) {
  // Component means differ enough that the gaps differ by about 1e6 nats.
  const expfam::GaussianNaturalParams a({0.0}, {-0.5}), b({0.0}, {-0.5});
  const std::vector<expfam::GaussianNaturalParams> comps{a, b};
  const std::vector<double> t1{2000.0}, t2{-0.5};
  const double e = mixture_marginal_energy(comps, t1, t2);
  EXPECT_TRUE(std::isfinite(e));
  const std::vector<expfam::GaussianNaturalParams> far{expfam::GaussianNaturalParams({1414.0}, {-0.5}), a};
  EXPECT_TRUE(std::isfinite(mixture_marginal_energy(far, t1, t2)));
}

TEST(GmmModel, ComponentPosteriorsNormalised) {
  Rng rng(9);
  GmmCebmModel m(EncoderConfig::mlp(1, 3, 3, 8, 1, 2), 4, 1.0, rng);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor x = random_images(1, m.config(), rng);
    const auto cp = m.component_posterior(x);
    double total = 0.0;
    for (double p : cp.probs) total += p;
    EXPECT_NEAR(total, 1.0, 1e-12);
    EXPECT_NEAR(m.gmm_energy_marginal(x), m.energies(x)[0], 1e-12);
    // Responsibility-weighted code.
    std::vector<double> expect(2, 0.0);
    for (std::size_t l = 0; l < 4; ++l) {
      const auto mean = expfam::natural_to_mean(cp.posteriors[l]).m1();
      for (std::size_t j = 0; j < 2; ++j) expect[j] += cp.probs[l] * mean[j];
    }
    const Tensor code = m.representation(x);
    for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(code[j], expect[j], 1e-12);
  }
}

TEST(GmmModel, IdenticalComponentsUniformAndSaturation) {
  Rng rng(10);
  GmmCebmModel m(EncoderConfig::mlp(1, 2, 2, 4, 1, 1), 3, 1.0, rng);
  auto& lam1 = m.params().value("gmm.lam1");
  std::fill(lam1.data().begin(), lam1.data().end(), 0.25);
  const auto cp = m.component_posterior(random_images(1, m.config(), rng));
  for (double p : cp.probs) EXPECT_NEAR(p, 1.0 / 3.0, 1e-15);
  // With t = (0, -log 2) the gap is about -0.29 lam1^2 plus a constant, so
  // lam1 = 14 against lam1 = 0 separates the gaps by more than 50 nats.
  m.zero_weights();
  std::fill(lam1.data().begin(), lam1.data().end(), 14.0);
  lam1[0] = 0.0;
  const auto sat = m.component_posterior(random_images(1, m.config(), rng));
  EXPECT_GE(sat.probs[0], 1.0 - 1e-14);
  EXPECT_LE(sat.probs[1] + sat.probs[2], 1e-14);
}

TEST(Efh, EnergyValues) {
  const Tensor zero_w({1, 1}, {0.0});
  const std::vector<double> x{0.5}, z{-0.3}, zeros{0.0};
  EXPECT_EQ(efh_energy(x, z, zeros, zeros, zero_w), 0.0);
  const std::vector<double> one{1.0}, tx{2.0}, tz{3.0};
  EXPECT_EQ(efh_energy(one, one, tx, tz, Tensor({1, 1}, {4.0})), -9.0);
}

TEST(Efh, LinearStatisticsReduction) {
  Rng rng(12);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t d = 1 + rng.below(6), k = 1 + rng.below(5);
    std::vector<double> x(d), z(k), tx(d), tz(k);
    Tensor w({d, k});
    for (double& v : x) v = rng.uniform(-2, 2);
    for (double& v : z) v = rng.uniform(-2, 2);
    for (double& v : tx) v = rng.uniform(-2, 2);
    for (double& v : tz) v = rng.uniform(-2, 2);
    for (double& v : w.data()) v = rng.uniform(-2, 2);
    double bias_energy = 0.0;
    for (std::size_t j = 0; j < k; ++j) bias_energy -= z[j] * tz[j];
    const double reduced = conjugate_energy(efh_statistics(x, tx, w), efh_eta(z), bias_energy);
    const double direct = efh_energy(x, z, tx, tz, w);
    EXPECT_NEAR(reduced, direct, 1e-12 * std::max(1.0, std::abs(direct)));
  }
}

TEST(Baseline, ZeroHeadAndFeatureWidth) {
  Rng rng(13);
  const auto cfg = EncoderConfig::conv_small(1, 6, 6, 2, 7, 3);
  BaselineEbm m(cfg, rng);
  EXPECT_EQ(m.representation(random_images(2, cfg, rng)).shape(), (Shape{2, cfg.trunk_width()}));
  EXPECT_EQ(cfg.trunk_width(), 7u);
  m.zero_weights();
  const Tensor e = m.energies(random_images(3, cfg, rng));
  for (double v : e.data()) EXPECT_EQ(v, 0.0);
}

TEST(Gradients, BothModelsAgainstFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(100 + seed);
    std::vector<std::unique_ptr<EnergyModel>> models;
    models.push_back(std::make_unique<CebmModel>(EncoderConfig::conv_small(1, 5, 5, 2, 4, 2),
                                                 expfam::GaussianNaturalParams::standard(2), 1.0, rng));
    models.push_back(std::make_unique<GmmCebmModel>(EncoderConfig::mlp(1, 3, 3, 5, 2, 2), 3, 1.0, rng));
    models.push_back(std::make_unique<BaselineEbm>(EncoderConfig::mlp(1, 3, 3, 5, 1, 2), rng));
    for (const auto& m : models) {
      const Tensor x = random_images(2, m->config(), rng);
      EXPECT_LT(ad::finite_diff_check(energy_of_input(*m), x, 1e-5), 1e-4) << to_string(m->kind());
      for (std::size_t i = 0; i < m->params().size(); ++i) {
        if (!m->params()[i].trainable) continue;
        EXPECT_LT(ad::finite_diff_check(energy_of_param(*m, x, i), m->params()[i].value, 1e-5), 1e-4)
            << to_string(m->kind()) << " " << m->params()[i].name;
      }
    }
  }
}

TEST(ParameterSetTest, RejectsDuplicates) {
  ParameterSet p;
  p.add("a", Tensor::scalar(1.0));
  EXPECT_THROW(p.add("a", Tensor::scalar(2.0)), std::invalid_argument);
}
