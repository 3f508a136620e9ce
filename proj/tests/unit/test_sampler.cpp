#include <gtest/gtest.h>

#include <boost/math/distributions/chi_squared.hpp>

#include <cmath>

#include "cebm/errors.hpp"
#include "cebm/model.hpp"
#include "cebm/sampler.hpp"

using namespace cebm;
using namespace cebm::sampler;

namespace {

// E(x) = sum |x - c|^2 / 2 per example.
EnergyFn quadratic(double c = 0.0) {
  return [c](ad::Tape& tape, const ad::Var& x) {
    const ad::Var shifted = ad::add(x, tape.constant(Tensor::full(x.shape(), -c)));
    return ad::scale(ad::sum(ad::square(shifted)), 0.5);
  };
}

}  // namespace

TEST(Sgld, SingleDeterministicStep) {
  SgldConfig cfg{0.1, 1, 0.0, false};
  Rng rng(1);
  const Tensor out = sgld_run(quadratic(), Tensor({1, 1}, {1.0}), cfg, rng);
  EXPECT_NEAR(out[0], 0.95, 1e-15);
}

TEST(Sgld, RejectsZeroSteps) {
  SgldConfig cfg;
  cfg.steps = 0;
  Rng rng(1);
  EXPECT_THROW(sgld_run(quadratic(), Tensor({1, 1}, {1.0}), cfg, rng), std::invalid_argument);
}

TEST(Sgld, ZeroNoiseDescentIsMonotone) {
  SgldConfig cfg{0.2, 200, 0.0, false};
  Rng rng(2);
  Tensor x0({4, 3});
  for (double& v : x0.data()) v = rng.uniform(-5, 5);
  const auto trace = sgld_energy_trace(quadratic(1.0), x0, cfg, rng);
  ASSERT_EQ(trace.size(), 201u);
  for (std::size_t i = 1; i < trace.size(); ++i) EXPECT_LE(trace[i], trace[i - 1]);
}

TEST(Sgld, StandardNormalTailVariance) {
  SgldConfig cfg{0.01, 1, 0.01, false};
  Rng rng(3);
  const std::size_t chains = 64;
  Tensor x = Tensor::zeros({chains, 1});
  double s1 = 0.0, s2 = 0.0;
  std::size_t count = 0;
  for (std::size_t step = 0; step < 10000; ++step) {
    x = sgld_run(quadratic(), x, cfg, rng);
    if (step >= 5000) {
      for (double v : x.data()) {
        s1 += v;
        s2 += v * v;
        ++count;
      }
    }
  }
  const double mean = s1 / static_cast<double>(count);
  const double var = s2 / static_cast<double>(count) - mean * mean;
  EXPECT_NEAR(var, 1.0, 0.15);
}

TEST(Sgld, ClampKeepsUnitBox) {
  SgldConfig cfg{0.5, 30, 0.5, true};
  Rng rng(4);
  Tensor x0({8, 5});
  for (double& v : x0.data()) v = rng.uniform();
  const Tensor out = sgld_run(quadratic(3.0), x0, cfg, rng);
  for (double v : out.data()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Sgld, DeterministicReplay) {
  SgldConfig cfg;
  Rng a(5), b(5);
  Tensor x0 = Tensor::full({3, 4}, 0.5);
  EXPECT_EQ(sgld_run(quadratic(0.2), x0, cfg, a), sgld_run(quadratic(0.2), x0, cfg, b));
}

TEST(Sgld, FrozenModelNeverDiverges) {
  Rng rng(6);
  model::CebmModel m(model::EncoderConfig::mlp(1, 4, 4, 8, 1, 2), expfam::GaussianNaturalParams::standard(2), 1.0, rng);
  const EnergyFn e = model_energy(m);
  SgldConfig cfg;
  cfg.steps = 20;
  // 1000 chains in batches of 100.
  for (int batch = 0; batch < 10; ++batch) {
    const Tensor x0 = uniform_noise({100, 1, 4, 4}, rng);
    const Tensor out = sgld_run(e, x0, cfg, rng);
    EXPECT_TRUE(out.all_finite());
  }
}

TEST(Sgld, NonFiniteEnergyNamesStep) {
  // Finite at the start, overflows once the iterate has been pushed outwards.
  const EnergyFn bad = [](ad::Tape&, const ad::Var& x) { return ad::scale(ad::sum(ad::square(x)), -1e300); };
  SgldConfig cfg{0.1, 5, 0.0, false};
  Rng rng(7);
  try {
    sgld_run(bad, Tensor({1, 1}, {1.0}), cfg, rng);
    FAIL() << "expected divergence";
  } catch (const DivergenceError& err) {
    EXPECT_GE(err.step(), 0);
  }
}

TEST(ReplayBufferTest, EmptyBufferYieldsNoise) {
  ReplayBuffer buf(10, {2});
  Rng rng(8);
  std::vector<bool> from_noise;
  const Tensor batch = buffer_init_batch(buf, 6, 0.0, {2}, rng, &from_noise);
  EXPECT_EQ(batch.shape(), (Shape{6, 2}));
  for (bool f : from_noise) EXPECT_TRUE(f);
}

TEST(ReplayBufferTest, FullReinitIgnoresBuffer) {
  ReplayBuffer buf(10, {2});
  Rng rng(9);
  buf.update(Tensor::full({10, 2}, 7.0), rng);
  std::vector<bool> from_noise;
  const Tensor batch = buffer_init_batch(buf, 50, 1.0, {2}, rng, &from_noise);
  for (bool f : from_noise) EXPECT_TRUE(f);
  for (double v : batch.data()) EXPECT_LT(v, 1.0);
}

TEST(ReplayBufferTest, ReinitFractionConcentrates) {
  ReplayBuffer buf(100, {1});
  Rng rng(10);
  buf.update(Tensor::full({100, 1}, 2.0), rng);
  std::vector<bool> from_noise;
  const std::size_t n = 100000;
  const Tensor batch = buffer_init_batch(buf, n, 0.05, {1}, rng, &from_noise);
  std::size_t noise = 0;
  for (std::size_t i = 0; i < n; ++i) {
    noise += from_noise[i];
    EXPECT_EQ(from_noise[i], batch[i] != 2.0);
  }
  EXPECT_NEAR(static_cast<double>(noise) / n, 0.05, 0.005);
}

TEST(ReplayBufferTest, OccupancyAndSaturation) {
  Rng rng(11);
  ReplayBuffer buf(5000, {1});
  EXPECT_EQ(buffer_update(buf, Tensor::zeros({10, 1}), rng), 10u);
  EXPECT_EQ(buffer_update(buf, Tensor::zeros({4991, 1}), rng), 5000u);
  EXPECT_EQ(buf.pushes(), 5001u);
  EXPECT_THROW(buf.update(Tensor::zeros({2, 3}), rng), ShapeError);
}

TEST(ReplayBufferTest, SlotAgesAreGeometric) {
  const std::size_t cap = 1000;
  ReplayBuffer buf(cap, {1});
  Rng rng(12);
  for (std::size_t i = 0; i < 10 * cap; ++i) buf.update(Tensor::zeros({1, 1}), rng);
  const double q = 1.0 - 1.0 / static_cast<double>(cap);
  const double qc = std::pow(q, static_cast<double>(cap));
  std::vector<double> expected{1.0 - qc, qc * (1.0 - qc), qc * qc * (1.0 - qc), qc * qc * qc};
  std::vector<double> observed(4, 0.0);
  for (std::size_t s = 0; s < cap; ++s) {
    const std::size_t age = buf.pushes() - 1 - buf.slot_written_at(s);
    observed[std::min<std::size_t>(age / cap, 3)] += 1.0;
  }
  double stat = 0.0;
  for (std::size_t b = 0; b < 4; ++b) {
    const double e = expected[b] * static_cast<double>(cap);
    stat += (observed[b] - e) * (observed[b] - e) / e;
  }
  const double p = 1.0 - boost::math::cdf(boost::math::chi_squared(3.0), stat);
  EXPECT_GT(p, 0.01) << "chi-square " << stat;
}
