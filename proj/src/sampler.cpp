#include "cebm/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cebm/errors.hpp"

namespace cebm::sampler {

void SgldConfig::validate() const {
  if (!(step_size > 0.0) || !std::isfinite(step_size)) throw std::invalid_argument("SGLD step_size must be positive");
  if (steps < 1) throw std::invalid_argument("SGLD steps must be at least 1");
  if (!(noise_variance >= 0.0) || !std::isfinite(noise_variance)) {
    throw std::invalid_argument("SGLD noise_variance must be non-negative");
  }
}

EnergyFn model_energy(const model::EnergyModel& m) {
  return [&m](ad::Tape& tape, const ad::Var& x) {
    const auto params = m.params().bind(tape, false);
    return m.energy(params, x);
  };
}

namespace {

// Energy and gradient of the summed batch energy at x.
double energy_and_gradient(const EnergyFn& energy, const Tensor& x, Tensor& grad, std::size_t step) {
  ad::Tape tape;
  const ad::Var xv = tape.leaf(x);
  const ad::Var e = energy(tape, xv);
  const ad::Var total = e.value().size() == 1 ? e : ad::sum(e);
  const double value = total.value().item();
  if (!std::isfinite(value)) {
    throw DivergenceError("SGLD diverged: non-finite energy at step " + std::to_string(step),
                          static_cast<std::int64_t>(step));
  }
  grad = tape.backward(total)[xv];
  if (!grad.all_finite()) {
    throw DivergenceError("SGLD diverged: non-finite gradient at step " + std::to_string(step),
                          static_cast<std::int64_t>(step));
  }
  return value;
}

void langevin_step(Tensor& x, const Tensor& grad, const SgldConfig& cfg, Rng& rng) {
  const double half_step = 0.5 * cfg.step_size;
  const double noise_std = std::sqrt(cfg.noise_variance);
  auto xv = x.data();
  const auto gv = grad.data();
  for (std::size_t i = 0; i < xv.size(); ++i) {
    double v = xv[i] - half_step * gv[i];
    if (noise_std > 0.0) v += noise_std * rng.normal();
    if (cfg.clamp) v = std::clamp(v, 0.0, 1.0);
    xv[i] = v;
  }
}

}  // namespace

Tensor sgld_run(const EnergyFn& energy, const Tensor& x0, const SgldConfig& cfg, Rng& rng) {
  cfg.validate();
  Tensor x = x0;
  Tensor grad;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    energy_and_gradient(energy, x, grad, step);
    langevin_step(x, grad, cfg, rng);
    if (!x.all_finite()) {
      throw DivergenceError("SGLD diverged: non-finite iterate at step " + std::to_string(step),
                            static_cast<std::int64_t>(step));
    }
  }
  return x;
}

std::vector<double> sgld_energy_trace(const EnergyFn& energy, const Tensor& x0,
                                      const SgldConfig& cfg, Rng& rng, Tensor* final) {
  cfg.validate();
  Tensor x = x0;
  Tensor grad;
  std::vector<double> trace;
  trace.reserve(cfg.steps + 1);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    trace.push_back(energy_and_gradient(energy, x, grad, step));
    langevin_step(x, grad, cfg, rng);
  }
  trace.push_back(energy_and_gradient(energy, x, grad, cfg.steps));
  if (final) *final = std::move(x);
  return trace;
}

// --- replay buffer ----------------------------------------------------------

ReplayBuffer::ReplayBuffer(std::size_t capacity, Shape sample_shape)
    : capacity_(capacity), sample_shape_(std::move(sample_shape)) {
  if (capacity == 0) throw std::invalid_argument("replay buffer capacity must be positive");
}

std::size_t ReplayBuffer::update(const Tensor& samples, Rng& rng) {
  const Shape& s = samples.shape();
  if (s.size() != sample_shape_.size() + 1 || !std::equal(sample_shape_.begin(), sample_shape_.end(), s.begin() + 1)) {
    throw ShapeError("replay buffer holds samples of shape " + shape_string(sample_shape_) +
                     ", got batch " + shape_string(s));
  }
  for (std::size_t i = 0; i < s[0]; ++i) {
    Tensor item = samples.slice_rows(i, i + 1).reshaped(sample_shape_);
    if (slots_.size() < capacity_) {
      slots_.push_back(std::move(item));
      written_at_.push_back(pushes_);
    } else {
      const std::size_t slot = rng.below(capacity_);
      slots_[slot] = std::move(item);
      written_at_[slot] = pushes_;
    }
    ++pushes_;
  }
  return slots_.size();
}

std::size_t buffer_update(ReplayBuffer& buffer, const Tensor& samples, Rng& rng) {
  return buffer.update(samples, rng);
}

Tensor uniform_noise(const Shape& shape, Rng& rng) {
  Tensor t(shape);
  for (double& v : t.data()) v = rng.uniform();
  return t;
}

Tensor buffer_init_batch(const ReplayBuffer& buffer, std::size_t batch, double reinit_prob,
                         const Shape& shape, Rng& rng, std::vector<bool>* from_noise) {
  if (reinit_prob < 0.0 || reinit_prob > 1.0) throw std::invalid_argument("reinit_prob must lie in [0, 1]");
  if (buffer.occupancy() > 0 && shape != buffer.sample_shape()) {
    throw ShapeError("requested sample shape " + shape_string(shape) + " differs from buffer " +
                     shape_string(buffer.sample_shape()));
  }
  const std::size_t item = shape_size(shape);
  Shape out_shape = shape;
  out_shape.insert(out_shape.begin(), batch);
  Tensor out(out_shape);
  if (from_noise) from_noise->assign(batch, false);
  for (std::size_t b = 0; b < batch; ++b) {
    auto dst = out.data().subspan(b * item, item);
    const bool noise = buffer.occupancy() == 0 || rng.uniform() < reinit_prob;
    if (noise) {
      for (double& v : dst) v = rng.uniform();
      if (from_noise) (*from_noise)[b] = true;
    } else {
      const Tensor& src = buffer.slot(rng.below(buffer.occupancy()));
      std::copy(src.data().begin(), src.data().end(), dst.begin());
    }
  }
  return out;
}

}  // namespace cebm::sampler
