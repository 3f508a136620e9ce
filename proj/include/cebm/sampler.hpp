#pragma once

// Stochastic gradient Langevin dynamics with a persistent replay buffer.

#include <cstddef>
#include <functional>
#include <vector>

#include "cebm/autodiff.hpp"
#include "cebm/model.hpp"
#include "cebm/rng.hpp"
#include "cebm/tensor.hpp"

namespace cebm::sampler {

struct SgldConfig {
  double step_size = 0.075;
  std::size_t steps = 60;
  // Variance of the injected Gaussian noise (standard deviation sqrt(noise_variance)).
  double noise_variance = 0.075;
  // Project iterates onto [0, 1] after each step.
  bool clamp = true;

  void validate() const;
};

// Energy of a batch: returns [N] per-example energies or a scalar.
using EnergyFn = std::function<ad::Var(ad::Tape&, const ad::Var& x)>;

// Energy function of a frozen model (parameters enter as constants).
EnergyFn model_energy(const model::EnergyModel& m);

// x_{i+1} = x_i - (step_size / 2) dE/dx + eps,  eps ~ N(0, noise_variance).
// Throws DivergenceError naming the step when an energy or gradient is non-finite.
Tensor sgld_run(const EnergyFn& energy, const Tensor& x0, const SgldConfig& cfg, Rng& rng);

// Energies of every iterate including the start, for diagnostics. Same update as sgld_run.
std::vector<double> sgld_energy_trace(const EnergyFn& energy, const Tensor& x0,
                                      const SgldConfig& cfg, Rng& rng, Tensor* final = nullptr);

class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, Shape sample_shape);

  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t occupancy() const noexcept { return slots_.size(); }
  const Shape& sample_shape() const noexcept { return sample_shape_; }
  const Tensor& slot(std::size_t i) const { return slots_.at(i); }
  // Number of pushes that have reached this buffer.
  std::size_t pushes() const noexcept { return pushes_; }
  // Push index at which slot i was last written.
  std::size_t slot_written_at(std::size_t i) const { return written_at_.at(i); }

  // Appends a batch [N, ...sample_shape]; once full, each sample overwrites a
  // uniformly chosen slot. Returns the occupancy.
  std::size_t update(const Tensor& samples, Rng& rng);

 private:
  std::size_t capacity_;
  Shape sample_shape_;
  std::vector<Tensor> slots_;
  std::vector<std::size_t> written_at_;
  std::size_t pushes_ = 0;
};

// Each element is drawn from the buffer with probability 1 - reinit_prob and
// from Uniform[0, 1]^shape otherwise. An empty buffer always yields noise.
// `from_noise`, when given, receives one flag per element.
Tensor buffer_init_batch(const ReplayBuffer& buffer, std::size_t batch, double reinit_prob,
                         const Shape& shape, Rng& rng, std::vector<bool>* from_noise = nullptr);

std::size_t buffer_update(ReplayBuffer& buffer, const Tensor& samples, Rng& rng);

Tensor uniform_noise(const Shape& shape, Rng& rng);

}  // namespace cebm::sampler
