#pragma once

// Maximum-likelihood training with persistent contrastive divergence.
//
// Each step draws a data batch (plus Gaussian input noise), draws negatives
// from the replay buffer refined by SGLD against the current energy, and
// descends  mean E(data) - mean E(neg) + c * (mean E(data)^2 + mean E(neg)^2).

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cebm/data.hpp"
#include "cebm/errors.hpp"
#include "cebm/model.hpp"
#include "cebm/rng.hpp"
#include "cebm/sampler.hpp"

namespace cebm::train {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  double learning_rate = 1e-4;
  std::size_t batch_size = 64;
  std::size_t total_steps = 2000;
  double l2_energy_coef = 0.1;
  double data_noise_variance = 0.03;
  // Read data_noise_variance as a standard deviation instead.
  bool data_noise_is_std = false;
  sampler::SgldConfig sgld;
  std::size_t buffer_capacity = 5000;
  double reinit_prob = 0.05;
  std::uint64_t seed = 0;

  void validate() const;
  double data_noise_std() const;
};

struct DiagnosticsRecord {
  std::size_t step = 0;
  double e_data = 0.0;
  double e_model = 0.0;
  double gap = 0.0;
  double grad_norm = 0.0;
  std::size_t buffer_occupancy = 0;
  double loss = 0.0;
};

using TrainDiagnostics = std::vector<DiagnosticsRecord>;

std::string diagnostics_csv_header();
std::string diagnostics_csv_row(const DiagnosticsRecord& r);

struct PcdResult {
  // One tensor per ParameterSet entry; zero for non-trainable entries.
  std::vector<Tensor> grads;
  DiagnosticsRecord record;
};

PcdResult pcd_gradient(const model::EnergyModel& m, const Tensor& data_batch,
                       const Tensor& negative_batch, double l2_energy_coef);

struct AdamState {
  std::vector<Tensor> first;
  std::vector<Tensor> second;
  std::uint64_t steps = 0;
};

// Bias-corrected Adam update of the trainable entries.
void adam_step(AdamState& state, model::ParameterSet& params, std::span<const Tensor> grads,
               const AdamConfig& cfg);

struct TrainCallbacks {
  std::function<void(const DiagnosticsRecord&)> on_record;
  // Invoked every 10% of total_steps and after the final step.
  std::function<void(std::size_t step, const model::EnergyModel&, const Rng&)> on_checkpoint;
};

struct TrainResult {
  TrainDiagnostics diagnostics;
  sampler::ReplayBuffer buffer;
  Rng rng;
};

// Training stopped on a non-finite energy or gradient. The model passed to
// train() has been restored to the parameters before the failing step.
class TrainingDiverged : public DivergenceError {
 public:
  TrainingDiverged(const std::string& what, std::int64_t step, TrainDiagnostics diagnostics)
      : DivergenceError(what, step), diagnostics_(std::move(diagnostics)) {}
  const TrainDiagnostics& diagnostics() const noexcept { return diagnostics_; }

 private:
  TrainDiagnostics diagnostics_;
};

TrainResult train(model::EnergyModel& m, const data::Dataset& dataset, const TrainConfig& cfg,
                  const TrainCallbacks& callbacks = {});

// Checkpoint steps for a run of total_steps.
std::vector<std::size_t> checkpoint_steps(std::size_t total_steps);

}  // namespace cebm::train
