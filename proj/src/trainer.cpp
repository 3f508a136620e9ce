#include "cebm/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace cebm::train {

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !(l2_energy_coef >= 0.0) || !(data_noise_variance >= 0.0) ||
      !(reinit_prob >= 0.0 && reinit_prob <= 1.0)) {
    throw std::invalid_argument("training rates and coefficients must be non-negative");
  }
  if (batch_size < 2) throw std::invalid_argument("batch_size must be at least 2");
  if (buffer_capacity == 0) throw std::invalid_argument("buffer_capacity must be positive");
  sgld.validate();
}

double TrainConfig::data_noise_std() const {
  return data_noise_is_std ? data_noise_variance : std::sqrt(data_noise_variance);
}

std::string diagnostics_csv_header() { return "step,e_data,e_model,gap,grad_norm,buffer_occ"; }

std::string diagnostics_csv_row(const DiagnosticsRecord& r) {
  std::ostringstream out;
  out << std::setprecision(17) << r.step << ',' << r.e_data << ',' << r.e_model << ',' << r.gap << ','
      << r.grad_norm << ',' << r.buffer_occupancy;
  return out.str();
}

namespace {

// Gradients of a scalar built from per-example energies of one batch.
template <class Reduce>
std::pair<std::vector<Tensor>, std::vector<double>> grad_of(const model::EnergyModel& m, const Tensor& x,
                                                            Reduce reduce) {
  ad::Tape tape;
  const auto params = m.params().bind(tape, true);
  const ad::Var energies = m.energy(params, tape.constant(x));
  std::vector<double> values(energies.value().data().begin(), energies.value().data().end());
  const ad::Var loss = reduce(energies);
  const ad::Gradients g = tape.backward(loss);
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    out.push_back(m.params()[i].trainable ? g[params[i]] : Tensor::zeros(m.params()[i].value.shape()));
  }
  return {std::move(out), std::move(values)};
}

double mean_of(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc / static_cast<double>(v.size());
}

double mean_square(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return acc / static_cast<double>(v.size());
}

}  // namespace

PcdResult pcd_gradient(const model::EnergyModel& m, const Tensor& data_batch,
                       const Tensor& negative_batch, double l2_energy_coef) {
  const Tensor data = m.as_batch(data_batch);
  const Tensor neg = m.as_batch(negative_batch);
  if (data.dim(0) == 0 || neg.dim(0) == 0) throw std::invalid_argument("pcd_gradient: empty batch");

  // The contrastive and regulariser parts are differentiated separately so
  // that identical batches cancel exactly.
  auto [g_data, e_data] = grad_of(m, data, [](const ad::Var& e) { return ad::mean(e); });
  auto [g_neg, e_neg] = grad_of(m, neg, [](const ad::Var& e) { return ad::mean(e); });
  std::vector<Tensor> grads = std::move(g_data);
  for (std::size_t i = 0; i < grads.size(); ++i) {
    auto d = grads[i].data();
    const auto n = g_neg[i].data();
    for (std::size_t j = 0; j < d.size(); ++j) d[j] -= n[j];
  }
  if (l2_energy_coef > 0.0) {
    auto reg = [l2_energy_coef](const ad::Var& e) { return ad::scale(ad::mean(ad::square(e)), l2_energy_coef); };
    const auto r_data = grad_of(m, data, reg).first;
    const auto r_neg = grad_of(m, neg, reg).first;
    for (std::size_t i = 0; i < grads.size(); ++i) {
      auto d = grads[i].data();
      for (std::size_t j = 0; j < d.size(); ++j) d[j] += r_data[i][j] + r_neg[i][j];
    }
  }

  PcdResult result;
  double norm2 = 0.0;
  for (const auto& g : grads)
    for (double v : g.data()) norm2 += v * v;
  result.record.e_data = mean_of(e_data);
  result.record.e_model = mean_of(e_neg);
  result.record.gap = result.record.e_data - result.record.e_model;
  result.record.grad_norm = std::sqrt(norm2);
  result.record.loss = result.record.gap + l2_energy_coef * (mean_square(e_data) + mean_square(e_neg));
  if (!std::isfinite(result.record.grad_norm) || !std::isfinite(result.record.loss)) {
    throw DivergenceError("non-finite PCD gradient", -1);
  }
  result.grads = std::move(grads);
  return result;
}

void adam_step(AdamState& state, model::ParameterSet& params, std::span<const Tensor> grads,
               const AdamConfig& cfg) {
  if (grads.size() != params.size()) throw ShapeError("adam_step: gradient count differs from parameter count");
  if (state.first.empty()) {
    for (const auto& e : params) {
      state.first.push_back(Tensor::zeros(e.value.shape()));
      state.second.push_back(Tensor::zeros(e.value.shape()));
    }
  }
  if (state.first.size() != params.size()) throw ShapeError("adam_step: optimizer state does not match parameters");
  ++state.steps;
  const double t = static_cast<double>(state.steps);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& e = params[i];
    if (grads[i].shape() != e.value.shape() || state.first[i].shape() != e.value.shape()) {
      throw ShapeError("adam_step: shape mismatch for parameter '" + e.name + "'");
    }
    if (!e.trainable) continue;
    auto p = e.value.data();
    auto m = state.first[i].data();
    auto v = state.second[i].data();
    const auto g = grads[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
      p[j] -= cfg.learning_rate * (m[j] / c1) / (std::sqrt(v[j] / c2) + cfg.eps);
    }
  }
}

std::vector<std::size_t> checkpoint_steps(std::size_t total_steps) {
  std::vector<std::size_t> steps;
  if (total_steps == 0) return {0};
  const std::size_t every = std::max<std::size_t>(1, (total_steps + 9) / 10);
  for (std::size_t s = every; s < total_steps; s += every) steps.push_back(s);
  steps.push_back(total_steps);
  return steps;
}

TrainResult train(model::EnergyModel& m, const data::Dataset& dataset, const TrainConfig& cfg,
                  const TrainCallbacks& callbacks) {
  cfg.validate();
  const Shape sample_shape = dataset.image_shape();
  m.as_batch(Tensor::zeros(sample_shape));  // shape check against the encoder

  Rng rng(cfg.seed);
  Rng data_rng = rng.split();
  Rng noise_rng = rng.split();
  Rng sgld_rng = rng.split();
  Rng buffer_rng = rng.split();

  TrainResult result{{}, sampler::ReplayBuffer(cfg.buffer_capacity, sample_shape), rng};
  const auto ckpt_steps = checkpoint_steps(cfg.total_steps);
  auto next_ckpt = ckpt_steps.begin();

  AdamState adam;
  const AdamConfig adam_cfg{cfg.learning_rate};
  const double noise_std = cfg.data_noise_std();
  const sampler::EnergyFn energy = sampler::model_energy(m);

  if (cfg.total_steps == 0) {
    if (callbacks.on_checkpoint) callbacks.on_checkpoint(0, m, rng);
    return result;
  }

  std::vector<std::size_t> idx(cfg.batch_size);
  for (std::size_t step = 1; step <= cfg.total_steps; ++step) {
    const model::ParameterSet last_good = m.params();
    try {
      for (auto& i : idx) i = data_rng.below(dataset.size());
      Tensor batch = dataset.gather(idx);
      if (noise_std > 0.0) {
        for (double& v : batch.data()) v += noise_std * noise_rng.normal();
      }
      const Tensor init = sampler::buffer_init_batch(result.buffer, cfg.batch_size, cfg.reinit_prob,
                                                     sample_shape, buffer_rng);
      const Tensor negatives = sampler::sgld_run(energy, init, cfg.sgld, sgld_rng);
      PcdResult pcd = pcd_gradient(m, batch, negatives, cfg.l2_energy_coef);
      adam_step(adam, m.params(), pcd.grads, adam_cfg);
      for (const auto& e : m.params()) {
        if (!e.value.all_finite()) throw DivergenceError("non-finite parameter after update", -1);
      }
      pcd.record.step = step;
      pcd.record.buffer_occupancy = sampler::buffer_update(result.buffer, negatives, buffer_rng);
      result.diagnostics.push_back(pcd.record);
      if (callbacks.on_record) callbacks.on_record(pcd.record);
    } catch (const DivergenceError& err) {
      m.params() = last_good;
      throw TrainingDiverged(std::string("training diverged at step ") + std::to_string(step) + ": " + err.what(),
                             static_cast<std::int64_t>(step), result.diagnostics);
    } catch (const NonFiniteError& err) {
      m.params() = last_good;
      throw TrainingDiverged(std::string("training diverged at step ") + std::to_string(step) + ": " + err.what(),
                             static_cast<std::int64_t>(step), result.diagnostics);
    }
    if (next_ckpt != ckpt_steps.end() && *next_ckpt == step) {
      if (callbacks.on_checkpoint) callbacks.on_checkpoint(step, m, rng);
      ++next_ckpt;
    }
  }
  result.rng = rng;
  return result;
}

}  // namespace cebm::train
