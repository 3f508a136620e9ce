#pragma once

// Conjugate energy-based models.
//
// An encoder network maps an image x to neural sufficient statistics
// t(x) = (t1, t2), one pair per latent dimension. With a Gaussian bias whose
// natural parameters are lambda, the joint energy
//
//   E(x, z) = -<t(x), eta(z)> - <eta(z), lambda> + B(lambda),  eta(z) = (z, z^2)
//
// factorises into a closed-form Gaussian posterior with parameters
// lambda + t(x) and a marginal energy E(x) = B(lambda) - B(lambda + t(x)).

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "cebm/autodiff.hpp"
#include "cebm/expfam.hpp"
#include "cebm/rng.hpp"
#include "cebm/tensor.hpp"

namespace cebm::model {

enum class LayerKind { conv, dense };
enum class Activation { none, swish, relu, leaky_relu, softplus };

struct LayerSpec {
  LayerKind kind = LayerKind::dense;
  std::size_t out = 0;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t padding = 0;
  Activation activation = Activation::swish;
};

struct EncoderConfig {
  std::size_t channels = 1;
  std::size_t height = 1;
  std::size_t width = 1;
  std::vector<LayerSpec> trunk;
  std::size_t latent_dim = 16;

  // Dense layers of `hidden` units with swish.
  static EncoderConfig mlp(std::size_t channels, std::size_t height, std::size_t width,
                           std::size_t hidden, std::size_t depth, std::size_t latent_dim);
  // 3x3 stride-1 conv, 4x4 stride-2 conv, dense hidden layer; all swish. A
  // reduced-width version of the published encoder trunk.
  static EncoderConfig conv_small(std::size_t channels, std::size_t height, std::size_t width,
                                  std::size_t conv_channels, std::size_t hidden,
                                  std::size_t latent_dim);

  Shape input_shape() const { return {channels, height, width}; }
  std::size_t input_size() const { return channels * height * width; }
  // Feature width after the trunk; validates the layer stack.
  std::size_t trunk_width() const;
};

// Ordered, named parameter tensors. Non-trainable entries (e.g. a frozen
// bias) are stored so checkpoints round-trip them but are never updated.
class ParameterSet {
 public:
  struct Entry {
    std::string name;
    Tensor value;
    bool trainable = true;
  };

  std::size_t add(std::string name, Tensor value, bool trainable = true);
  std::size_t size() const noexcept { return entries_.size(); }
  Entry& operator[](std::size_t i) { return entries_[i]; }
  const Entry& operator[](std::size_t i) const { return entries_[i]; }
  std::size_t index_of(const std::string& name) const;
  Tensor& value(const std::string& name) { return entries_[index_of(name)].value; }
  const Tensor& value(const std::string& name) const { return entries_[index_of(name)].value; }

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  // Trainable entries become leaves when `differentiable`, constants otherwise.
  std::vector<ad::Var> bind(ad::Tape& tape, bool differentiable) const;

  std::size_t trainable_count() const;

 private:
  std::vector<Entry> entries_;
};

using BoundParams = std::span<const ad::Var>;

// Conv/dense stack shared by every model class.
class Trunk {
 public:
  Trunk() = default;
  Trunk(const EncoderConfig& config, ParameterSet& params, Rng& rng);

  // x [N, C, H, W] -> features [N, width]
  ad::Var forward(const BoundParams& params, const ad::Var& x) const;
  std::size_t width() const noexcept { return width_; }

 private:
  struct Layer {
    LayerSpec spec;
    std::size_t weight = 0;
    std::size_t bias = 0;
  };
  EncoderConfig config_;
  std::vector<Layer> layers_;
  std::size_t width_ = 0;
};

enum class ModelKind { cebm, gmm_cebm, baseline_ebm };
const char* to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

// Interface the sampler, trainer and evaluation code see.
class EnergyModel {
 public:
  virtual ~EnergyModel() = default;

  virtual ModelKind kind() const = 0;
  virtual std::unique_ptr<EnergyModel> clone() const = 0;

  // Per-example energies [N] for x [N, C, H, W].
  virtual ad::Var energy(const BoundParams& params, const ad::Var& x) const = 0;

  // Representation used for downstream evaluation, [N, features].
  virtual Tensor representation(const Tensor& x) const = 0;

  const EncoderConfig& config() const noexcept { return config_; }
  ParameterSet& params() noexcept { return params_; }
  const ParameterSet& params() const noexcept { return params_; }

  // Energies without gradient tracking.
  Tensor energies(const Tensor& x) const;
  // Reshapes [C,H,W], [N,C,H,W] or [N,C*H*W] input into a batch; throws ShapeError otherwise.
  Tensor as_batch(const Tensor& x) const;
  // Sets every trainable tensor to zero.
  void zero_weights();

 protected:
  EnergyModel(EncoderConfig config) : config_(std::move(config)) {}
  EncoderConfig config_;
  ParameterSet params_;
};

// Posterior over z given x as a mixture of diagonal Gaussians. A single
// component for the Gaussian bias; L components for the mixture bias.
struct PosteriorMixture {
  std::vector<double> weights;
  std::vector<expfam::GaussianNaturalParams> components;

  double log_density(std::span<const double> z) const;
  std::vector<double> mean() const;
  std::vector<double> sample(Rng& rng) const;
};

// Models whose posterior and bias are exponential-family mixtures.
class ConjugateModel : public EnergyModel {
 public:
  struct Stats {
    ad::Var t1;  // [N, K]
    ad::Var t2;  // [N, K], strictly negative unless stat_head_scale == 0
  };

  Stats encode(const BoundParams& params, const ad::Var& x) const;
  // Statistics as plain tensors [N, K].
  std::pair<Tensor, Tensor> encode(const Tensor& x) const;

  std::size_t latent_dim() const noexcept { return config_.latent_dim; }
  double stat_head_scale() const noexcept { return stat_head_scale_; }

  virtual std::vector<PosteriorMixture> posterior_mixtures(const Tensor& x) const = 0;
  virtual PosteriorMixture bias_mixture() const = 0;

  const Trunk& trunk() const noexcept { return trunk_; }

 protected:
  ConjugateModel(EncoderConfig config, double stat_head_scale, Rng& rng);

  Trunk trunk_;
  std::size_t head_weight_ = 0;
  std::size_t head_bias_ = 0;
  double stat_head_scale_ = 1.0;
};

class CebmModel final : public ConjugateModel {
 public:
  // stat_head_scale >= 0; zero pins t2 to 0. Bias lambda is frozen.
  CebmModel(EncoderConfig config, expfam::GaussianNaturalParams bias, double stat_head_scale,
            Rng& rng);

  ModelKind kind() const override { return ModelKind::cebm; }
  std::unique_ptr<EnergyModel> clone() const override;

  ad::Var energy(const BoundParams& params, const ad::Var& x) const override;
  // Posterior means [N, K].
  Tensor representation(const Tensor& x) const override;

  expfam::GaussianNaturalParams bias() const;

  // E(x, z) = -sum_k (t1 z + t2 z^2) + E_lambda(z) for a single example.
  double energy_joint(const Tensor& x, std::span<const double> z) const;
  // E(x) = -B(lambda + t(x)) + B(lambda) for a single example.
  double energy_marginal(const Tensor& x) const;
  // lambda + t(x) for a single example.
  expfam::GaussianNaturalParams posterior(const Tensor& x) const;

  std::vector<PosteriorMixture> posterior_mixtures(const Tensor& x) const override;
  PosteriorMixture bias_mixture() const override;
};

class GmmCebmModel final : public ConjugateModel {
 public:
  // Component means start on a grid in [-1, 1] with unit variance. components >= 2.
  GmmCebmModel(EncoderConfig config, std::size_t components, double stat_head_scale, Rng& rng);

  ModelKind kind() const override { return ModelKind::gmm_cebm; }
  std::unique_ptr<EnergyModel> clone() const override;

  ad::Var energy(const BoundParams& params, const ad::Var& x) const override;
  // Responsibility-weighted posterior means [N, K].
  Tensor representation(const Tensor& x) const override;

  std::size_t components() const noexcept { return components_; }
  std::vector<expfam::GaussianNaturalParams> component_params() const;

  struct ComponentPosterior {
    std::vector<double> probs;
    std::vector<expfam::GaussianNaturalParams> posteriors;
  };
  // Single example.
  ComponentPosterior component_posterior(const Tensor& x) const;
  double gmm_energy_marginal(const Tensor& x) const;

  std::vector<PosteriorMixture> posterior_mixtures(const Tensor& x) const override;
  PosteriorMixture bias_mixture() const override;

 private:
  std::size_t components_ = 0;
};

// Unconditional EBM with the same trunk plus a scalar head.
class BaselineEbm final : public EnergyModel {
 public:
  BaselineEbm(EncoderConfig config, Rng& rng);

  ModelKind kind() const override { return ModelKind::baseline_ebm; }
  std::unique_ptr<EnergyModel> clone() const override;

  ad::Var energy(const BoundParams& params, const ad::Var& x) const override;
  // Last trunk layer features [N, width].
  Tensor representation(const Tensor& x) const override;

 private:
  Trunk trunk_;
  std::size_t head_weight_ = 0;
  std::size_t head_bias_ = 0;
};

// Value-level form of the mixture marginal energy used by GmmCebmModel:
// -logsumexp_l sum_k (B(lambda_l + t) - B(lambda_l)).
double mixture_marginal_energy(std::span<const expfam::GaussianNaturalParams> components,
                               std::span<const double> t1, std::span<const double> t2);
// Marginal energy B(lambda) - B(lambda + t) from statistics directly.
double marginal_energy_from_stats(const expfam::GaussianNaturalParams& bias,
                                  std::span<const double> t1, std::span<const double> t2);

// --- exponential family harmonium -------------------------------------------

// -<x^T W, z> - <x, theta_x> - <z, theta_z> with W of shape [D, K].
double efh_energy(std::span<const double> x, std::span<const double> z,
                  std::span<const double> theta_x, std::span<const double> theta_z,
                  const Tensor& theta_xz);

// Linear statistics t(x) = [x^T W, <theta_x, x>] of the harmonium written as a CEBM.
std::vector<double> efh_statistics(std::span<const double> x, std::span<const double> theta_x,
                                   const Tensor& theta_xz);
// Natural-parameter map eta(z) = [z, 1] of the same reduction.
std::vector<double> efh_eta(std::span<const double> z);

// General conjugate energy -<t, eta> + bias_energy.
double conjugate_energy(std::span<const double> t, std::span<const double> eta, double bias_energy);

// Builds a model of the requested kind.
std::unique_ptr<EnergyModel> make_model(ModelKind kind, const EncoderConfig& config,
                                        std::size_t components, double stat_head_scale, Rng& rng);

}  // namespace cebm::model
