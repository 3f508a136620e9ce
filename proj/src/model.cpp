#include "cebm/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cebm/errors.hpp"

namespace cebm::model {

namespace {

ad::Var activate(const ad::Var& x, Activation act) {
  switch (act) {
    case Activation::none: return x;
    case Activation::swish: return ad::swish(x);
    case Activation::relu: return ad::relu(x);
    case Activation::leaky_relu: return ad::leaky_relu(x);
    case Activation::softplus: return ad::softplus(x);
  }
  return x;
}

Tensor uniform_fan_in(Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  for (double& v : t.data()) v = rng.uniform(-bound, bound);
  return t;
}

std::size_t conv_extent(std::size_t in, const LayerSpec& l) {
  if (in + 2 * l.padding < l.kernel || l.stride == 0) {
    throw ShapeError("conv layer kernel " + std::to_string(l.kernel) + " exceeds input extent " +
                     std::to_string(in));
  }
  return (in + 2 * l.padding - l.kernel) / l.stride + 1;
}

double softplus_inverse(double y) { return std::log(std::expm1(y)); }

double logsumexp(std::span<const double> v) {
  const double mx = *std::max_element(v.begin(), v.end());
  double acc = 0.0;
  for (double x : v) acc += std::exp(x - mx);
  return mx + std::log(acc);
}

}  // namespace

// --- EncoderConfig ----------------------------------------------------------

EncoderConfig EncoderConfig::mlp(std::size_t channels, std::size_t height, std::size_t width,
                                 std::size_t hidden, std::size_t depth, std::size_t latent_dim) {
  EncoderConfig cfg;
  cfg.channels = channels;
  cfg.height = height;
  cfg.width = width;
  cfg.latent_dim = latent_dim;
  for (std::size_t i = 0; i < depth; ++i) {
    cfg.trunk.push_back({LayerKind::dense, hidden, 0, 1, 0, Activation::swish});
  }
  return cfg;
}

EncoderConfig EncoderConfig::conv_small(std::size_t channels, std::size_t height, std::size_t width,
                                        std::size_t conv_channels, std::size_t hidden,
                                        std::size_t latent_dim) {
  EncoderConfig cfg;
  cfg.channels = channels;
  cfg.height = height;
  cfg.width = width;
  cfg.latent_dim = latent_dim;
  cfg.trunk = {
      {LayerKind::conv, conv_channels, 3, 1, 1, Activation::swish},
      {LayerKind::conv, 2 * conv_channels, 4, 2, 1, Activation::swish},
      {LayerKind::dense, hidden, 0, 1, 0, Activation::swish},
  };
  return cfg;
}

std::size_t EncoderConfig::trunk_width() const {
  if (channels == 0 || height == 0 || width == 0) throw ShapeError("encoder input extents must be positive");
  if (latent_dim == 0) throw ShapeError("latent dimension must be positive");
  std::size_t c = channels, h = height, w = width;
  bool flat = false;
  std::size_t features = c * h * w;
  for (const auto& l : trunk) {
    if (l.out == 0) throw ShapeError("layer width must be positive");
    if (l.kind == LayerKind::conv) {
      if (flat) throw ShapeError("conv layer after dense layer");
      h = conv_extent(h, l);
      w = conv_extent(w, l);
      c = l.out;
      features = c * h * w;
    } else {
      flat = true;
      features = l.out;
    }
  }
  return features;
}

// --- ParameterSet -----------------------------------------------------------

std::size_t ParameterSet::add(std::string name, Tensor value, bool trainable) {
  for (const auto& e : entries_) {
    if (e.name == name) throw std::invalid_argument("duplicate parameter name: " + name);
  }
  entries_.push_back({std::move(name), std::move(value), trainable});
  return entries_.size() - 1;
}

std::size_t ParameterSet::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name == name) return i;
  }
  throw std::out_of_range("no parameter named " + name);
}

std::vector<ad::Var> ParameterSet::bind(ad::Tape& tape, bool differentiable) const {
  std::vector<ad::Var> vars;
  vars.reserve(entries_.size());
  for (const auto& e : entries_) {
    vars.push_back(differentiable && e.trainable ? tape.leaf(e.value) : tape.constant(e.value));
  }
  return vars;
}

std::size_t ParameterSet::trainable_count() const {
  return static_cast<std::size_t>(
      std::count_if(entries_.begin(), entries_.end(), [](const Entry& e) { return e.trainable; }));
}

// --- Trunk ------------------------------------------------------------------

Trunk::Trunk(const EncoderConfig& config, ParameterSet& params, Rng& rng) : config_(config) {
  width_ = config.trunk_width();
  std::size_t c = config.channels, h = config.height, w = config.width;
  std::size_t features = c * h * w;
  for (std::size_t i = 0; i < config.trunk.size(); ++i) {
    const LayerSpec& spec = config.trunk[i];
    const std::string prefix = "trunk." + std::to_string(i) + ".";
    Layer layer{spec, 0, 0};
    if (spec.kind == LayerKind::conv) {
      const std::size_t fan_in = c * spec.kernel * spec.kernel;
      layer.weight = params.add(prefix + "weight",
                                uniform_fan_in({spec.out, c, spec.kernel, spec.kernel}, fan_in, rng));
      layer.bias = params.add(prefix + "bias", Tensor::zeros({spec.out}));
      h = conv_extent(h, spec);
      w = conv_extent(w, spec);
      c = spec.out;
      features = c * h * w;
    } else {
      layer.weight = params.add(prefix + "weight", uniform_fan_in({features, spec.out}, features, rng));
      layer.bias = params.add(prefix + "bias", Tensor::zeros({spec.out}));
      features = spec.out;
    }
    layers_.push_back(layer);
  }
}

ad::Var Trunk::forward(const BoundParams& params, const ad::Var& x) const {
  ad::Var h = x;
  const std::size_t n = x.shape()[0];
  bool flat = false;
  for (const auto& layer : layers_) {
    if (layer.spec.kind == LayerKind::conv) {
      h = ad::conv2d(h, params[layer.weight], layer.spec.stride, layer.spec.padding);
    } else {
      if (!flat) {
        h = ad::reshape(h, {n, h.value().size() / std::max<std::size_t>(n, 1)});
        flat = true;
      }
      h = ad::matmul(h, params[layer.weight]);
    }
    h = activate(ad::add_bias(h, params[layer.bias]), layer.spec.activation);
  }
  if (!flat) h = ad::reshape(h, {n, h.value().size() / std::max<std::size_t>(n, 1)});
  return h;
}

// --- EnergyModel ------------------------------------------------------------

const char* to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::cebm: return "cebm";
    case ModelKind::gmm_cebm: return "gmm-cebm";
    case ModelKind::baseline_ebm: return "baseline-ebm";
  }
  return "unknown";
}

ModelKind model_kind_from_string(const std::string& name) {
  if (name == "cebm") return ModelKind::cebm;
  if (name == "gmm-cebm") return ModelKind::gmm_cebm;
  if (name == "baseline-ebm") return ModelKind::baseline_ebm;
  throw std::invalid_argument("unknown model kind '" + name + "'");
}

Tensor EnergyModel::as_batch(const Tensor& x) const {
  const Shape in = config_.input_shape();
  const Shape& s = x.shape();
  if (s == in) return x.reshaped({1, in[0], in[1], in[2]});
  if (s.size() == 4 && Shape(s.begin() + 1, s.end()) == in) return x;
  if (s.size() == 2 && s[1] == config_.input_size()) return x.reshaped({s[0], in[0], in[1], in[2]});
  throw ShapeError("input shape " + shape_string(s) + " does not match encoder input " +
                   shape_string(in));
}

Tensor EnergyModel::energies(const Tensor& x) const {
  ad::Tape tape;
  const auto params = params_.bind(tape, false);
  return energy(params, tape.constant(as_batch(x))).value();
}

void EnergyModel::zero_weights() {
  for (auto& e : params_) {
    if (e.trainable) std::fill(e.value.data().begin(), e.value.data().end(), 0.0);
  }
}

// --- PosteriorMixture -------------------------------------------------------

double PosteriorMixture::log_density(std::span<const double> z) const {
  if (components.size() == 1) return expfam::log_density(components[0], z, expfam::DensityRoute::canonical);
  std::vector<double> terms(components.size());
  for (std::size_t l = 0; l < components.size(); ++l) {
    terms[l] = std::log(weights[l]) + expfam::log_density(components[l], z, expfam::DensityRoute::canonical);
  }
  return logsumexp(terms);
}

std::vector<double> PosteriorMixture::mean() const {
  std::vector<double> m(components.front().dims(), 0.0);
  for (std::size_t l = 0; l < components.size(); ++l) {
    const auto mp = expfam::natural_to_mean(components[l]);
    for (std::size_t k = 0; k < m.size(); ++k) m[k] += weights[l] * mp.m1()[k];
  }
  return m;
}

std::vector<double> PosteriorMixture::sample(Rng& rng) const {
  std::size_t pick = 0;
  if (components.size() > 1) {
    double u = rng.uniform(), acc = 0.0;
    pick = components.size() - 1;
    for (std::size_t l = 0; l < components.size(); ++l) {
      acc += weights[l];
      if (u < acc) {
        pick = l;
        break;
      }
    }
  }
  return expfam::gaussian_sample(components[pick], rng);
}

// --- ConjugateModel ---------------------------------------------------------

ConjugateModel::ConjugateModel(EncoderConfig config, double stat_head_scale, Rng& rng)
    : EnergyModel(std::move(config)), stat_head_scale_(stat_head_scale) {
  if (!(stat_head_scale >= 0.0) || !std::isfinite(stat_head_scale)) {
    throw std::invalid_argument("stat_head_scale must be finite and non-negative");
  }
  trunk_ = Trunk(config_, params_, rng);
  const std::size_t f = trunk_.width();
  const std::size_t k = config_.latent_dim;
  head_weight_ = params_.add("head.weight", uniform_fan_in({f, 2 * k}, f, rng));
  head_bias_ = params_.add("head.bias", Tensor::zeros({2 * k}));
}

ConjugateModel::Stats ConjugateModel::encode(const BoundParams& params, const ad::Var& x) const {
  const std::size_t k = config_.latent_dim;
  ad::Var features = trunk_.forward(params, x);
  ad::Var head = ad::add_bias(ad::matmul(features, params[head_weight_]), params[head_bias_]);
  ad::Var t1 = ad::slice_cols(head, 0, k);
  // Squashed second statistic keeps lambda2 + t2 negative.
  ad::Var t2 = ad::scale(ad::softplus(ad::slice_cols(head, k, 2 * k)), -stat_head_scale_);
  return {t1, t2};
}

std::pair<Tensor, Tensor> ConjugateModel::encode(const Tensor& x) const {
  ad::Tape tape;
  const auto params = params_.bind(tape, false);
  const Stats s = encode(params, tape.constant(as_batch(x)));
  return {s.t1.value(), s.t2.value()};
}

// --- CebmModel --------------------------------------------------------------

CebmModel::CebmModel(EncoderConfig config, expfam::GaussianNaturalParams bias,
                     double stat_head_scale, Rng& rng)
    : ConjugateModel(std::move(config), stat_head_scale, rng) {
  if (bias.dims() != config_.latent_dim) {
    throw ShapeError("bias dimension " + std::to_string(bias.dims()) + " differs from latent dim " +
                     std::to_string(config_.latent_dim));
  }
  params_.add("bias.lam1", Tensor::vector(bias.lam1()), false);
  params_.add("bias.lam2", Tensor::vector(bias.lam2()), false);
}

std::unique_ptr<EnergyModel> CebmModel::clone() const { return std::make_unique<CebmModel>(*this); }

expfam::GaussianNaturalParams CebmModel::bias() const {
  return expfam::GaussianNaturalParams(params_.value("bias.lam1").values(),
                                       params_.value("bias.lam2").values());
}

ad::Var CebmModel::energy(const BoundParams& params, const ad::Var& x) const {
  const Stats s = encode(params, x);
  const ad::Var& lam1 = params[params_.index_of("bias.lam1")];
  const ad::Var& lam2 = params[params_.index_of("bias.lam2")];
  ad::Var b_post = ad::gaussian_log_normalizer(ad::add_bias(s.t1, lam1), ad::add_bias(s.t2, lam2));
  const double b_bias = expfam::log_normalizer_b(lam1.value().data(), lam2.value().data());
  const std::size_t n = x.shape()[0];
  return ad::sub(x.tape().constant(Tensor::full({n}, b_bias)), b_post);
}

Tensor CebmModel::representation(const Tensor& x) const {
  const auto [t1, t2] = encode(x);
  const std::size_t n = t1.dim(0), k = t1.dim(1);
  const auto lam = bias();
  Tensor codes({n, k});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      const double l1 = lam.lam1()[j] + t1[i * k + j];
      const double l2 = lam.lam2()[j] + t2[i * k + j];
      codes[i * k + j] = -l1 / (2.0 * l2);
    }
  return codes;
}

double CebmModel::energy_joint(const Tensor& x, std::span<const double> z) const {
  const std::size_t k = latent_dim();
  if (z.size() != k) throw ShapeError("energy_joint: z has wrong length");
  for (double v : z) {
    if (!std::isfinite(v)) throw DomainError("energy_joint: non-finite z");
  }
  const Tensor batch = as_batch(x);
  if (batch.dim(0) != 1) throw ShapeError("energy_joint expects a single example");
  const auto [t1, t2] = encode(batch);
  const auto lam = bias();
  double e = expfam::log_normalizer_b(lam);
  for (std::size_t j = 0; j < k; ++j) {
    e -= t1[j] * z[j] + t2[j] * z[j] * z[j];
    e -= lam.lam1()[j] * z[j] + lam.lam2()[j] * z[j] * z[j];
  }
  return e;
}

double CebmModel::energy_marginal(const Tensor& x) const {
  const Tensor batch = as_batch(x);
  if (batch.dim(0) != 1) throw ShapeError("energy_marginal expects a single example");
  const auto [t1, t2] = encode(batch);
  return marginal_energy_from_stats(bias(), t1.data(), t2.data());
}

expfam::GaussianNaturalParams CebmModel::posterior(const Tensor& x) const {
  const Tensor batch = as_batch(x);
  if (batch.dim(0) != 1) throw ShapeError("posterior expects a single example");
  const auto [t1, t2] = encode(batch);
  return expfam::posterior_params(bias(), t1.data(), t2.data());
}

std::vector<PosteriorMixture> CebmModel::posterior_mixtures(const Tensor& x) const {
  const auto [t1, t2] = encode(x);
  const std::size_t n = t1.dim(0), k = t1.dim(1);
  const auto lam = bias();
  std::vector<PosteriorMixture> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row1 = t1.data().subspan(i * k, k);
    const auto row2 = t2.data().subspan(i * k, k);
    out.push_back({{1.0}, {expfam::posterior_params(lam, row1, row2)}});
  }
  return out;
}

PosteriorMixture CebmModel::bias_mixture() const { return {{1.0}, {bias()}}; }

// --- GmmCebmModel -----------------------------------------------------------

GmmCebmModel::GmmCebmModel(EncoderConfig config, std::size_t components, double stat_head_scale,
                           Rng& rng)
    : ConjugateModel(std::move(config), stat_head_scale, rng), components_(components) {
  if (components < 2) throw std::invalid_argument("GMM bias needs at least 2 components");
  const std::size_t k = latent_dim();
  Tensor lam1({components, k});
  Tensor raw({components, k});
  const double raw_unit_variance = softplus_inverse(0.5);
  for (std::size_t l = 0; l < components; ++l) {
    const double centre = -1.0 + 2.0 * static_cast<double>(l) / static_cast<double>(components - 1);
    for (std::size_t j = 0; j < k; ++j) {
      lam1[l * k + j] = centre;  // unit variance, so lam1 equals the mean
      raw[l * k + j] = raw_unit_variance;
    }
  }
  params_.add("gmm.lam1", std::move(lam1));
  params_.add("gmm.lam2_raw", std::move(raw));
}

std::unique_ptr<EnergyModel> GmmCebmModel::clone() const {
  return std::make_unique<GmmCebmModel>(*this);
}

std::vector<expfam::GaussianNaturalParams> GmmCebmModel::component_params() const {
  const std::size_t k = latent_dim();
  const Tensor& lam1 = params_.value("gmm.lam1");
  const Tensor& raw = params_.value("gmm.lam2_raw");
  std::vector<expfam::GaussianNaturalParams> out;
  for (std::size_t l = 0; l < components_; ++l) {
    std::vector<double> l1(k), l2(k);
    for (std::size_t j = 0; j < k; ++j) {
      l1[j] = lam1[l * k + j];
      const double r = raw[l * k + j];
      l2[j] = -(r > 0.0 ? r + std::log1p(std::exp(-r)) : std::log1p(std::exp(r)));
    }
    out.emplace_back(std::move(l1), std::move(l2));
  }
  return out;
}

ad::Var GmmCebmModel::energy(const BoundParams& params, const ad::Var& x) const {
  const Stats s = encode(params, x);
  const std::size_t n = x.shape()[0], k = latent_dim();
  const ad::Var& lam1 = params[params_.index_of("gmm.lam1")];
  const ad::Var& raw = params[params_.index_of("gmm.lam2_raw")];
  ad::Tape& tape = x.tape();
  const ad::Var zeros = tape.constant(Tensor::zeros({n, k}));
  std::vector<ad::Var> gaps;
  gaps.reserve(components_);
  for (std::size_t l = 0; l < components_; ++l) {
    const ad::Var l1 = ad::row(lam1, l);
    const ad::Var l2 = ad::negate(ad::softplus(ad::row(raw, l)));
    const ad::Var b_post = ad::gaussian_log_normalizer(ad::add_bias(s.t1, l1), ad::add_bias(s.t2, l2));
    const ad::Var b_prior = ad::gaussian_log_normalizer(ad::add_bias(zeros, l1), ad::add_bias(zeros, l2));
    gaps.push_back(ad::sub(b_post, b_prior));
  }
  return ad::negate(ad::logsumexp(ad::stack_cols(gaps)));
}

GmmCebmModel::ComponentPosterior GmmCebmModel::component_posterior(const Tensor& x) const {
  const Tensor batch = as_batch(x);
  if (batch.dim(0) != 1) throw ShapeError("component_posterior expects a single example");
  const auto [t1, t2] = encode(batch);
  const auto comps = component_params();
  ComponentPosterior out;
  std::vector<double> gaps;
  for (const auto& c : comps) {
    out.posteriors.push_back(expfam::posterior_params(c, t1.data(), t2.data()));
    gaps.push_back(expfam::log_normalizer_b(out.posteriors.back()) - expfam::log_normalizer_b(c));
  }
  const double lse = logsumexp(gaps);
  for (double g : gaps) out.probs.push_back(std::exp(g - lse));
  return out;
}

double GmmCebmModel::gmm_energy_marginal(const Tensor& x) const {
  const Tensor batch = as_batch(x);
  if (batch.dim(0) != 1) throw ShapeError("gmm_energy_marginal expects a single example");
  const auto [t1, t2] = encode(batch);
  const auto comps = component_params();
  return mixture_marginal_energy(comps, t1.data(), t2.data());
}

std::vector<PosteriorMixture> GmmCebmModel::posterior_mixtures(const Tensor& x) const {
  const auto [t1, t2] = encode(x);
  const std::size_t n = t1.dim(0), k = t1.dim(1);
  const auto comps = component_params();
  std::vector<PosteriorMixture> out;
  out.reserve(n);
  std::vector<double> gaps(components_);
  for (std::size_t i = 0; i < n; ++i) {
    PosteriorMixture mix;
    const auto row1 = t1.data().subspan(i * k, k);
    const auto row2 = t2.data().subspan(i * k, k);
    for (std::size_t l = 0; l < components_; ++l) {
      mix.components.push_back(expfam::posterior_params(comps[l], row1, row2));
      gaps[l] = expfam::log_normalizer_b(mix.components.back()) - expfam::log_normalizer_b(comps[l]);
    }
    const double lse = logsumexp(gaps);
    for (double g : gaps) mix.weights.push_back(std::exp(g - lse));
    out.push_back(std::move(mix));
  }
  return out;
}

PosteriorMixture GmmCebmModel::bias_mixture() const {
  PosteriorMixture mix;
  mix.components = component_params();
  mix.weights.assign(components_, 1.0 / static_cast<double>(components_));
  return mix;
}

Tensor GmmCebmModel::representation(const Tensor& x) const {
  const auto mixtures = posterior_mixtures(x);
  const std::size_t k = latent_dim();
  Tensor codes({mixtures.size(), k});
  for (std::size_t i = 0; i < mixtures.size(); ++i) {
    const auto m = mixtures[i].mean();
    std::copy(m.begin(), m.end(), codes.data().begin() + static_cast<std::ptrdiff_t>(i * k));
  }
  return codes;
}

// --- BaselineEbm ------------------------------------------------------------

BaselineEbm::BaselineEbm(EncoderConfig config, Rng& rng) : EnergyModel(std::move(config)) {
  trunk_ = Trunk(config_, params_, rng);
  const std::size_t f = trunk_.width();
  head_weight_ = params_.add("head.weight", uniform_fan_in({f, 1}, f, rng));
  head_bias_ = params_.add("head.bias", Tensor::zeros({1}));
}

std::unique_ptr<EnergyModel> BaselineEbm::clone() const { return std::make_unique<BaselineEbm>(*this); }

ad::Var BaselineEbm::energy(const BoundParams& params, const ad::Var& x) const {
  ad::Var features = trunk_.forward(params, x);
  ad::Var out = ad::add_bias(ad::matmul(features, params[head_weight_]), params[head_bias_]);
  return ad::reshape(out, {x.shape()[0]});
}

Tensor BaselineEbm::representation(const Tensor& x) const {
  ad::Tape tape;
  const auto params = params_.bind(tape, false);
  return trunk_.forward(params, tape.constant(as_batch(x))).value();
}

// --- value-level energies ---------------------------------------------------

double marginal_energy_from_stats(const expfam::GaussianNaturalParams& bias,
                                  std::span<const double> t1, std::span<const double> t2) {
  return -expfam::log_normalizer_b(expfam::posterior_params(bias, t1, t2)) +
         expfam::log_normalizer_b(bias);
}

double mixture_marginal_energy(std::span<const expfam::GaussianNaturalParams> components,
                               std::span<const double> t1, std::span<const double> t2) {
  if (components.empty()) throw std::invalid_argument("mixture needs at least one component");
  std::vector<double> gaps;
  gaps.reserve(components.size());
  for (const auto& c : components) {
    gaps.push_back(expfam::log_normalizer_b(expfam::posterior_params(c, t1, t2)) -
                   expfam::log_normalizer_b(c));
  }
  return -logsumexp(gaps);
}

// --- EFH --------------------------------------------------------------------

double efh_energy(std::span<const double> x, std::span<const double> z,
                  std::span<const double> theta_x, std::span<const double> theta_z,
                  const Tensor& theta_xz) {
  const std::size_t d = x.size(), k = z.size();
  if (theta_x.size() != d || theta_z.size() != k || theta_xz.shape() != Shape{d, k}) {
    throw ShapeError("efh_energy: parameter shapes do not match x and z");
  }
  double bilinear = 0.0;
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < k; ++j) bilinear += x[i] * theta_xz[i * k + j] * z[j];
  double ex = 0.0, ez = 0.0;
  for (std::size_t i = 0; i < d; ++i) ex += x[i] * theta_x[i];
  for (std::size_t j = 0; j < k; ++j) ez += z[j] * theta_z[j];
  return -bilinear - ex - ez;
}

std::vector<double> efh_statistics(std::span<const double> x, std::span<const double> theta_x,
                                   const Tensor& theta_xz) {
  const std::size_t d = x.size();
  if (theta_x.size() != d || theta_xz.rank() != 2 || theta_xz.dim(0) != d) {
    throw ShapeError("efh_statistics: parameter shapes do not match x");
  }
  const std::size_t k = theta_xz.dim(1);
  std::vector<double> t(k + 1, 0.0);
  for (std::size_t j = 0; j < k; ++j)
    for (std::size_t i = 0; i < d; ++i) t[j] += x[i] * theta_xz[i * k + j];
  for (std::size_t i = 0; i < d; ++i) t[k] += theta_x[i] * x[i];
  return t;
}

std::vector<double> efh_eta(std::span<const double> z) {
  std::vector<double> eta(z.begin(), z.end());
  eta.push_back(1.0);
  return eta;
}

double conjugate_energy(std::span<const double> t, std::span<const double> eta, double bias_energy) {
  if (t.size() != eta.size()) throw ShapeError("conjugate_energy: t and eta lengths differ");
  return -std::inner_product(t.begin(), t.end(), eta.begin(), 0.0) + bias_energy;
}

std::unique_ptr<EnergyModel> make_model(ModelKind kind, const EncoderConfig& config,
                                        std::size_t components, double stat_head_scale, Rng& rng) {
  switch (kind) {
    case ModelKind::cebm:
      return std::make_unique<CebmModel>(config, expfam::GaussianNaturalParams::standard(config.latent_dim),
                                         stat_head_scale, rng);
    case ModelKind::gmm_cebm:
      return std::make_unique<GmmCebmModel>(config, components, stat_head_scale, rng);
    case ModelKind::baseline_ebm:
      return std::make_unique<BaselineEbm>(config, rng);
  }
  throw std::invalid_argument("unknown model kind");
}

}  // namespace cebm::model
