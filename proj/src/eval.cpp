#include "cebm/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "cebm/errors.hpp"

namespace cebm::eval {

namespace {

constexpr std::size_t kChunk = 256;

std::size_t class_count(std::span<const int> a, std::span<const int> b = {}) {
  int top = -1;
  for (int v : a) top = std::max(top, v);
  for (int v : b) top = std::max(top, v);
  return static_cast<std::size_t>(top + 1);
}

double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_std(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double mu = mean_of(v);
  double acc = 0.0;
  for (double x : v) acc += (x - mu) * (x - mu);
  return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

// log((1/n) sum exp(v)), exact when all entries are equal.
double log_mean_exp(std::span<const double> v) {
  const double top = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(top)) return top;
  double acc = 0.0;
  for (double x : v) acc += std::exp(x - top);
  return top + std::log(acc / static_cast<double>(v.size()));
}

}  // namespace

void EncodedSet::validate() const {
  if (codes.rank() != 2) throw ShapeError("EncodedSet: codes must be [N, K], got " + shape_string(codes.shape()));
  if (codes.dim(0) != labels.size()) {
    throw ShapeError("EncodedSet: " + std::to_string(codes.dim(0)) + " code rows but " +
                     std::to_string(labels.size()) + " labels");
  }
  if (!codes.all_finite()) throw NonFiniteError("EncodedSet '" + source + "': non-finite code");
  for (int l : labels) {
    if (l < 0) throw std::invalid_argument("EncodedSet: negative label");
  }
}

EncodedSet encode_dataset(const model::EnergyModel& m, const data::Dataset& dataset) {
  const std::size_t n = dataset.size();
  std::vector<Tensor> chunks;
  for (std::size_t begin = 0; begin < n; begin += kChunk) {
    const std::size_t end = std::min(n, begin + kChunk);
    chunks.push_back(m.representation(dataset.images().slice_rows(begin, end)));
  }
  const std::size_t width = chunks.front().dim(1);
  std::vector<double> flat;
  flat.reserve(n * width);
  for (const auto& c : chunks) flat.insert(flat.end(), c.data().begin(), c.data().end());
  EncodedSet set{Tensor({n, width}, std::move(flat)), dataset.labels(),
                 std::string(model::to_string(m.kind())) + ":" + dataset.name() + "/" + dataset.split()};
  set.validate();
  return set;
}

EncodedSet pixel_codes(const data::Dataset& dataset) {
  const std::size_t n = dataset.size();
  const std::size_t d = shape_size(dataset.image_shape());
  EncodedSet set{dataset.images().reshaped({n, d}), dataset.labels(), "pixels:" + dataset.name() + "/" + dataset.split()};
  set.validate();
  return set;
}

KnnReport knn_report(const EncodedSet& set, std::size_t k) {
  set.validate();
  const std::size_t n = set.size();
  if (k == 0) throw std::invalid_argument("knn_report: k must be at least 1");
  if (n < k + 1) {
    throw std::invalid_argument("knn_report: need at least k+1 = " + std::to_string(k + 1) + " points, got " +
                                std::to_string(n));
  }
  const std::size_t d = set.dim();
  const std::size_t classes = class_count(set.labels);
  const auto codes = set.codes.data();

  KnnReport report;
  report.k = k;
  report.num_classes = classes;
  report.confusion.assign(classes, std::vector<double>(classes, 0.0));
  std::vector<std::size_t> per_class(classes, 0);
  for (int l : set.labels) ++per_class[static_cast<std::size_t>(l)];
  for (std::size_t c = 0; c < classes; ++c) {
    if (per_class[c] > 0 && per_class[c] <= k) report.degenerate = true;
  }

  std::vector<std::pair<double, std::size_t>> dist(n - 1);
  double same_total = 0.0;
  for (std::size_t q = 0; q < n; ++q) {
    std::size_t j = 0;
    for (std::size_t p = 0; p < n; ++p) {
      if (p == q) continue;
      double acc = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        const double diff = codes[q * d + i] - codes[p * d + i];
        acc += diff * diff;
      }
      dist[j++] = {acc, p};
    }
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
    const auto ql = static_cast<std::size_t>(set.labels[q]);
    std::size_t same = 0;
    for (std::size_t i = 0; i < k; ++i) {
      const auto nl = static_cast<std::size_t>(set.labels[dist[i].second]);
      report.confusion[ql][nl] += 1.0;
      if (nl == ql) ++same;
    }
    same_total += static_cast<double>(same) / static_cast<double>(k);
  }
  for (std::size_t c = 0; c < classes; ++c) {
    const double total = static_cast<double>(per_class[c] * k);
    if (total > 0.0)
      for (double& v : report.confusion[c]) v /= total;
  }
  report.same_class_fraction = same_total / static_cast<double>(n);
  return report;
}

std::string confusion_csv(const KnnReport& report) {
  std::ostringstream out;
  out.precision(17);
  out << "query_label";
  for (std::size_t c = 0; c < report.num_classes; ++c) out << ",neighbor_" << c;
  out << '\n';
  for (std::size_t r = 0; r < report.num_classes; ++r) {
    out << r;
    for (double v : report.confusion[r]) out << ',' << v;
    out << '\n';
  }
  return out.str();
}

const char* to_string(OodScoreKind kind) {
  switch (kind) {
    case OodScoreKind::log_density: return "log_density";
    case OodScoreKind::grad_norm: return "grad_norm";
  }
  return "unknown";
}

OodScoreKind ood_score_kind_from_string(const std::string& name) {
  if (name == "log_density") return OodScoreKind::log_density;
  if (name == "grad_norm") return OodScoreKind::grad_norm;
  throw std::invalid_argument("unknown OOD score kind '" + name + "'");
}

std::vector<double> ood_score_values(const sampler::EnergyFn& energy, const Tensor& x, OodScoreKind kind) {
  const std::size_t n = x.dim(0);
  const std::size_t per = n == 0 ? 0 : x.size() / n;
  std::vector<double> scores;
  scores.reserve(n);
  for (std::size_t begin = 0; begin < n; begin += kChunk) {
    const std::size_t end = std::min(n, begin + kChunk);
    for (std::size_t r = begin; r < end; ++r) {
      for (std::size_t i = 0; i < per; ++i) {
        if (!std::isfinite(x[r * per + i])) {
          throw NonFiniteError("ood_scores: non-finite input at example " + std::to_string(r));
        }
      }
    }
    ad::Tape tape;
    const ad::Var input = kind == OodScoreKind::grad_norm ? tape.leaf(x.slice_rows(begin, end))
                                                          : tape.constant(x.slice_rows(begin, end));
    const ad::Var e = energy(tape, input);
    if (e.value().size() != end - begin) throw ShapeError("ood_scores: energy must return one value per example");
    if (kind == OodScoreKind::log_density) {
      for (double v : e.value().data()) scores.push_back(-v);
    } else {
      // Examples are independent, so the gradient of the summed energy
      // holds every per-example gradient.
      const ad::Gradients g = tape.backward(ad::sum(e));
      const auto grad = g[input].data();
      for (std::size_t r = 0; r < end - begin; ++r) {
        double acc = 0.0;
        for (std::size_t i = 0; i < per; ++i) acc += grad[r * per + i] * grad[r * per + i];
        scores.push_back(-std::sqrt(acc));
      }
    }
    for (std::size_t r = begin; r < end; ++r) {
      if (!std::isfinite(scores[r])) {
        throw NonFiniteError(std::string("ood_scores: non-finite ") + to_string(kind) + " score at example " +
                             std::to_string(r));
      }
    }
  }
  return scores;
}

OodScores ood_scores(const sampler::EnergyFn& energy, const Tensor& in_data, const Tensor& out_data,
                     OodScoreKind kind) {
  if (in_data.rank() == 0 || out_data.rank() == 0 || in_data.dim(0) == 0 || out_data.dim(0) == 0) {
    throw std::invalid_argument("ood_scores: both datasets must be non-empty");
  }
  if (in_data.size() / in_data.dim(0) != out_data.size() / out_data.dim(0)) {
    throw ShapeError("ood_scores: in- and out-of-distribution inputs differ in shape");
  }
  OodScores out;
  out.kind = kind;
  out.in_scores = ood_score_values(energy, in_data, kind);
  try {
    out.out_scores = ood_score_values(energy, out_data, kind);
  } catch (const NonFiniteError& err) {
    throw NonFiniteError(std::string("out-of-distribution set: ") + err.what());
  }
  return out;
}

OodScores ood_scores(const model::EnergyModel& m, const data::Dataset& in_data, const data::Dataset& out_data,
                     OodScoreKind kind) {
  if (in_data.image_shape() != out_data.image_shape()) {
    throw ShapeError("ood_scores: image shapes " + shape_string(in_data.image_shape()) + " and " +
                     shape_string(out_data.image_shape()) + " differ");
  }
  return ood_scores(sampler::model_energy(m), in_data.images(), out_data.images(), kind);
}

double auroc(std::span<const double> pos_scores, std::span<const double> neg_scores) {
  if (pos_scores.empty() || neg_scores.empty()) throw std::invalid_argument("auroc: empty score vector");
  for (double v : pos_scores)
    if (std::isnan(v)) throw NonFiniteError("auroc: NaN positive score");
  for (double v : neg_scores)
    if (std::isnan(v)) throw NonFiniteError("auroc: NaN negative score");
  std::vector<double> neg(neg_scores.begin(), neg_scores.end());
  std::sort(neg.begin(), neg.end());
  // Twice the Mann-Whitney count keeps the tally integral.
  unsigned long long twice = 0;
  for (double p : pos_scores) {
    const auto lo = std::lower_bound(neg.begin(), neg.end(), p);
    const auto hi = std::upper_bound(lo, neg.end(), p);
    twice += 2ULL * static_cast<unsigned long long>(lo - neg.begin()) + static_cast<unsigned long long>(hi - lo);
  }
  return static_cast<double>(twice) /
         (2.0 * static_cast<double>(pos_scores.size()) * static_cast<double>(neg.size()));
}

namespace {

struct Softmax {
  std::size_t d = 0;
  std::size_t classes = 0;
  std::vector<double> w;  // [d + 1, classes], last row is the bias

  double logit(std::span<const double> x, std::size_t c) const {
    double acc = w[d * classes + c];
    for (std::size_t i = 0; i < d; ++i) acc += x[i] * w[i * classes + c];
    return acc;
  }
  std::size_t predict(std::span<const double> x) const {
    std::size_t best = 0;
    double best_v = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < classes; ++c) {
      const double v = logit(x, c);
      if (v > best_v) {
        best_v = v;
        best = c;
      }
    }
    return best;
  }
};

Softmax fit_softmax(const std::vector<double>& x, std::span<const int> y, std::size_t d, std::size_t classes,
                    const ProbeConfig& cfg) {
  Softmax model{d, classes, std::vector<double>((d + 1) * classes, 0.0)};
  const std::size_t n = y.size();
  std::vector<double> grad(model.w.size());
  std::vector<double> p(classes);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t r = 0; r < n; ++r) {
      const std::span<const double> xr(x.data() + r * d, d);
      double top = -std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < classes; ++c) {
        p[c] = model.logit(xr, c);
        top = std::max(top, p[c]);
      }
      double z = 0.0;
      for (double& v : p) z += (v = std::exp(v - top));
      for (std::size_t c = 0; c < classes; ++c) {
        const double err = p[c] / z - (static_cast<std::size_t>(y[r]) == c ? 1.0 : 0.0);
        for (std::size_t i = 0; i < d; ++i) grad[i * classes + c] += err * xr[i];
        grad[d * classes + c] += err;
      }
    }
    const double step = cfg.learning_rate / static_cast<double>(n);
    for (std::size_t i = 0; i < grad.size(); ++i) model.w[i] -= step * grad[i];
  }
  return model;
}

}  // namespace

ProbeReport few_label_probe(const EncodedSet& train, const EncodedSet& test, std::optional<std::size_t> per_class,
                            std::size_t repeats, std::uint64_t seed, const ProbeConfig& cfg) {
  train.validate();
  test.validate();
  if (repeats == 0) throw std::invalid_argument("few_label_probe: repeats must be at least 1");
  if (train.dim() != test.dim()) throw ShapeError("few_label_probe: train and test code widths differ");
  if (per_class && *per_class == 0) throw std::invalid_argument("few_label_probe: per_class must be positive");
  const std::size_t d = train.dim();
  const std::size_t classes = class_count(train.labels, test.labels);

  std::vector<std::vector<std::size_t>> by_class(classes);
  for (std::size_t i = 0; i < train.size(); ++i) by_class[static_cast<std::size_t>(train.labels[i])].push_back(i);
  for (std::size_t c = 0; c < classes; ++c) {
    const std::size_t need = per_class.value_or(1);
    if (by_class[c].size() < need) {
      throw std::invalid_argument("few_label_probe: class " + std::to_string(c) + " has " +
                                  std::to_string(by_class[c].size()) + " training examples, fewer than " +
                                  std::to_string(need));
    }
  }

  ProbeReport report;
  report.per_class = per_class;
  Rng base(seed);
  const auto train_codes = train.codes.data();
  const auto test_codes = test.codes.data();
  for (std::size_t rep = 0; rep < repeats; ++rep) {
    Rng rng = base.split();
    std::vector<std::size_t> chosen;
    if (per_class) {
      for (auto members : by_class) {
        for (std::size_t i = 0; i < *per_class; ++i) {
          const std::size_t j = i + rng.below(members.size() - i);
          std::swap(members[i], members[j]);
          chosen.push_back(members[i]);
        }
      }
    } else {
      chosen.resize(train.size());
      std::iota(chosen.begin(), chosen.end(), std::size_t{0});
    }

    std::vector<double> mu(d, 0.0), sd(d, 0.0);
    for (std::size_t idx : chosen)
      for (std::size_t i = 0; i < d; ++i) mu[i] += train_codes[idx * d + i];
    for (double& v : mu) v /= static_cast<double>(chosen.size());
    for (std::size_t idx : chosen)
      for (std::size_t i = 0; i < d; ++i) sd[i] += (train_codes[idx * d + i] - mu[i]) * (train_codes[idx * d + i] - mu[i]);
    for (double& v : sd) v = std::max(std::sqrt(v / static_cast<double>(chosen.size())), 1e-8);

    std::vector<double> x(chosen.size() * d);
    std::vector<int> y(chosen.size());
    for (std::size_t r = 0; r < chosen.size(); ++r) {
      y[r] = train.labels[chosen[r]];
      for (std::size_t i = 0; i < d; ++i) x[r * d + i] = (train_codes[chosen[r] * d + i] - mu[i]) / sd[i];
    }
    const Softmax clf = fit_softmax(x, y, d, classes, cfg);

    std::size_t correct = 0;
    std::vector<double> q(d);
    for (std::size_t r = 0; r < test.size(); ++r) {
      for (std::size_t i = 0; i < d; ++i) q[i] = (test_codes[r * d + i] - mu[i]) / sd[i];
      if (clf.predict(q) == static_cast<std::size_t>(test.labels[r])) ++correct;
    }
    report.accuracies.push_back(static_cast<double>(correct) / static_cast<double>(test.size()));
  }
  report.mean = mean_of(report.accuracies);
  report.std = sample_std(report.accuracies);
  return report;
}

CollapseReport collapse_metrics_from_posteriors(std::span<const model::PosteriorMixture> posteriors,
                                                const model::PosteriorMixture& bias, std::size_t mc_batch,
                                                std::size_t batches, Rng& rng) {
  const std::size_t n = posteriors.size();
  if (n == 0) throw std::invalid_argument("collapse_metrics: no posteriors");
  if (mc_batch == 0 || batches == 0) throw std::invalid_argument("collapse_metrics: mc_batch and batches must be positive");
  const std::size_t m = std::min(mc_batch, n);

  CollapseReport report;
  report.batch_size = m;
  std::vector<std::size_t> order(n);
  std::vector<double> log_cond(m);
  for (std::size_t b = 0; b < batches; ++b) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (m < n) {
      for (std::size_t i = 0; i < m; ++i) std::swap(order[i], order[i + rng.below(n - i)]);
    }
    std::vector<std::vector<double>> z(m);
    for (std::size_t i = 0; i < m; ++i) z[i] = posteriors[order[i]].sample(rng);

    double kl = 0.0, mi = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < m; ++j) log_cond[j] = posteriors[order[j]].log_density(z[i]);
      const double log_q = log_mean_exp(log_cond);
      const double log_prior = bias.log_density(z[i]);
      const double log_post = log_cond[i];
      if (!std::isfinite(log_q)) throw NonFiniteError("collapse_metrics: non-finite aggregate log density log q(z)");
      if (!std::isfinite(log_prior)) throw NonFiniteError("collapse_metrics: non-finite bias log density log p(z)");
      if (!std::isfinite(log_post)) throw NonFiniteError("collapse_metrics: non-finite posterior log density log p(z|x)");
      kl += log_q - log_prior;
      mi += log_post - log_q;
    }
    report.kl_batches.push_back(kl / static_cast<double>(m));
    report.mi_batches.push_back(mi / static_cast<double>(m));
  }
  report.kl = mean_of(report.kl_batches);
  report.mi = mean_of(report.mi_batches);
  report.kl_std = sample_std(report.kl_batches);
  report.mi_std = sample_std(report.mi_batches);
  return report;
}

CollapseReport collapse_metrics(const model::ConjugateModel& m, const data::Dataset& dataset, std::size_t mc_batch,
                                Rng& rng, std::size_t batches) {
  std::vector<model::PosteriorMixture> posteriors;
  posteriors.reserve(dataset.size());
  for (std::size_t begin = 0; begin < dataset.size(); begin += kChunk) {
    const std::size_t end = std::min(dataset.size(), begin + kChunk);
    auto part = m.posterior_mixtures(dataset.images().slice_rows(begin, end));
    for (auto& p : part) posteriors.push_back(std::move(p));
  }
  return collapse_metrics_from_posteriors(posteriors, m.bias_mixture(), mc_batch, batches, rng);
}

}  // namespace cebm::eval
