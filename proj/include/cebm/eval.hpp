#pragma once

// Representation and density quality metrics for trained energy models.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cebm/data.hpp"
#include "cebm/model.hpp"
#include "cebm/rng.hpp"
#include "cebm/sampler.hpp"
#include "cebm/tensor.hpp"

namespace cebm::eval {

struct EncodedSet {
  Tensor codes;  // [N, K]
  std::vector<int> labels;
  std::string source;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t dim() const { return codes.dim(1); }
  // Row count matches labels and codes are finite; throws otherwise.
  void validate() const;
};

// Posterior means for conjugate models, trunk features for the baseline.
EncodedSet encode_dataset(const model::EnergyModel& m, const data::Dataset& dataset);
// Flattened pixels, the representation-free baseline.
EncodedSet pixel_codes(const data::Dataset& dataset);

struct KnnReport {
  std::size_t k = 1;
  std::size_t num_classes = 0;
  // Row c: distribution of neighbour labels over queries labelled c.
  std::vector<std::vector<double>> confusion;
  double same_class_fraction = 0.0;
  // Some class has at most k members, so it cannot fill its own neighbourhood.
  bool degenerate = false;
};

// L2 k-nearest neighbours with the query itself excluded. Equal distances
// are broken by the lower index.
KnnReport knn_report(const EncodedSet& set, std::size_t k = 1);

std::string confusion_csv(const KnnReport& report);

enum class OodScoreKind { log_density, grad_norm };
const char* to_string(OodScoreKind kind);
OodScoreKind ood_score_kind_from_string(const std::string& name);

struct OodScores {
  OodScoreKind kind = OodScoreKind::log_density;
  std::vector<double> in_scores;
  std::vector<double> out_scores;
};

// Higher score means more in-distribution: log_density is -E(x), grad_norm
// is -|dE/dx|. Throws NonFiniteError naming the offending example.
std::vector<double> ood_score_values(const sampler::EnergyFn& energy, const Tensor& x, OodScoreKind kind);
OodScores ood_scores(const sampler::EnergyFn& energy, const Tensor& in_data, const Tensor& out_data,
                     OodScoreKind kind);
OodScores ood_scores(const model::EnergyModel& m, const data::Dataset& in_data,
                     const data::Dataset& out_data, OodScoreKind kind);

// P(pos > neg) + P(pos == neg) / 2, exact.
double auroc(std::span<const double> pos_scores, std::span<const double> neg_scores);

struct ProbeConfig {
  std::size_t epochs = 500;
  double learning_rate = 0.1;
};

struct ProbeReport {
  // nullopt means the full training set.
  std::optional<std::size_t> per_class;
  std::vector<double> accuracies;
  double mean = 0.0;
  double std = 0.0;
};

// Multinomial logistic regression on frozen codes, trained by full-batch
// gradient descent from zero weights on standardized codes. Repeat r draws
// its labelled subset from an independent stream derived from `seed`.
ProbeReport few_label_probe(const EncodedSet& train, const EncodedSet& test,
                            std::optional<std::size_t> per_class, std::size_t repeats,
                            std::uint64_t seed, const ProbeConfig& cfg = {});

struct CollapseReport {
  double kl = 0.0;
  double mi = 0.0;
  double kl_std = 0.0;
  double mi_std = 0.0;
  std::vector<double> kl_batches;
  std::vector<double> mi_batches;
  std::size_t batch_size = 0;
};

inline constexpr std::size_t kCollapseBatches = 5;

// Aggregate-posterior KL to the bias and mutual information, estimated with
// the batch mixture q(z) = mean_m p(z | x_m) over Monte Carlo batches of
// min(mc_batch, N) examples, one z draw per example.
CollapseReport collapse_metrics_from_posteriors(std::span<const model::PosteriorMixture> posteriors,
                                                const model::PosteriorMixture& bias,
                                                std::size_t mc_batch, std::size_t batches, Rng& rng);
CollapseReport collapse_metrics(const model::ConjugateModel& m, const data::Dataset& dataset,
                                std::size_t mc_batch, Rng& rng, std::size_t batches = kCollapseBatches);

}  // namespace cebm::eval
