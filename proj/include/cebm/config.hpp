#pragma once

// Run configuration: an INI document with sections [run], [model], [train],
// [sgld], [data] and [eval]. Unknown sections or keys are rejected, and the
// fully defaulted document can be written back out as an echo.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cebm/data.hpp"
#include "cebm/eval.hpp"
#include "cebm/model.hpp"
#include "cebm/trainer.hpp"

namespace cebm::config {

enum class EncoderTemplate { mlp, conv_small };

struct ModelSection {
  model::ModelKind kind = model::ModelKind::cebm;
  std::size_t latent_dim = 16;
  std::size_t components = 4;
  EncoderTemplate encoder = EncoderTemplate::conv_small;
  std::size_t hidden = 64;
  std::size_t depth = 2;
  std::size_t conv_channels = 8;
  double stat_head_scale = 1.0;
  // Spherical Gaussian bias N(bias_mean, bias_variance) per latent dimension.
  double bias_mean = 0.0;
  double bias_variance = 1.0;
};

enum class DataSource { synthetic, idx };

struct DataSection {
  DataSource source = DataSource::synthetic;
  data::SyntheticKind synthetic_kind = data::SyntheticKind::bar_patterns;
  std::size_t n_per_class = 100;
  std::size_t test_n_per_class = 50;
  std::size_t image_size = 12;
  std::size_t num_classes = 4;
  double pixel_noise = 0.1;
  double jitter = 0.0;
  std::string train_images;
  std::string train_labels;
  std::string test_images;
  std::string test_labels;
  // Out-of-distribution sets: "constant", "heldout", both comma separated, or "none".
  std::vector<std::string> ood_sources = {"constant", "heldout"};
  std::vector<int> ood_classes = {4};
  std::size_t ood_count = 100;
};

struct EvalSection {
  std::vector<std::string> metrics = {"knn", "ood", "fewlabel", "collapse"};
  std::size_t k = 1;
  // Entries are positive integers or "full".
  std::vector<std::string> per_class = {"1", "10", "full"};
  std::size_t repeats = 10;
  std::size_t mc_batch = 1000;
  std::vector<std::string> ood_scores = {"log_density", "grad_norm"};
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "cebm_out";
  std::size_t sample_steps = 500;
  ModelSection model;
  train::TrainConfig train;
  DataSection data;
  EvalSection eval;

  model::EncoderConfig encoder_config() const;
  expfam::GaussianNaturalParams bias_params() const;
  // Throws ConfigError naming the offending key.
  void validate() const;
};

// Parses INI text; `origin` prefixes error messages. Throws ConfigError.
RunConfig parse_config(const std::string& text, const std::string& origin = "<config>");
RunConfig load_config(const std::filesystem::path& path);

// Every key with its effective value, in a fixed order.
std::string echo_config(const RunConfig& cfg);

// output_dir, placed under $CEBM_OUTPUT_ROOT when that is set and output_dir is relative.
std::filesystem::path resolve_output_dir(const RunConfig& cfg);

inline constexpr const char* kOutputRootEnv = "CEBM_OUTPUT_ROOT";

std::vector<std::string> split_list(const std::string& text);

}  // namespace cebm::config
