#pragma once

// Batch pipelines behind the `cebm` executable. Each returns a process exit
// status and reports problems on `err`.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "cebm/config.hpp"
#include "cebm/data.hpp"
#include "cebm/model.hpp"
#include "cebm/rng.hpp"

namespace cebm::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 2,
  kExitData = 3,
  kExitDivergence = 4,
  kExitMetric = 5,
};

// Independent random streams of a run, all derived from the config seed.
struct RunStreams {
  Rng train_data;
  Rng test_data;
  Rng ood_data;
  Rng model_init;
  std::uint64_t train_seed = 0;
  std::uint64_t probe_seed = 0;
  Rng collapse;

  explicit RunStreams(std::uint64_t seed);
};

struct NamedDataset {
  std::string name;
  data::Dataset dataset;
};

struct RunData {
  data::Dataset train;
  data::Dataset test;
  std::vector<NamedDataset> ood;
};

// Throws std::invalid_argument or FormatError on data problems.
RunData build_datasets(const config::RunConfig& cfg, RunStreams& streams);

std::unique_ptr<model::EnergyModel> build_model(const config::RunConfig& cfg, Rng& rng);
// Rebuilds the architecture from the checkpoint's config echo and loads its parameters.
std::unique_ptr<model::EnergyModel> load_model(const std::filesystem::path& checkpoint);

int cmd_train(const std::filesystem::path& config_path, std::ostream& err);

struct SampleOptions {
  std::filesystem::path checkpoint;
  std::size_t steps = 500;
  std::size_t count = 16;
  std::filesystem::path out;
  std::uint64_t seed = 0;
};

int cmd_sample(const SampleOptions& opts, std::ostream& err);

// `metrics` empty means the list from the config's [eval] section.
int cmd_eval(const std::filesystem::path& checkpoint, const std::filesystem::path& config_path,
             const std::vector<std::string>& metrics, std::ostream& err);

}  // namespace cebm::cli
