// cebm: train, sample from and evaluate conjugate energy-based models.

#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cebm/commands.hpp"
#include "cebm/config.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Conjugate energy-based model toolkit"};
  app.require_subcommand(1);

  std::string train_config;
  auto* train = app.add_subcommand("train", "Train a model from a config file");
  train->add_option("--config", train_config, "Run configuration (INI)")->required();

  cebm::cli::SampleOptions sample_opts;
  std::string ckpt_path, out_path;
  auto* sample = app.add_subcommand("sample", "Draw SGLD samples from a checkpoint");
  sample->add_option("--ckpt", ckpt_path, "Checkpoint file")->required();
  sample->add_option("--steps", sample_opts.steps, "SGLD steps from uniform noise")->capture_default_str();
  sample->add_option("--count", sample_opts.count, "Number of samples")->capture_default_str();
  sample->add_option("--out", out_path, "Output PGM/PPM path")->required();
  sample->add_option("--seed", sample_opts.seed, "Sampler seed")->capture_default_str();

  std::string eval_ckpt, eval_config, metric_list;
  auto* evaluate = app.add_subcommand("eval", "Compute evaluation metrics for a checkpoint");
  evaluate->add_option("--ckpt", eval_ckpt, "Checkpoint file")->required();
  evaluate->add_option("--config", eval_config, "Run configuration (INI)")->required();
  evaluate->add_option("--metrics", metric_list, "Comma list from knn,ood,fewlabel,collapse");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : cebm::cli::kExitConfig;
  }

  if (*train) return cebm::cli::cmd_train(train_config, std::cerr);
  if (*sample) {
    sample_opts.checkpoint = ckpt_path;
    sample_opts.out = out_path;
    return cebm::cli::cmd_sample(sample_opts, std::cerr);
  }
  return cebm::cli::cmd_eval(eval_ckpt, eval_config, cebm::config::split_list(metric_list), std::cerr);
}
