#include <gtest/gtest.h>

#include <cstdlib>

#include "cebm/config.hpp"
#include "cebm/errors.hpp"

using namespace cebm;
using namespace cebm::config;

namespace {

std::string error_of(const std::string& text) {
  try {
    parse_config(text, "cfg.ini");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Config, EmptyDocumentGivesDefaults) {
  const RunConfig cfg = parse_config("");
  EXPECT_EQ(cfg.seed, 0u);
  EXPECT_EQ(cfg.model.latent_dim, 16u);
  EXPECT_EQ(cfg.train.batch_size, 64u);
  EXPECT_DOUBLE_EQ(cfg.train.sgld.step_size, 0.075);
  EXPECT_EQ(cfg.data.synthetic_kind, data::SyntheticKind::bar_patterns);
  EXPECT_EQ(cfg.eval.metrics, (std::vector<std::string>{"knn", "ood", "fewlabel", "collapse"}));
}

TEST(Config, ParsesEverySection) {
  const RunConfig cfg = parse_config(
      "[run]\nseed = 9\noutput_dir = out/x\n"
      "[model]\nkind = gmm-cebm\nlatent_dim = 4\ncomponents = 3\nencoder = mlp\n"
      "[train]\nlearning_rate = 0.001\ntotal_steps = 7\ndata_noise_is_std = true\n"
      "[sgld]\nstep_size = 1.5\nsteps = 12\nnoise_variance = 0.0001\nclamp = false\n"
      "[data]\npixel_noise = 0.3\nood_classes = 4,5\nood_sources = constant\n"
      "[eval]\nmetrics = knn, collapse\nper_class = 1, full\n");
  EXPECT_EQ(cfg.seed, 9u);
  EXPECT_EQ(cfg.output_dir, "out/x");
  EXPECT_EQ(cfg.model.kind, model::ModelKind::gmm_cebm);
  EXPECT_EQ(cfg.model.components, 3u);
  EXPECT_EQ(cfg.model.encoder, EncoderTemplate::mlp);
  EXPECT_DOUBLE_EQ(cfg.train.learning_rate, 0.001);
  EXPECT_EQ(cfg.train.total_steps, 7u);
  EXPECT_TRUE(cfg.train.data_noise_is_std);
  EXPECT_DOUBLE_EQ(cfg.train.sgld.step_size, 1.5);
  EXPECT_EQ(cfg.train.sgld.steps, 12u);
  EXPECT_FALSE(cfg.train.sgld.clamp);
  EXPECT_DOUBLE_EQ(cfg.data.pixel_noise, 0.3);
  EXPECT_EQ(cfg.data.ood_classes, (std::vector<int>{4, 5}));
  EXPECT_EQ(cfg.data.ood_sources, (std::vector<std::string>{"constant"}));
  EXPECT_EQ(cfg.eval.metrics, (std::vector<std::string>{"knn", "collapse"}));
  EXPECT_EQ(cfg.eval.per_class, (std::vector<std::string>{"1", "full"}));
}

TEST(Config, UnknownKeyIsNamed) {
  const std::string msg = error_of("[train]\nlearnin_rate = 0.1\n");
  EXPECT_NE(msg.find("train.learnin_rate"), std::string::npos) << msg;
  EXPECT_NE(msg.find("cfg.ini"), std::string::npos) << msg;
  EXPECT_NE(error_of("[bogus]\nx = 1\n").find("bogus.x"), std::string::npos);
}

TEST(Config, InvalidValuesAreNamed) {
  EXPECT_NE(error_of("[train]\nbatch_size = many\n").find("train.batch_size"), std::string::npos);
  EXPECT_NE(error_of("[sgld]\nclamp = maybe\n").find("sgld.clamp"), std::string::npos);
  EXPECT_NE(error_of("[model]\nencoder = resnet\n").find("model.encoder"), std::string::npos);
  EXPECT_NE(error_of("[train]\nbatch_size = 1\n").find("train.batch_size"), std::string::npos);
  EXPECT_NE(error_of("[data]\nood_classes = 2\n").find("data.ood_classes"), std::string::npos);
  EXPECT_NE(error_of("[sgld]\nstep_size = -1\n").find("sgld.step_size"), std::string::npos);
  EXPECT_NE(error_of("[eval]\nmetrics = knn,auc\n").find("eval.metrics"), std::string::npos);
  EXPECT_NE(error_of("seed = 1\n").find("seed"), std::string::npos);
  EXPECT_FALSE(error_of("[run\n").empty());
}

TEST(Config, EchoRoundTrips) {
  RunConfig cfg = parse_config("[run]\nseed = 3\n[sgld]\nstep_size = 0.1\n[data]\npixel_noise = 0.35\n");
  const std::string echo = echo_config(cfg);
  EXPECT_EQ(echo_config(parse_config(echo)), echo);
  const RunConfig back = parse_config(echo);
  EXPECT_EQ(back.seed, 3u);
  EXPECT_EQ(back.train.sgld.step_size, 0.1);
  EXPECT_EQ(back.data.pixel_noise, 0.35);
  EXPECT_NE(echo.find("[sgld]"), std::string::npos);
}

TEST(Config, SplitList) {
  EXPECT_EQ(split_list(" a, b ,,c "), (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_TRUE(split_list("").empty());
}

TEST(Config, OutputRootOverride) {
  RunConfig cfg;
  cfg.output_dir = "rel";
  ::setenv(kOutputRootEnv, "/tmp/root", 1);
  EXPECT_EQ(resolve_output_dir(cfg), std::filesystem::path("/tmp/root/rel"));
  cfg.output_dir = "/abs";
  EXPECT_EQ(resolve_output_dir(cfg), std::filesystem::path("/abs"));
  ::unsetenv(kOutputRootEnv);
  cfg.output_dir = "rel";
  EXPECT_EQ(resolve_output_dir(cfg), std::filesystem::path("rel"));
}

TEST(Config, BiasParameters) {
  RunConfig cfg = parse_config("[model]\nlatent_dim = 2\nbias_mean = 1\nbias_variance = 4\n");
  const auto b = cfg.bias_params();
  EXPECT_EQ(b.lam1(), (std::vector<double>{0.25, 0.25}));
  EXPECT_EQ(b.lam2(), (std::vector<double>{-0.125, -0.125}));
}

TEST(Config, MissingFile) {
  EXPECT_THROW(load_config("/nonexistent/cfg.ini"), ConfigError);
}
