#include "cebm/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "cebm/errors.hpp"

namespace cebm::config {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

struct BadValue {
  std::string expected;
};

std::uint64_t to_u64(const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty()) throw BadValue{"a non-negative integer"};
  return out;
}

std::size_t to_size(const std::string& v) { return static_cast<std::size_t>(to_u64(v)); }

double to_double(const std::string& v) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty()) throw BadValue{"a number"};
  return out;
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw BadValue{"true or false"};
}

std::string fmt(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}
std::string fmt(std::uint64_t v) { return std::to_string(v); }
std::string fmt(bool v) { return v ? "true" : "false"; }

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
  return out;
}

const char* to_string(EncoderTemplate t) { return t == EncoderTemplate::mlp ? "mlp" : "conv_small"; }
const char* to_string(DataSource s) { return s == DataSource::idx ? "idx" : "synthetic"; }

struct Field {
  const char* section;
  const char* key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define CEBM_SIZE(sec, key, member)                                            \
  Field{sec, key, [](RunConfig& c, const std::string& v) { c.member = to_size(v); }, \
        [](const RunConfig& c) { return fmt(static_cast<std::uint64_t>(c.member)); }}
#define CEBM_DOUBLE(sec, key, member)                                            \
  Field{sec, key, [](RunConfig& c, const std::string& v) { c.member = to_double(v); }, \
        [](const RunConfig& c) { return fmt(c.member); }}
#define CEBM_BOOL(sec, key, member)                                            \
  Field{sec, key, [](RunConfig& c, const std::string& v) { c.member = to_bool(v); }, \
        [](const RunConfig& c) { return fmt(c.member); }}
#define CEBM_STRING(sec, key, member)                                    \
  Field{sec, key, [](RunConfig& c, const std::string& v) { c.member = v; }, \
        [](const RunConfig& c) { return c.member; }}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      Field{"run", "seed", [](RunConfig& c, const std::string& v) { c.seed = to_u64(v); },
            [](const RunConfig& c) { return fmt(c.seed); }},
      CEBM_STRING("run", "output_dir", output_dir),
      CEBM_SIZE("run", "sample_steps", sample_steps),

      Field{"model", "kind",
            [](RunConfig& c, const std::string& v) {
              try {
                c.model.kind = model::model_kind_from_string(v);
              } catch (const std::invalid_argument&) {
                throw BadValue{"one of cebm, gmm-cebm, baseline-ebm"};
              }
            },
            [](const RunConfig& c) { return std::string(model::to_string(c.model.kind)); }},
      CEBM_SIZE("model", "latent_dim", model.latent_dim),
      CEBM_SIZE("model", "components", model.components),
      Field{"model", "encoder",
            [](RunConfig& c, const std::string& v) {
              if (v == "mlp") c.model.encoder = EncoderTemplate::mlp;
              else if (v == "conv_small") c.model.encoder = EncoderTemplate::conv_small;
              else throw BadValue{"mlp or conv_small"};
            },
            [](const RunConfig& c) { return std::string(to_string(c.model.encoder)); }},
      CEBM_SIZE("model", "hidden", model.hidden),
      CEBM_SIZE("model", "depth", model.depth),
      CEBM_SIZE("model", "conv_channels", model.conv_channels),
      CEBM_DOUBLE("model", "stat_head_scale", model.stat_head_scale),
      CEBM_DOUBLE("model", "bias_mean", model.bias_mean),
      CEBM_DOUBLE("model", "bias_variance", model.bias_variance),

      CEBM_DOUBLE("train", "learning_rate", train.learning_rate),
      CEBM_SIZE("train", "batch_size", train.batch_size),
      CEBM_SIZE("train", "total_steps", train.total_steps),
      CEBM_DOUBLE("train", "l2_energy_coef", train.l2_energy_coef),
      CEBM_DOUBLE("train", "data_noise_variance", train.data_noise_variance),
      CEBM_BOOL("train", "data_noise_is_std", train.data_noise_is_std),
      CEBM_SIZE("train", "buffer_capacity", train.buffer_capacity),
      CEBM_DOUBLE("train", "reinit_prob", train.reinit_prob),

      CEBM_DOUBLE("sgld", "step_size", train.sgld.step_size),
      CEBM_SIZE("sgld", "steps", train.sgld.steps),
      CEBM_DOUBLE("sgld", "noise_variance", train.sgld.noise_variance),
      CEBM_BOOL("sgld", "clamp", train.sgld.clamp),

      Field{"data", "source",
            [](RunConfig& c, const std::string& v) {
              if (v == "synthetic") c.data.source = DataSource::synthetic;
              else if (v == "idx") c.data.source = DataSource::idx;
              else throw BadValue{"synthetic or idx"};
            },
            [](const RunConfig& c) { return std::string(to_string(c.data.source)); }},
      Field{"data", "synthetic_kind",
            [](RunConfig& c, const std::string& v) {
              try {
                c.data.synthetic_kind = data::synthetic_kind_from_string(v);
              } catch (const std::invalid_argument&) {
                throw BadValue{"one of two_moons_raster, gaussian_grid_raster, bar_patterns"};
              }
            },
            [](const RunConfig& c) { return std::string(data::to_string(c.data.synthetic_kind)); }},
      CEBM_SIZE("data", "n_per_class", data.n_per_class),
      CEBM_SIZE("data", "test_n_per_class", data.test_n_per_class),
      CEBM_SIZE("data", "image_size", data.image_size),
      CEBM_SIZE("data", "num_classes", data.num_classes),
      CEBM_DOUBLE("data", "pixel_noise", data.pixel_noise),
      CEBM_DOUBLE("data", "jitter", data.jitter),
      CEBM_STRING("data", "train_images", data.train_images),
      CEBM_STRING("data", "train_labels", data.train_labels),
      CEBM_STRING("data", "test_images", data.test_images),
      CEBM_STRING("data", "test_labels", data.test_labels),
      Field{"data", "ood_sources",
            [](RunConfig& c, const std::string& v) {
              auto items = split_list(v);
              if (items.size() == 1 && items[0] == "none") items.clear();
              for (const auto& s : items)
                if (s != "constant" && s != "heldout") throw BadValue{"constant, heldout or none"};
              c.data.ood_sources = items;
            },
            [](const RunConfig& c) { return c.data.ood_sources.empty() ? std::string("none") : join(c.data.ood_sources); }},
      Field{"data", "ood_classes",
            [](RunConfig& c, const std::string& v) {
              c.data.ood_classes.clear();
              for (const auto& s : split_list(v)) c.data.ood_classes.push_back(static_cast<int>(to_size(s)));
            },
            [](const RunConfig& c) {
              std::vector<std::string> items;
              for (int v : c.data.ood_classes) items.push_back(std::to_string(v));
              return join(items);
            }},
      CEBM_SIZE("data", "ood_count", data.ood_count),

      Field{"eval", "metrics",
            [](RunConfig& c, const std::string& v) {
              auto items = split_list(v);
              for (const auto& s : items)
                if (s != "knn" && s != "ood" && s != "fewlabel" && s != "collapse")
                  throw BadValue{"a list drawn from knn, ood, fewlabel, collapse"};
              c.eval.metrics = items;
            },
            [](const RunConfig& c) { return join(c.eval.metrics); }},
      CEBM_SIZE("eval", "k", eval.k),
      Field{"eval", "per_class",
            [](RunConfig& c, const std::string& v) {
              auto items = split_list(v);
              for (const auto& s : items)
                if (s != "full" && to_size(s) == 0) throw BadValue{"positive integers or full"};
              c.eval.per_class = items;
            },
            [](const RunConfig& c) { return join(c.eval.per_class); }},
      CEBM_SIZE("eval", "repeats", eval.repeats),
      CEBM_SIZE("eval", "mc_batch", eval.mc_batch),
      Field{"eval", "ood_scores",
            [](RunConfig& c, const std::string& v) {
              auto items = split_list(v);
              for (const auto& s : items)
                if (s != "log_density" && s != "grad_norm") throw BadValue{"log_density and/or grad_norm"};
              c.eval.ood_scores = items;
            },
            [](const RunConfig& c) { return join(c.eval.ood_scores); }},
  };
  return table;
}

#undef CEBM_SIZE
#undef CEBM_DOUBLE
#undef CEBM_BOOL
#undef CEBM_STRING

}  // namespace

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

model::EncoderConfig RunConfig::encoder_config() const {
  const std::size_t s = data.image_size;
  if (model.encoder == EncoderTemplate::mlp) {
    return model::EncoderConfig::mlp(1, s, s, model.hidden, model.depth, model.latent_dim);
  }
  return model::EncoderConfig::conv_small(1, s, s, model.conv_channels, model.hidden, model.latent_dim);
}

expfam::GaussianNaturalParams RunConfig::bias_params() const {
  const std::vector<double> l1(model.latent_dim, model.bias_mean / model.bias_variance);
  const std::vector<double> l2(model.latent_dim, -0.5 / model.bias_variance);
  return expfam::GaussianNaturalParams(l1, l2);
}

void RunConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& why) { throw ConfigError(key + ": " + why); };
  if (model.latent_dim == 0) fail("model.latent_dim", "must be positive");
  if (model.kind == model::ModelKind::gmm_cebm && model.components < 2) fail("model.components", "must be at least 2");
  if (model.hidden == 0) fail("model.hidden", "must be positive");
  if (model.encoder == EncoderTemplate::conv_small && model.conv_channels == 0)
    fail("model.conv_channels", "must be positive");
  if (!(model.stat_head_scale >= 0.0)) fail("model.stat_head_scale", "must be non-negative");
  if (!(model.bias_variance > 0.0)) fail("model.bias_variance", "must be positive");
  if (!(train.learning_rate >= 0.0)) fail("train.learning_rate", "must be non-negative");
  if (train.batch_size < 2) fail("train.batch_size", "must be at least 2");
  if (!(train.l2_energy_coef >= 0.0)) fail("train.l2_energy_coef", "must be non-negative");
  if (!(train.data_noise_variance >= 0.0)) fail("train.data_noise_variance", "must be non-negative");
  if (train.buffer_capacity == 0) fail("train.buffer_capacity", "must be positive");
  if (!(train.reinit_prob >= 0.0 && train.reinit_prob <= 1.0)) fail("train.reinit_prob", "must lie in [0, 1]");
  if (!(train.sgld.step_size > 0.0)) fail("sgld.step_size", "must be positive");
  if (!(train.sgld.noise_variance >= 0.0)) fail("sgld.noise_variance", "must be non-negative");
  if (data.image_size < 4) fail("data.image_size", "must be at least 4");
  if (data.n_per_class == 0) fail("data.n_per_class", "must be positive");
  if (data.test_n_per_class == 0) fail("data.test_n_per_class", "must be positive");
  if (data.num_classes < 2) fail("data.num_classes", "must be at least 2");
  if (data.source == DataSource::synthetic && data.synthetic_kind == data::SyntheticKind::bar_patterns &&
      data.num_classes > data::kMaxBarClasses)
    fail("data.num_classes", "bar_patterns supports at most 8 classes");
  if (data.source == DataSource::idx && (data.train_images.empty() || data.train_labels.empty()))
    fail("data.train_images", "idx source needs train_images and train_labels");
  for (int c : data.ood_classes) {
    if (data.source == DataSource::synthetic && c >= 0 && static_cast<std::size_t>(c) < data.num_classes)
      fail("data.ood_classes", "class " + std::to_string(c) + " is part of the training classes");
  }
  if (eval.k == 0) fail("eval.k", "must be positive");
  if (eval.repeats == 0) fail("eval.repeats", "must be positive");
  if (eval.mc_batch == 0) fail("eval.mc_batch", "must be positive");
}

RunConfig parse_config(const std::string& text, const std::string& origin) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& err) {
    throw ConfigError(origin + ":" + std::to_string(err.line()) + ": " + err.message());
  }
  RunConfig cfg;
  const auto& table = fields();
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw ConfigError(origin + ": key '" + section + "' must appear inside a section");
    }
    for (const auto& [key, value] : body) {
      const std::string full = section + "." + key;
      const Field* field = nullptr;
      for (const auto& f : table) {
        if (section == f.section && key == f.key) field = &f;
      }
      if (!field) throw ConfigError(origin + ": unknown key '" + full + "'");
      const std::string v = trim(value.data());
      try {
        field->set(cfg, v);
      } catch (const BadValue& bad) {
        throw ConfigError(origin + ": key '" + full + "': invalid value '" + v + "', expected " + bad.expected);
      }
    }
  }
  try {
    cfg.validate();
  } catch (const ConfigError& err) {
    throw ConfigError(origin + ": " + err.what());
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), path.string());
}

std::string echo_config(const RunConfig& cfg) {
  std::string out;
  std::string current;
  for (const auto& f : fields()) {
    if (current != f.section) {
      if (!current.empty()) out += '\n';
      current = f.section;
      out += "[" + current + "]\n";
    }
    out += std::string(f.key) + " = " + f.get(cfg) + "\n";
  }
  return out;
}

std::filesystem::path resolve_output_dir(const RunConfig& cfg) {
  std::filesystem::path dir(cfg.output_dir);
  if (const char* root = std::getenv(kOutputRootEnv); root && *root && dir.is_relative()) {
    return std::filesystem::path(root) / dir;
  }
  return dir;
}

}  // namespace cebm::config
