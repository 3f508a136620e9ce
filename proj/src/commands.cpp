#include "cebm/commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "cebm/checkpoint.hpp"
#include "cebm/errors.hpp"
#include "cebm/eval.hpp"
#include "cebm/image_io.hpp"
#include "cebm/sampler.hpp"
#include "cebm/trainer.hpp"

namespace cebm::cli {

namespace fs = std::filesystem;
using nlohmann::json;

RunStreams::RunStreams(std::uint64_t seed) {
  Rng root(seed);
  train_data = root.split();
  test_data = root.split();
  ood_data = root.split();
  model_init = root.split();
  train_seed = root.next_u64();
  probe_seed = root.next_u64();
  collapse = root.split();
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw FormatError(FormatErrorKind::io_failure, "cannot write '" + path.string() + "'");
}

std::string checkpoint_name(std::size_t step) {
  std::string digits = std::to_string(step);
  if (digits.size() < 6) digits.insert(0, 6 - digits.size(), '0');
  return "step_" + digits + ".cebm";
}

std::vector<int> other_classes(std::size_t num_classes, const std::vector<int>& drop) {
  std::vector<int> keep;
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (std::find(drop.begin(), drop.end(), static_cast<int>(c)) == drop.end()) keep.push_back(static_cast<int>(c));
  }
  return keep;
}

bool wants(const std::vector<std::string>& items, const std::string& name) {
  return std::find(items.begin(), items.end(), name) != items.end();
}

}  // namespace

RunData build_datasets(const config::RunConfig& cfg, RunStreams& streams) {
  const auto& d = cfg.data;
  std::vector<NamedDataset> ood;
  if (d.source == config::DataSource::synthetic) {
    data::SyntheticSpec spec;
    spec.n_per_class = d.n_per_class;
    spec.image_size = d.image_size;
    spec.num_classes = d.num_classes;
    spec.pixel_noise = d.pixel_noise;
    spec.jitter = d.jitter;
    data::Dataset train = data::gen_synthetic(d.synthetic_kind, spec, streams.train_data, "train");
    spec.n_per_class = d.test_n_per_class;
    data::Dataset test = data::gen_synthetic(d.synthetic_kind, spec, streams.test_data, "test");
    RunData out{std::move(train), std::move(test), {}};
    for (const auto& source : d.ood_sources) {
      if (source == "constant") {
        out.ood.push_back({"constant", data::constant_images(d.ood_count, out.train.image_shape())});
      } else if (source == "heldout") {
        if (d.ood_classes.empty()) throw std::invalid_argument("heldout OOD set requested but data.ood_classes is empty");
        data::SyntheticSpec held = spec;
        held.classes = d.ood_classes;
        held.num_classes = static_cast<std::size_t>(*std::max_element(d.ood_classes.begin(), d.ood_classes.end()) + 1);
        held.n_per_class = std::max<std::size_t>(1, d.ood_count / d.ood_classes.size());
        out.ood.push_back({"heldout", data::gen_synthetic(d.synthetic_kind, held, streams.ood_data, "ood")});
      }
    }
    return out;
  }

  const std::optional<std::size_t> size = d.image_size;
  data::Dataset train_all = data::load_idx(d.train_images, d.train_labels, size);
  data::Dataset test_all = d.test_images.empty() ? train_all : data::load_idx(d.test_images, d.test_labels, size);
  const auto keep = other_classes(std::max(train_all.num_classes(), test_all.num_classes()), d.ood_classes);
  RunData out{train_all.filter_labels(keep, "train"), test_all.filter_labels(keep, "test"), {}};
  for (const auto& source : d.ood_sources) {
    if (source == "constant") {
      out.ood.push_back({"constant", data::constant_images(d.ood_count, out.train.image_shape())});
    } else if (source == "heldout") {
      out.ood.push_back({"heldout", test_all.filter_labels(d.ood_classes, "ood")});
    }
  }
  return out;
}

std::unique_ptr<model::EnergyModel> build_model(const config::RunConfig& cfg, Rng& rng) {
  const model::EncoderConfig enc = cfg.encoder_config();
  if (cfg.model.kind == model::ModelKind::cebm) {
    return std::make_unique<model::CebmModel>(enc, cfg.bias_params(), cfg.model.stat_head_scale, rng);
  }
  return model::make_model(cfg.model.kind, enc, cfg.model.components, cfg.model.stat_head_scale, rng);
}

std::unique_ptr<model::EnergyModel> load_model(const fs::path& checkpoint) {
  const io::Checkpoint ckpt = io::load_checkpoint(checkpoint);
  config::RunConfig cfg;
  try {
    cfg = config::parse_config(ckpt.config_echo, checkpoint.string() + " (embedded config)");
  } catch (const ConfigError& e) {
    throw FormatError(FormatErrorKind::invalid_value, e.what());
  }
  Rng rng(0);
  auto m = build_model(cfg, rng);
  io::restore_parameters(*m, ckpt);
  return m;
}

int cmd_train(const fs::path& config_path, std::ostream& err) {
  config::RunConfig cfg;
  try {
    cfg = config::load_config(config_path);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  const std::string echo = config::echo_config(cfg);
  const fs::path out_dir = config::resolve_output_dir(cfg);

  RunStreams streams(cfg.seed);
  std::optional<RunData> run_data;
  try {
    run_data = build_datasets(cfg, streams);
  } catch (const FormatError& e) {
    err << "data error (" << to_string(e.kind()) << "): " << e.what() << '\n';
    return kExitData;
  } catch (const std::invalid_argument& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  }

  try {
    auto m = build_model(cfg, streams.model_init);
    write_text(out_dir / "config_echo.ini", echo);
    fs::create_directories(out_dir / "checkpoints");

    train::TrainConfig tc = cfg.train;
    tc.seed = streams.train_seed;
    train::TrainCallbacks callbacks;
    callbacks.on_checkpoint = [&](std::size_t step, const model::EnergyModel& model, const Rng& rng) {
      io::save_checkpoint(out_dir / "checkpoints" / checkpoint_name(step),
                          io::make_checkpoint(model, step, rng.state(), echo));
    };

    auto write_diagnostics = [&](const train::TrainDiagnostics& rows) {
      std::string csv = train::diagnostics_csv_header() + "\n";
      for (const auto& r : rows) csv += train::diagnostics_csv_row(r) + "\n";
      write_text(out_dir / "diagnostics.csv", csv);
    };

    try {
      const train::TrainResult result = train::train(*m, run_data->train, tc, callbacks);
      write_diagnostics(result.diagnostics);
      io::save_checkpoint(out_dir / "final.cebm", io::make_checkpoint(*m, tc.total_steps, result.rng.state(), echo));
    } catch (const train::TrainingDiverged& e) {
      write_diagnostics(e.diagnostics());
      err << "divergence: " << e.what() << '\n';
      return kExitDivergence;
    }
  } catch (const FormatError& e) {
    err << "output error: " << e.what() << '\n';
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    err << "output error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitOk;
}

int cmd_sample(const SampleOptions& opts, std::ostream& err) {
  if (opts.count == 0) {
    err << "config error: --count must be positive\n";
    return kExitConfig;
  }
  try {
    const io::Checkpoint ckpt = io::load_checkpoint(opts.checkpoint);
    const config::RunConfig cfg = config::parse_config(ckpt.config_echo, opts.checkpoint.string());
    Rng init_rng(0);
    auto m = build_model(cfg, init_rng);
    io::restore_parameters(*m, ckpt);

    sampler::SgldConfig sgld = cfg.train.sgld;
    sgld.steps = opts.steps;
    Rng rng(opts.seed);
    Shape shape = m->config().input_shape();
    shape.insert(shape.begin(), opts.count);
    const Tensor x0 = sampler::uniform_noise(shape, rng);
    const Tensor samples = sampler::sgld_run(sampler::model_energy(*m), x0, sgld, rng);
    const auto cols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(opts.count))));
    if (opts.out.has_parent_path()) fs::create_directories(opts.out.parent_path());
    io::export_samples(opts.out, samples, cols,
                       "step=" + std::to_string(ckpt.step) + " seed=" + std::to_string(opts.seed) +
                           " sgld_steps=" + std::to_string(opts.steps));
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const FormatError& e) {
    err << "data error (" << to_string(e.kind()) << "): " << e.what() << '\n';
    return kExitData;
  } catch (const DivergenceError& e) {
    err << "divergence: " << e.what() << '\n';
    return kExitDivergence;
  }
  return kExitOk;
}

int cmd_eval(const fs::path& checkpoint, const fs::path& config_path, const std::vector<std::string>& metrics,
             std::ostream& err) {
  config::RunConfig cfg;
  try {
    cfg = config::load_config(config_path);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  const std::vector<std::string> which = metrics.empty() ? cfg.eval.metrics : metrics;
  for (const auto& w : which) {
    if (w != "knn" && w != "ood" && w != "fewlabel" && w != "collapse") {
      err << "config error: unknown metric '" << w << "'\n";
      return kExitConfig;
    }
  }

  RunStreams streams(cfg.seed);
  std::unique_ptr<model::EnergyModel> m;
  std::optional<RunData> run_data;
  try {
    m = load_model(checkpoint);
    run_data = build_datasets(cfg, streams);
  } catch (const FormatError& e) {
    err << "data error (" << to_string(e.kind()) << "): " << e.what() << '\n';
    return kExitData;
  } catch (const std::invalid_argument& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  }
  if (run_data->train.image_shape() != m->config().input_shape()) {
    err << "data error: dataset images " << shape_string(run_data->train.image_shape())
        << " do not match the model input " << shape_string(m->config().input_shape()) << '\n';
    return kExitData;
  }

  const fs::path out_dir = config::resolve_output_dir(cfg) / "eval";
  const std::string echo = config::echo_config(cfg);
  auto document = [&](const std::string& name) {
    json doc;
    doc["metric"] = name;
    doc["checkpoint_kind"] = model::to_string(m->kind());
    doc["seed"] = cfg.seed;
    doc["config"] = echo;
    return doc;
  };

  std::vector<std::string> failures;
  auto run_metric = [&](const std::string& name, auto&& body) {
    if (!wants(which, name)) return;
    try {
      body();
    } catch (const std::exception& e) {
      failures.push_back(name + ": " + e.what());
    }
  };

  std::optional<eval::EncodedSet> train_codes, test_codes;
  auto codes = [&]() {
    if (!train_codes) {
      train_codes = eval::encode_dataset(*m, run_data->train);
      test_codes = eval::encode_dataset(*m, run_data->test);
    }
  };

  try {
    run_metric("knn", [&] {
      codes();
      const eval::KnnReport rep = eval::knn_report(*test_codes, cfg.eval.k);
      const eval::KnnReport pix = eval::knn_report(eval::pixel_codes(run_data->test), cfg.eval.k);
      json doc = document("knn");
      doc["split"] = run_data->test.split();
      doc["k"] = rep.k;
      doc["same_class_fraction"] = rep.same_class_fraction;
      doc["pixel_same_class_fraction"] = pix.same_class_fraction;
      doc["degenerate"] = rep.degenerate;
      doc["confusion"] = rep.confusion;
      write_text(out_dir / "knn.json", doc.dump(2) + "\n");
      write_text(out_dir / "knn_confusion.csv", eval::confusion_csv(rep));
    });

    run_metric("ood", [&] {
      if (run_data->ood.empty()) {
        throw std::invalid_argument("no out-of-distribution source configured (set data.ood_sources)");
      }
      json doc = document("ood");
      doc["in_distribution"] = run_data->test.name() + "/" + run_data->test.split();
      json results = json::array();
      for (const auto& kind_name : cfg.eval.ood_scores) {
        const auto kind = eval::ood_score_kind_from_string(kind_name);
        const auto in_scores = eval::ood_score_values(sampler::model_energy(*m), run_data->test.images(), kind);
        for (const auto& [name, ds] : run_data->ood) {
          const auto scores = eval::ood_scores(*m, run_data->test, ds, kind);
          results.push_back({{"ood_set", name},
                             {"score", kind_name},
                             {"auroc", eval::auroc(in_scores, scores.out_scores)},
                             {"in_count", in_scores.size()},
                             {"out_count", scores.out_scores.size()}});
        }
      }
      doc["results"] = results;
      write_text(out_dir / "ood.json", doc.dump(2) + "\n");
    });

    run_metric("fewlabel", [&] {
      codes();
      json doc = document("fewlabel");
      json results = json::array();
      for (const auto& pc : cfg.eval.per_class) {
        std::optional<std::size_t> per_class;
        if (pc != "full") per_class = static_cast<std::size_t>(std::stoull(pc));
        const eval::ProbeReport rep =
            eval::few_label_probe(*train_codes, *test_codes, per_class, cfg.eval.repeats, streams.probe_seed);
        results.push_back({{"per_class", pc}, {"mean", rep.mean}, {"std", rep.std}, {"accuracies", rep.accuracies}});
      }
      doc["repeats"] = cfg.eval.repeats;
      doc["results"] = results;
      write_text(out_dir / "fewlabel.json", doc.dump(2) + "\n");
    });

    run_metric("collapse", [&] {
      const auto* cm = dynamic_cast<const model::ConjugateModel*>(m.get());
      if (!cm) throw std::invalid_argument("collapse metrics need a conjugate model, got " +
                                           std::string(model::to_string(m->kind())));
      Rng rng = streams.collapse;
      const eval::CollapseReport rep = eval::collapse_metrics(*cm, run_data->train, cfg.eval.mc_batch, rng);
      json doc = document("collapse");
      doc["kl_aggregate_to_bias"] = rep.kl;
      doc["mutual_information"] = rep.mi;
      doc["kl_std"] = rep.kl_std;
      doc["mi_std"] = rep.mi_std;
      doc["kl_batches"] = rep.kl_batches;
      doc["mi_batches"] = rep.mi_batches;
      doc["mc_batch"] = rep.batch_size;
      write_text(out_dir / "collapse.json", doc.dump(2) + "\n");
    });
  } catch (const std::exception& e) {
    failures.push_back(std::string("output: ") + e.what());
  }

  if (!failures.empty()) {
    err << failures.size() << " metric(s) failed:\n";
    for (const auto& f : failures) err << "  " << f << '\n';
    return kExitMetric;
  }
  return kExitOk;
}

}  // namespace cebm::cli
