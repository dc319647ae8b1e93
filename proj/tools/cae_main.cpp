// cae: command-line entry point for data synthesis, training, audits,
// explanations and the HTTP service.

#include <chrono>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "cae/core/dataset_io.hpp"
#include "cae/explain/classifiers.hpp"
#include "cae/explain/explain.hpp"
#include "cae/manifold/manifold.hpp"
#include "cae/nets/bundle.hpp"
#include "cae/service/config.hpp"
#include "cae/service/service.hpp"
#include "cae/synth/synth_data.hpp"
#include "cae/train/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> sets;
};

// Config file, then --set key=value, then the subcommand's own flags.
cae::service::AppConfig load_config(const Common& common,
                                    const std::map<std::string, std::string>& overrides) {
  cae::service::AppConfig cfg;
  if (!common.config_path.empty()) cfg = cae::service::load_app_config(common.config_path);
  for (const auto& kv : common.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw cae::Error("--set expects key=value, got '" + kv + "'");
    cae::service::set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  for (const auto& [k, v] : overrides) cae::service::set_config_value(cfg, k, v);
  cfg.validate();
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw cae::Error("cannot write " + path.string());
  os << text;
  if (!os) throw cae::Error("write failed for " + path.string());
}

void emit_json(const json& j, const std::string& out) {
  if (out.empty() || out == "-") {
    std::cout << j.dump(2) << "\n";
  } else {
    write_text(out, j.dump(2) + "\n");
    std::cerr << "wrote " << out << "\n";
  }
}

std::string data_dir(const cae::service::AppConfig& cfg, const std::string& flag) {
  const auto& d = flag.empty() ? cfg.data_root : flag;
  if (d.empty()) throw cae::Error("no dataset directory (use --data or data_root)");
  return d;
}

std::unique_ptr<cae::explain::BlackBoxClassifier> classifier_for(
    const cae::service::AppConfig& cfg, const cae::nets::ModelBundle& bundle) {
  auto c = cae::explain::make_classifier(cfg.classifier, &bundle, bundle.config.class_count);
  if (c->class_count() != bundle.config.class_count) {
    throw cae::Error("classifier has " + std::to_string(c->class_count()) +
                     " classes, model has " + std::to_string(bundle.config.class_count));
  }
  return c;
}

json direction_json(const std::vector<cae::explain::SwapDirection>& dirs) {
  json out = json::array();
  for (const auto& d : dirs) {
    out.push_back({{"from", d.from}, {"to", d.to}, {"total", d.total}, {"hits", d.hits},
                   {"rate", d.rate()}});
  }
  return out;
}

json ratios_json(const std::vector<cae::manifold::ClassRatio>& rs) {
  json out = json::array();
  for (const auto& r : rs) {
    out.push_back({{"class", r.class_index}, {"total", r.total}, {"assigned", r.assigned},
                   {"ratio", r.ratio()}});
  }
  return out;
}

// ---------------------------------------------------------------- synth-data

struct SynthArgs {
  std::string out;
  std::vector<std::string> classes{"none", "blob"};
  int per_class = 2000;
  int test_per_class = 200;
  int side = 64;
  int channels = 1;
  std::uint64_t seed = 0;
  double intensity = 0.8;
  double size_fraction = 0.25;
};

int run_synth(const SynthArgs& a) {
  std::vector<cae::synth::LesionSpec> specs;
  for (const auto& name : a.classes) {
    specs.push_back({cae::synth::lesion_kind_from_string(name), a.intensity, a.size_fraction});
  }
  cae::RandomStream rng(a.seed);
  const fs::path root = a.out;
  if (fs::exists(root / "manifest.tsv")) {
    throw cae::Error(root.string() + " already holds a synthetic dataset");
  }
  cae::synth::SynthOptions opt;
  opt.side = a.side;
  opt.channels = a.channels;
  opt.split = cae::Split::kTrain;
  auto train_rng = rng.split(1);
  const auto train = cae::synth::generate_dataset(specs, a.per_class, opt, train_rng);
  cae::synth::write_synth_set(train, specs, root);
  if (a.test_per_class > 0) {
    opt.split = cae::Split::kTest;
    opt.id_prefix = "t_";
    auto test_rng = rng.split(2);
    const auto test = cae::synth::generate_dataset(specs, a.test_per_class, opt, test_rng);
    cae::synth::write_synth_set(test, specs, root);
  }
  std::cerr << "wrote " << specs.size() << " classes to " << root.string() << "\n";
  return 0;
}

// --------------------------------------------------------------------- train

struct TrainArgs {
  std::string data, out, resume, probe, probe_eval;
  std::map<std::string, std::string> overrides;
  int probe_epochs = 3;
  int probe_width = 32;
  bool quiet = false;
};

int run_probe_training(const cae::service::AppConfig& cfg, const TrainArgs& a) {
  const auto& net = cfg.train.net;
  const auto ds = cae::load_dataset(data_dir(cfg, a.data), net.side, cae::Split::kTrain);
  cae::explain::ProbeConfig pc;
  pc.side = net.side;
  pc.channels = net.channels;
  pc.class_count = ds.class_count;
  pc.width = a.probe_width;
  pc.epochs = a.probe_epochs;
  pc.seed = cfg.train.seed;
  cae::train::configure_determinism(cfg.train.deterministic);
  const auto probe = cae::explain::ProbeClassifier::train(ds, pc, [&](int epoch, double loss) {
    if (!a.quiet) std::cerr << "probe epoch " << epoch << " loss " << loss << "\n";
  });
  probe.save(a.probe);
  json j{{"probe", a.probe}, {"train_accuracy", probe.accuracy(ds)}};
  if (!a.probe_eval.empty()) {
    const auto test = cae::load_dataset(a.probe_eval, net.side, cae::Split::kTest);
    j["eval_accuracy"] = probe.accuracy(test);
  }
  emit_json(j, "");
  return 0;
}

int run_train(const Common& common, const TrainArgs& a) {
  auto cfg = load_config(common, a.overrides);
  if (!a.probe.empty()) return run_probe_training(cfg, a);
  if (a.out.empty()) throw cae::Error("train needs --out");
  const auto ds = cae::load_dataset(data_dir(cfg, a.data), cfg.train.net.side, cae::Split::kTrain);
  if (ds.class_count != cfg.train.net.class_count) {
    std::cerr << "note: dataset has " << ds.class_count << " classes; using that for class_count\n";
    cfg.train.net.class_count = ds.class_count;
  }
  const auto& tc = cfg.train;
  cae::train::TrainRunOptions opt;
  opt.out_dir = fs::path(a.out);
  if (!a.resume.empty()) opt.resume_from = fs::path(a.resume);
  if (!a.quiet) {
    opt.on_log = [](const cae::train::TrainLogRecord& r) {
      std::cerr << "it " << r.iteration << " G " << r.generator_total << " D "
                << r.discriminator_total << " (" << static_cast<int>(r.wall_seconds) << "s)\n";
    };
  }
  write_text(fs::path(a.out) / "config.txt", cae::service::app_config_to_text(cfg));
  const auto bundle = cae::train::train(ds, tc, opt);
  std::cerr << "model " << bundle.model_hash() << " at iteration " << bundle.meta.iteration
            << " -> " << (fs::path(a.out) / "model.cae").string() << "\n";
  return 0;
}

// -------------------------------------------------------------------- encode

struct ModelArgs {
  std::string model, data, out;
  std::map<std::string, std::string> overrides;
};

struct Loaded {
  cae::service::AppConfig cfg;
  cae::nets::ModelBundle bundle;
  cae::Dataset ds;
};

Loaded load_model_and_data(const Common& common, const ModelArgs& a, cae::Split split) {
  Loaded l;
  l.cfg = load_config(common, a.overrides);
  if (a.model.empty()) throw cae::Error("--model is required");
  l.bundle = cae::nets::load_bundle(a.model);
  l.ds = cae::load_dataset(data_dir(l.cfg, a.data), l.bundle.config.side, split);
  if (l.ds.class_count != l.bundle.config.class_count) {
    throw cae::Error("dataset has " + std::to_string(l.ds.class_count) + " classes, model has " +
                     std::to_string(l.bundle.config.class_count));
  }
  return l;
}

int run_encode(const Common& common, const ModelArgs& a, const std::string& projection) {
  torch::NoGradGuard ng;
  const auto l = load_model_and_data(common, a, cae::Split::kTrain);
  const auto table = cae::manifold::extract_codes(l.bundle, l.ds);
  if (a.out.empty() || a.out == "-") {
    std::cout << cae::manifold::code_table_to_text(table);
  } else {
    cae::manifold::save_code_table(table, a.out);
    std::cerr << "wrote " << table.rows.size() << " codes to " << a.out << "\n";
  }
  if (!projection.empty()) {
    cae::manifold::save_projection(
        cae::manifold::fit_pca(table, std::min(2, table.code_dim)), projection);
  }
  return 0;
}

// ------------------------------------------------------------------- analyze

int run_analyze(const std::string& codes, const std::string& out, int folds, std::uint64_t seed) {
  const auto table = cae::manifold::load_code_table(codes);
  cae::RandomStream rng(seed);
  const auto rep = cae::manifold::separability_report(table, rng, folds);
  const auto pca = cae::manifold::fit_pca(table, std::min(2, table.code_dim));
  json j;
  j["model_hash"] = table.model_hash;
  j["rows"] = table.rows.size();
  j["code_dim"] = table.code_dim;
  j["silhouette"] = rep.silhouette;
  j["probe_accuracy"] = rep.probe_accuracy;
  j["folds"] = rep.folds;
  j["pca_explained"] = pca.explained;
  json per = json::array();
  for (int k = 0; k < table.class_count; ++k) {
    const auto n = table.rows_of_class(k).size();
    json c{{"class", k}, {"count", n}};
    if (k < static_cast<int>(table.class_names.size())) c["name"] = table.class_names[k];
    if (n) c["centroid"] = cae::manifold::class_centroid(table, k).values;
    per.push_back(c);
  }
  j["classes"] = per;
  emit_json(j, out);
  return 0;
}

// --------------------------------------------------------------------- audit

struct AuditArgs {
  ModelArgs m;
  std::string donors;
  std::vector<std::string> checks{"swap", "continuity", "pervasiveness"};
  std::size_t n_new = 2000;
  std::size_t combos = 10;
  std::size_t max_codes = 0;
  std::uint64_t seed = 0;
};

int run_audit(const Common& common, const AuditArgs& a) {
  torch::NoGradGuard ng;
  const auto l = load_model_and_data(common, a.m, cae::Split::kTrain);
  const auto classifier = classifier_for(l.cfg, l.bundle);
  cae::Dataset donors = l.ds;
  if (!a.donors.empty()) {
    donors = cae::load_dataset(a.donors, l.bundle.config.side, cae::Split::kTest);
  }
  cae::RandomStream rng(a.seed);
  json j{{"model_hash", l.bundle.model_hash()}, {"classifier", l.cfg.classifier}};
  std::optional<cae::manifold::CodeTable> table;
  const auto codes = [&]() -> const cae::manifold::CodeTable& {
    if (!table) table = cae::manifold::extract_codes(l.bundle, l.ds);
    return *table;
  };
  for (const auto& check : a.checks) {
    auto r = rng.split(std::hash<std::string>{}(check));
    if (check == "swap") {
      j["swap"] = direction_json(cae::explain::swap_audit(l.bundle, donors, *classifier, r));
    } else if (check == "continuity") {
      j["continuity"] = ratios_json(
          cae::manifold::continuity_audit(l.bundle, codes(), donors, *classifier, a.n_new, r));
    } else if (check == "pervasiveness") {
      const auto rep = cae::manifold::pervasiveness_audit(l.bundle, codes(), donors, *classifier,
                                                          a.combos, r, a.max_codes);
      j["pervasiveness"] = {{"total", rep.total}, {"assigned", rep.assigned},
                            {"ratio", rep.ratio()}, {"per_class", ratios_json(rep.per_class)}};
    } else if (check == "separability") {
      const auto rep = cae::manifold::separability_report(codes(), r);
      j["separability"] = {{"silhouette", rep.silhouette},
                           {"probe_accuracy", rep.probe_accuracy}};
    } else {
      throw cae::Error("unknown audit check '" + check + "'");
    }
  }
  emit_json(j, a.m.out);
  return 0;
}

// ------------------------------------------------------------------- explain

struct ExplainArgs {
  ModelArgs m;
  std::string id;
  int destination = -1;
};

int run_explain(const Common& common, const ExplainArgs& a) {
  torch::NoGradGuard ng;
  if (a.m.out.empty()) throw cae::Error("explain needs --out (a directory)");
  const auto l = load_model_and_data(common, a.m, cae::Split::kTrain);
  const auto* source = l.ds.find(a.id);
  if (!source) throw cae::Error("no sample with id '" + a.id + "'");
  const auto classifier = classifier_for(l.cfg, l.bundle);
  const auto table = cae::manifold::extract_codes(l.bundle, l.ds);
  const int k = l.bundle.config.class_count;
  const int dst = a.destination >= 0
                      ? a.destination
                      : cae::explain::default_destination(source->label.index, k);
  if (dst >= k) throw cae::Error("destination class out of range");
  const auto ex = cae::explain::explain_sample(l.bundle, table, *classifier, *source, dst,
                                               l.cfg.n_steps,
                                               cae::explain::weighting_from_string(l.cfg.weighting));
  const fs::path out = a.m.out;
  fs::create_directories(out);
  cae::explain::write_overlay_png(source->image, ex.result.saliency, out / "overlay.png");
  cae::explain::write_float_grid(ex.result.saliency, out / "saliency.grid");
  write_text(out / "summary.json", cae::explain::saliency_summary(ex.series, ex.result) + "\n");
  for (std::size_t i = 0; i < ex.series.frames.size(); ++i) {
    cae::write_png(out / ("frame_" + std::to_string(i) + ".png"), ex.series.frames[i]);
  }
  std::cerr << "wrote explanation of " << a.id << " to " << out.string() << "\n";
  return 0;
}

// --------------------------------------------------------------------- bench

int run_bench(const Common& common, const ModelArgs& m, std::size_t count, std::uint64_t seed) {
  torch::NoGradGuard ng;
  const auto l = load_model_and_data(common, m, cae::Split::kTrain);
  const auto classifier = classifier_for(l.cfg, l.bundle);
  const auto table = cae::manifold::extract_codes(l.bundle, l.ds);
  cae::RandomStream rng(seed);
  std::vector<std::size_t> idx(l.ds.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  rng.shuffle(idx);
  std::vector<cae::LabeledSample> samples;
  for (std::size_t i = 0; i < std::min(count, idx.size()); ++i) samples.push_back(l.ds.samples[idx[i]]);
  const auto rep = cae::explain::cost_benchmark(l.bundle, table, *classifier, samples, l.cfg.n_steps);
  emit_json({{"cases", samples.size()},
             {"cae_median_seconds", rep.cae_median},
             {"occlusion_median_seconds", rep.occlusion_median},
             {"ratio", rep.ratio()},
             {"cae_seconds", rep.cae_seconds},
             {"occlusion_seconds", rep.occlusion_seconds}},
            m.out);
  return 0;
}

// --------------------------------------------------------------------- serve

int run_serve(const Common& common, const ModelArgs& m, const std::string& host) {
  auto l = load_model_and_data(common, m, cae::Split::kTrain);
  std::shared_ptr<const cae::explain::BlackBoxClassifier> classifier =
      classifier_for(l.cfg, l.bundle);
  auto state = cae::service::SessionState::create(std::move(l.bundle), std::move(l.ds),
                                                  classifier, l.cfg.n_steps);
  auto service = std::make_shared<const cae::service::Service>(state);
  cae::service::HttpServer server(service);
  std::cerr << "serving model " << state->model_hash << " on " << host << ":" << l.cfg.port
            << "\n";
  server.serve_forever(host, l.cfg.port);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Class-style autoencoder: training, audits and counterfactual explanations"};
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  app.add_option("--config", common.config_path, "key = value config file")
      ->check(CLI::ExistingFile);
  app.add_option("--set", common.sets, "override one config key (key=value), repeatable");

  // Flags that map onto config keys.
  const auto keyed = [](CLI::App* sub, std::map<std::string, std::string>& o, const char* flag,
                        const char* key, const char* help) {
    sub->add_option_function<std::string>(flag, [&o, key](const std::string& v) { o[key] = v; },
                                           help);
  };

  SynthArgs synth;
  auto* s_synth = app.add_subcommand("synth-data", "generate a synthetic lesion dataset");
  s_synth->add_option("--out", synth.out, "output root")->required();
  s_synth->add_option("--classes", synth.classes, "lesion kind per class (none, blob, ridge, double_blob)")
      ->delimiter(',');
  s_synth->add_option("--per-class", synth.per_class, "training samples per class")->check(CLI::PositiveNumber);
  s_synth->add_option("--test-per-class", synth.test_per_class, "test samples per class")->check(CLI::NonNegativeNumber);
  s_synth->add_option("--side", synth.side, "image side")->check(CLI::PositiveNumber);
  s_synth->add_option("--channels", synth.channels, "1 or 3")->check(CLI::IsMember({1, 3}));
  s_synth->add_option("--seed", synth.seed);
  s_synth->add_option("--intensity", synth.intensity, "peak lesion intensity")->check(CLI::Range(0.0, 1.0));
  s_synth->add_option("--size-fraction", synth.size_fraction, "lesion radius as a fraction of side/2");

  TrainArgs tr;
  auto* s_train = app.add_subcommand("train", "train a model, or the probe classifier with --probe");
  s_train->add_option("--data", tr.data, "directory of <class>/<image>.png");
  s_train->add_option("--out", tr.out, "run directory (checkpoints, log, model.cae)");
  s_train->add_option("--resume", tr.resume, "checkpoint directory to continue from")
      ->check(CLI::ExistingDirectory);
  keyed(s_train, tr.overrides, "--iterations", "iterations", "training iterations");
  keyed(s_train, tr.overrides, "--seed", "seed", "random seed");
  keyed(s_train, tr.overrides, "--lr", "learning_rate", "learning rate");
  keyed(s_train, tr.overrides, "--batch-pairs", "batch_pairs", "pairs per batch");
  keyed(s_train, tr.overrides, "--checkpoint-every", "checkpoint_every", "checkpoint cadence");
  keyed(s_train, tr.overrides, "--width", "width", "base channel width");
  keyed(s_train, tr.overrides, "--code-dim", "code_dim", "class-style code length");
  s_train->add_option("--probe", tr.probe, "train the probe classifier and save it here");
  s_train->add_option("--probe-eval", tr.probe_eval, "held-out directory for probe accuracy");
  s_train->add_option("--probe-epochs", tr.probe_epochs)->check(CLI::PositiveNumber);
  s_train->add_option("--probe-width", tr.probe_width)->check(CLI::PositiveNumber);
  s_train->add_flag("--quiet", tr.quiet, "no progress output");

  const auto model_opts = [&](CLI::App* sub, ModelArgs& m, const char* out_help) {
    sub->add_option("--model", m.model, "model bundle (model.cae or ckpt_*/model.cae)")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--data", m.data, "directory of <class>/<image>.png");
    if (out_help) sub->add_option("--out", m.out, out_help);
    keyed(sub, m.overrides, "--classifier", "classifier",
          "disc | probe:<file> | command:<cmd> | http://host:port/path");
    keyed(sub, m.overrides, "--n-steps", "n_steps", "path steps");
    keyed(sub, m.overrides, "--weighting", "weighting", "prob_delta | endpoint_contrast");
  };

  ModelArgs enc;
  std::string projection;
  auto* s_encode = app.add_subcommand("encode", "write the class-style code table of a dataset");
  model_opts(s_encode, enc, "code table path (default: stdout)");
  s_encode->add_option("--projection", projection, "also fit and save a 2-D PCA projection");

  std::string codes, analyze_out;
  int folds = 5;
  std::uint64_t analyze_seed = 0;
  auto* s_analyze = app.add_subcommand("analyze", "separability and PCA of a code table");
  s_analyze->add_option("--codes", codes, "code table")->required()->check(CLI::ExistingFile);
  s_analyze->add_option("--out", analyze_out, "report path (default: stdout)");
  s_analyze->add_option("--folds", folds)->check(CLI::Range(2, 100));
  s_analyze->add_option("--seed", analyze_seed);

  AuditArgs audit;
  auto* s_audit = app.add_subcommand("audit", "swap, continuity and pervasiveness audits");
  model_opts(s_audit, audit.m, "report path (default: stdout)");
  s_audit->add_option("--donors", audit.donors, "held-out donor directory (default: --data)");
  s_audit->add_option("--checks", audit.checks, "swap,continuity,pervasiveness,separability")
      ->delimiter(',');
  s_audit->add_option("--n-new", audit.n_new, "SMOTE codes per class");
  s_audit->add_option("--combos", audit.combos, "donors per code");
  s_audit->add_option("--max-codes", audit.max_codes, "cap on codes for pervasiveness (0 = all)");
  s_audit->add_option("--seed", audit.seed);

  ExplainArgs ex;
  auto* s_explain = app.add_subcommand("explain", "counterfactual series and saliency for one sample");
  model_opts(s_explain, ex.m, "output directory");
  s_explain->add_option("--id", ex.id, "sample id")->required();
  s_explain->add_option("--destination", ex.destination, "destination class index");

  ModelArgs bench;
  std::size_t bench_count = 20;
  std::uint64_t bench_seed = 0;
  auto* s_bench = app.add_subcommand("bench", "CAE explanation cost against occlusion");
  model_opts(s_bench, bench, "report path (default: stdout)");
  s_bench->add_option("--count", bench_count, "cases")->check(CLI::PositiveNumber);
  s_bench->add_option("--seed", bench_seed);

  ModelArgs serve;
  std::string host = "127.0.0.1";
  auto* s_serve = app.add_subcommand("serve", "HTTP service under /v1");
  model_opts(s_serve, serve, nullptr);
  keyed(s_serve, serve.overrides, "--port", "port", "listen port");
  s_serve->add_option("--host", host, "listen address");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*s_synth) return run_synth(synth);
    if (*s_train) return run_train(common, tr);
    if (*s_encode) return run_encode(common, enc, projection);
    if (*s_analyze) return run_analyze(codes, analyze_out, folds, analyze_seed);
    if (*s_audit) return run_audit(common, audit);
    if (*s_explain) return run_explain(common, ex);
    if (*s_bench) return run_bench(common, bench, bench_count, bench_seed);
    if (*s_serve) return run_serve(common, serve, host);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
