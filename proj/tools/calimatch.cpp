// calimatch: prepare | train | evaluate | theory-check | schema
//
// Exit status: 0 success, 2 usage, 3 config/schema, 4 I/O, 5 numeric.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "calimatch/checkpoint.hpp"
#include "calimatch/config.hpp"
#include "calimatch/data.hpp"
#include "calimatch/error.hpp"
#include "calimatch/io.hpp"
#include "calimatch/manifest.hpp"
#include "calimatch/metrics.hpp"
#include "calimatch/theory.hpp"
#include "calimatch/trainer.hpp"
#include "calimatch/version.hpp"

namespace fs = std::filesystem;
using namespace calimatch;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitConfig = 3;
constexpr int kExitIo = 4;
constexpr int kExitNumeric = 5;
constexpr const char* kOutRootEnv = "CALIMATCH_OUT_ROOT";

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// --out if given, else $CALIMATCH_OUT_ROOT/<fallback>.
fs::path output_dir(const std::string& out, const std::string& fallback) {
  if (!out.empty()) return out;
  if (const char* root = std::getenv(kOutRootEnv); root && *root) return fs::path(root) / fallback;
  throw UsageError("--out is required (or set " + std::string(kOutRootEnv) + ")");
}

// Flag values are JSON literals when they parse as such, strings otherwise.
nlohmann::json flag_value(const std::string& text) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception&) {
    return text;
  }
}

struct TrainArgs {
  std::string config;
  std::string preset;
  std::string data;
  std::string out;
  bool serial = false;
  bool quiet = false;
  std::map<std::string, std::string> overrides;
};

TrainConfig resolve_config(const TrainArgs& a) {
  nlohmann::json doc = nlohmann::json::object();
  if (!a.config.empty()) {
    try {
      doc = nlohmann::json::parse(read_text_file(a.config));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config " + a.config + " is not valid JSON: " + e.what());
    }
    if (!doc.is_object()) throw ConfigError("config " + a.config + " must be a JSON object");
  }
  TrainConfig base = config_from_json(doc);
  if (!a.preset.empty()) apply_preset(base, a.preset);
  nlohmann::json merged = to_json(base);
  for (const auto& [key, value] : a.overrides)
    if (!value.empty()) merged[key] = flag_value(value);
  TrainConfig config = config_from_json(merged);
  validate(config);
  return config;
}

MismatchDataset dataset_for(const std::string& manifest, std::uint64_t seed) {
  if (!manifest.empty()) return load_dataset(manifest);
  SyntheticSpec spec;
  spec.seed = seed;
  return make_synthetic(spec);
}

int cmd_train(const TrainArgs& a) {
  const TrainConfig config = resolve_config(a);
  const fs::path out = output_dir(a.out, "train-" + config_hash(config));
  RunManifest manifest = start_manifest("train", config);
  const MismatchDataset data = dataset_for(a.data, config.seed);

  TrainOptions opts;
  opts.out_dir = out;
  opts.exec = a.serial ? Exec::serial : Exec::parallel;
  opts.verbose = !a.quiet;
  const TrainResult result = train(data, config, opts);

  write_text_file(out / "config.json", to_json(config).dump(2) + "\n");
  manifest.artifacts = {{"config", "config.json"},
                        {"log", "log.csv"},
                        {"epochs", "epochs.csv"},
                        {"tables", "tables.csv"},
                        {"checkpoint_best", "checkpoint-best"},
                        {"checkpoint_last", "checkpoint-last"}};
  if (!a.data.empty()) manifest.artifacts["data"] = fs::absolute(a.data).string();
  finish_manifest(manifest, out);
  std::cout << (out / "checkpoint-best").string() << "\n";
  if (!a.quiet)
    std::cerr << "best epoch " << result.best_epoch << " val_acc " << result.best_val_accuracy
              << "\n";
  return 0;
}

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string out;
  bool serial = false;
};

int cmd_evaluate(const EvalArgs& a) {
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const fs::path out = output_dir(a.out, "eval-" + ckpt.config_hash);
  RunManifest manifest = start_manifest("evaluate", ckpt.config);
  const MismatchDataset data = load_dataset(a.data);
  EvalConfig ec;
  ec.ece_bins = ckpt.config.ece_bins;
  ec.calibrated = ckpt.config.calibrates_classifier();
  const MetricsReport report = evaluate(ckpt.params, data, ec, a.serial ? Exec::serial : Exec::parallel);
  write_report(report, out);
  manifest.artifacts = {{"report", "report.json"},
                        {"reliability_multiclass", "reliability_multiclass.csv"},
                        {"reliability_ood", "reliability_ood.csv"},
                        {"sweep", "sweep.csv"},
                        {"checkpoint", fs::absolute(a.checkpoint).string()},
                        {"data", fs::absolute(a.data).string()}};
  finish_manifest(manifest, out);
  std::cout << (out / "report.json").string() << "\n";
  return 0;
}

struct TheoryArgs {
  std::string checkpoint;
  std::string data;
  std::string out;
  int seeds = 100;
  int batch = 512;
  int lemma_n = 10000;
};

int cmd_theory(const TheoryArgs& a) {
  if (a.seeds < 1) throw UsageError("--seeds must be positive");
  if (a.batch < 1) throw UsageError("--batch must be positive");
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const fs::path out = a.out.empty() ? output_dir("", "theory-" + ckpt.config_hash) / "report.json"
                                     : fs::path(a.out);
  const MismatchDataset data = load_dataset(a.data);
  const SelectionGate gate{ckpt.config.tau1, ckpt.config.tau2, !ckpt.config.disable_ood_head};
  const AugmentationPair aug{ckpt.config.sigma_weak, ckpt.config.sigma_strong, ckpt.config.dropout};

  nlohmann::json alignment = nlohmann::json::array();
  std::size_t holds = 0;
  double worst_gap = 0.0;
  for (int seed = 0; seed < a.seeds; ++seed) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(seed));
    std::vector<std::size_t> rows(std::min<std::size_t>(a.batch, data.unlabeled.size()));
    std::uniform_int_distribution<std::size_t> pick(0, data.unlabeled.size() - 1);
    for (auto& r : rows) r = pick(rng);
    const Matrix x = data.unlabeled.x.gather_rows(rows);
    HiddenTruth truth;
    for (auto r : rows) {
      truth.labels.push_back(data.unlabeled_truth.labels[r]);
      truth.seen.push_back(data.unlabeled_truth.seen[r]);
    }
    const Matrix weak = augment(aug, x, AugmentKind::weak, rng());
    const Matrix strong = augment(aug, x, AugmentKind::strong, rng());
    const AlignmentReport rep =
        alignment_report(ckpt.params, gather_selected(ckpt.params, weak, strong, truth, gate));
    holds += rep.bound_holds;
    worst_gap = std::max(worst_gap, rep.identity_gap);
    nlohmann::json j = to_json(rep);
    j["seed"] = seed;
    alignment.push_back(std::move(j));
  }

  nlohmann::json lemma = nlohmann::json::array();
  std::size_t violations = 0;
  const double taus[] = {0.5, 0.6, 0.7, 0.8, 0.9, 0.95};
  const double etas[] = {0.0, 0.02, 0.1, 0.2};
  std::uint64_t oracle_seed = 0;
  for (double t1 : taus)
    for (double t2 : taus)
      for (double eta : etas) {
        const LemmaReport rep =
            lemma_check(CalibratedOracle{eta, oracle_seed++}, t1, t2, static_cast<std::size_t>(a.lemma_n));
        violations += rep.violated;
        lemma.push_back(to_json(rep));
      }

  nlohmann::json doc = {
      {"version", kVersion},
      {"checkpoint", fs::absolute(a.checkpoint).string()},
      {"config_hash", ckpt.config_hash},
      {"summary",
       {{"seeds", a.seeds},
        {"bound_holds", holds},
        {"max_identity_gap", worst_gap},
        {"lemma_cases", lemma.size()},
        {"lemma_violations", violations}}},
      {"alignment", alignment},
      {"lemma", lemma}};
  write_text_file(out, doc.dump(2) + "\n");
  std::cout << out.string() << "\n";
  return 0;
}

struct PrepareArgs {
  SyntheticSpec spec;
  std::string out;
  std::string image_dir;
};

int cmd_prepare(const PrepareArgs& a) {
  if (a.out.empty()) throw UsageError("--out is required");
  if (!(a.spec.kappa >= 0.0 && a.spec.kappa <= 1.0)) throw UsageError("--kappa must lie in [0, 1]");
  MismatchDataset data;
  try {
    if (!a.image_dir.empty()) {
      ImageIngestSpec img;
      img.directory = a.image_dir;
      img.seed = a.spec.seed;
      img.kappa = a.spec.kappa;
      data = ingest_image_dataset(img);
    } else {
      data = make_synthetic(a.spec);
    }
  } catch (const SchemaError&) {
    throw;
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
  const DatasetFiles files = save_dataset(data, a.out);
  std::cout << files.manifest.string() << "\n";
  return 0;
}

std::string config_flag_listing() {
  std::string s = "Config flags (train; each also a JSON key in --config):\n";
  for (const auto& [name, help] : config_schema()) s += "  --" + name + "  " + help + "\n";
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"calimatch: calibrated safe semi-supervised learning lab"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));
  app.footer(config_flag_listing() + "\nDefault output root: $" + kOutRootEnv +
             "\nExit status: 0 ok, 2 usage, 3 config, 4 I/O, 5 numeric");

  PrepareArgs prep;
  auto* p = app.add_subcommand("prepare", "Generate a dataset and write splits plus manifest.json");
  p->add_option("--seed", prep.spec.seed, "Generation seed");
  p->add_option("--kappa", prep.spec.kappa, "Fraction of unlabeled samples from unseen classes");
  p->add_option("--seen", prep.spec.num_seen, "Number of seen classes");
  p->add_option("--unseen", prep.spec.num_unseen, "Number of unseen classes");
  p->add_option("--labeled", prep.spec.n_labeled, "Labeled pool size (before validation hold-out)");
  p->add_option("--unlabeled", prep.spec.n_unlabeled, "Unlabeled split size");
  p->add_option("--test", prep.spec.n_test, "Test split size");
  p->add_option("--dim", prep.spec.dim, "Feature dimension");
  p->add_option("--spread", prep.spec.cluster_spread, "Class cluster standard deviation");
  p->add_option("--seen-radius", prep.spec.seen_radius, "Radius of the seen class means");
  p->add_option("--unseen-radius", prep.spec.unseen_radius, "Radius of the unseen class means");
  p->add_option("--image-dir", prep.image_dir, "Ingest fixed-size image records instead");
  p->add_option("--out", prep.out, "Output directory")->required();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a model");
  t->add_option("--config", tr.config, "JSON config file");
  t->add_option("--preset", tr.preset, "Ablation preset")
      ->check(CLI::IsMember(preset_names()));
  t->add_option("--data", tr.data, "Dataset manifest (default: synthetic at the config seed)");
  t->add_option("--out", tr.out, "Output directory");
  t->add_flag("--serial", tr.serial, "Use the serial kernels");
  t->add_flag("--quiet", tr.quiet, "No progress output");
  for (const auto& [name, help] : config_schema())
    t->add_option("--" + name, tr.overrides[name], help)->group("Config");

  EvalArgs ev;
  auto* e = app.add_subcommand("evaluate", "Evaluate a checkpoint on a dataset");
  e->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required();
  e->add_option("--data", ev.data, "Dataset manifest")->required();
  e->add_option("--out", ev.out, "Output directory");
  e->add_flag("--serial", ev.serial, "Use the serial kernels");

  TheoryArgs th;
  auto* h = app.add_subcommand("theory-check", "Check the selection-error and gradient bounds");
  h->add_option("--checkpoint", th.checkpoint, "Checkpoint file")->required();
  h->add_option("--data", th.data, "Dataset manifest")->required();
  h->add_option("--seeds", th.seeds, "Number of random batches");
  h->add_option("--batch", th.batch, "Unlabeled samples per batch before selection");
  h->add_option("--lemma-n", th.lemma_n, "Oracle stream length per grid cell");
  h->add_option("--out", th.out, "Report file");

  std::string schema_out;
  auto* s = app.add_subcommand("schema", "Print the config JSON schema");
  s->add_option("--out", schema_out, "Write to this file instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int rc = app.exit(err);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (*p) return cmd_prepare(prep);
    if (*t) return cmd_train(tr);
    if (*e) return cmd_evaluate(ev);
    if (*h) return cmd_theory(th);
    if (*s) {
      const std::string text = config_json_schema().dump(2) + "\n";
      if (schema_out.empty()) std::cout << text;
      else write_text_file(schema_out, text);
      return 0;
    }
  } catch (const UsageError& err) {
    std::cerr << "usage error: " << err.what() << "\n";
    return kExitUsage;
  } catch (const SchemaError& err) {
    std::cerr << "config error:\n";
    for (const auto& problem : err.problems()) std::cerr << "  " << problem << "\n";
    return kExitConfig;
  } catch (const ConfigError& err) {
    std::cerr << "config error: " << err.what() << "\n";
    return kExitConfig;
  } catch (const DomainError& err) {
    std::cerr << "config error: " << err.what() << "\n";
    return kExitConfig;
  } catch (const IoError& err) {
    std::cerr << "I/O error: " << err.what() << "\n";
    return kExitIo;
  } catch (const ValidationError& err) {
    std::cerr << "invalid input data: " << err.what() << "\n";
    return kExitIo;
  } catch (const NumericError& err) {
    std::cerr << "numeric error: " << err.what() << "\n";
    return kExitNumeric;
  } catch (const fs::filesystem_error& err) {
    std::cerr << "I/O error: " << err.what() << "\n";
    return kExitIo;
  }
  return kExitUsage;
}
