// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <sys/wait.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "calimatch/calibration.hpp"
#include "calimatch/io.hpp"
#include "calimatch/metrics.hpp"
#include "calimatch/objectives.hpp"
#include "calimatch/selection.hpp"
#include "calimatch/theory.hpp"
#include "calimatch/trainer.hpp"
#include "support.hpp"

using namespace calimatch;
using namespace calimatch::testing;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

// ---------------------------------------------------------------- criterion 1

Verdict gradients() {
  const auto start = Clock::now();
  std::mt19937_64 rng(1);
  constexpr std::size_t n = 4, k = 5;
  std::map<std::string, double> worst;
  int redrawn = 0;
  double temperature_block = 0.0;
  for (Reduction red : {Reduction::mean, Reduction::sum}) {
    for (int inst = 0; inst < 100; ++inst) {
      auto pt = random_point(n, k, rng);
      auto y = random_labels(n, k, rng);
      const auto gam = random_unit(n, rng);
      auto del = random_unit(n, rng);
      while (kink_margin(pt, y, del) < 10 * 1e-3) {
        ++redrawn;
        pt = random_point(n, k, rng);
        y = random_labels(n, k, rng);
        del = random_unit(n, rng);
      }
      const auto other = random_point(n, k, rng).outputs();
      const auto weak = random_point(n, k, rng).outputs();
      std::vector<bool> mask(n);
      for (std::size_t i = 0; i < n; ++i) mask[i] = (rng() & 1U) != 0;
      auto check = [&](const std::string& name, auto&& value_of, auto&& grad_of) {
        const auto out = pt.outputs();
        const auto r = finite_difference_check(pt, value_of, to_logit_grad(out, grad_of(out)));
        worst[name] = std::max(worst[name], r.worst());
        temperature_block = std::max({temperature_block, r.t_m, r.t_o});
      };
      check("ce", [&](const LogitPoint& p) { return loss_ce(p.outputs(), y, red).value; },
            [&](const ModelOutputs& o) { return loss_ce(o, y, red).grad; });
      check("ood", [&](const LogitPoint& p) { return loss_ood(p.outputs(), y, red).value; },
            [&](const ModelOutputs& o) { return loss_ood(o, y, red).grad; });
      check("sc", [&](const LogitPoint& p) { return loss_soft_consistency(p.outputs(), other, red).value; },
            [&](const ModelOutputs& o) { return loss_soft_consistency(o, other, red).first; });
      check("mcal", [&](const LogitPoint& p) { return loss_mcal(p.outputs(), y, gam, red).value; },
            [&](const ModelOutputs& o) { return loss_mcal(o, y, gam, red).grad; });
      check("ocal", [&](const LogitPoint& p) { return loss_ocal(p.outputs(), y, del, red).value; },
            [&](const ModelOutputs& o) { return loss_ocal(o, y, del, red).grad; });
      check("fix", [&](const LogitPoint& p) { return loss_fix(weak, p.outputs(), mask, red).value; },
            [&](const ModelOutputs& o) { return loss_fix(weak, o, mask, red).grad; });
    }
  }
  const double elapsed = seconds_since(start);
  double max_err = 0.0;
  std::ostringstream d;
  for (const auto& [name, e] : worst) {
    max_err = std::max(max_err, e);
    d << name << " " << e << ", ";
  }
  d << "temperature components alone " << temperature_block << ", " << redrawn << " redrawn near a kink, " << elapsed << " s";
  return {max_err <= 1e-4 && elapsed < 60.0, "max rel err: " + d.str()};
}

// ---------------------------------------------------------------- criterion 2

double brute_force_ece(const std::vector<double>& conf, const std::vector<bool>& correct, int bins) {
  double total = 0.0;
  for (int b = 1; b <= bins; ++b) {
    const double lo = static_cast<double>(b - 1) / bins, hi = static_cast<double>(b) / bins;
    double n = 0, sum_c = 0, hits = 0;
    for (std::size_t i = 0; i < conf.size(); ++i) {
      const bool in = (conf[i] > lo && conf[i] <= hi) || (b == 1 && conf[i] == 0.0);
      if (!in) continue;
      n += 1;
      sum_c += conf[i];
      hits += correct[i];
    }
    if (n > 0) total += n / conf.size() * std::abs(sum_c / n - hits / n);
  }
  return total;
}

Verdict ece_oracle() {
  const double hand = ece(std::vector<double>{0.9, 0.9, 0.6, 0.6}, {true, false, true, true}, 15).ece;
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int inst = 0; inst < 1000; ++inst) {
    const std::size_t n = 1 + rng() % 200;
    const int bins = 1 + static_cast<int>(rng() % 30);
    std::vector<double> c(n);
    std::vector<bool> ok(n);
    for (std::size_t i = 0; i < n; ++i) {
      c[i] = u(rng);
      ok[i] = u(rng) < c[i];
    }
    worst = std::max(worst, std::abs(ece(c, ok, bins).ece - brute_force_ece(c, ok, bins)));
  }
  std::ostringstream d;
  d << "hand case " << hand << ", max |module - recount| " << worst;
  return {hand == 0.4 && worst <= 1e-12, d.str()};
}

// ---------------------------------------------------------------- criterion 3

Verdict theorem_identity() {
  const auto start = Clock::now();
  SyntheticSpec spec;
  spec.seed = 3;
  const auto data = make_synthetic(spec);
  TrainConfig cfg;
  cfg.seed = 3;
  cfg.epochs = 8;
  cfg.warmup_epochs = 2;
  const auto params = train(data, cfg).last;
  const SelectionGate gate{cfg.tau1, cfg.tau2, true};
  const AugmentationPair aug{cfg.sigma_weak, cfg.sigma_strong, cfg.dropout};

  double clean_worst = 0.0, injected_worst = 0.0;
  int holds = 0;
  std::size_t selected = 0, errors = 0;
  for (int seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(seed));
    std::uniform_int_distribution<std::size_t> pick(0, data.unlabeled.size() - 1);
    std::vector<std::size_t> rows(256);
    for (auto& r : rows) r = pick(rng);
    HiddenTruth truth;
    for (auto r : rows) {
      truth.labels.push_back(data.unlabeled_truth.labels[r]);
      truth.seen.push_back(data.unlabeled_truth.seen[r]);
    }
    const Matrix x = data.unlabeled.x.gather_rows(rows);
    const Matrix weak = augment(aug, x, AugmentKind::weak, rng());
    const Matrix strong = augment(aug, x, AugmentKind::strong, rng());
    const SelectedBatch batch = gather_selected(params, weak, strong, truth, gate);

    const auto natural = alignment_report(params, batch);
    holds += natural.bound_holds;
    selected += batch.size();
    errors += natural.n_ood + natural.n_mislabeled;
    injected_worst = std::max(injected_worst, natural.identity_gap);

    SelectedBatch clean = batch;
    clean.true_labels = clean.pseudo_labels;
    std::fill(clean.seen.begin(), clean.seen.end(), true);
    const auto c = alignment_report(params, clean);
    clean_worst = std::max(clean_worst, c.grad_diff_norm);

    SelectedBatch injected = batch;
    for (std::size_t i = 0; i < injected.size(); ++i) {
      const auto r = rng() % 5;
      if (r == 0) injected.seen[i] = false;
      if (r == 1) {
        injected.seen[i] = true;
        injected.true_labels[i] = (injected.pseudo_labels[i] + 1) % data.info.num_seen();
      }
    }
    const auto inj = alignment_report(params, injected);
    injected_worst = std::max(injected_worst, inj.identity_gap);
    if (!inj.bound_holds) holds = -1000;
  }
  const double elapsed = seconds_since(start);
  std::ostringstream d;
  d << "clean diff " << clean_worst << ", identity gap " << injected_worst << ", bound " << std::max(holds, 0)
    << "/100 (" << selected << " selected, " << errors << " natural errors), " << elapsed << " s";
  return {clean_worst <= 1e-9 && injected_worst <= 1e-9 && holds == 100 && elapsed < 120.0, d.str()};
}

// ---------------------------------------------------------------- criterion 4

Verdict lemma_grid() {
  const double taus[] = {0.5, 0.6, 0.7, 0.8, 0.9, 0.95};
  const double etas[] = {0.0, 0.02, 0.1, 0.2};
  int cells = 0, violations = 0;
  double closest = 1.0;
  std::uint64_t seed = 400;
  for (double t1 : taus)
    for (double t2 : taus)
      for (double eta : etas) {
        const auto r = lemma_check(CalibratedOracle{eta, seed++}, t1, t2, 10000);
        ++cells;
        violations += r.violated;
        if (r.epsilon_hat) closest = std::min(closest, r.bound + r.allowance - *r.epsilon_hat);
      }
  std::ostringstream d;
  d << cells << " cells, " << violations << " violations, smallest margin " << closest;
  return {violations == 0, d.str()};
}

// ---------------------------------------------------------------- criteria 5 and 6

struct PresetStats {
  std::vector<double> top1, ece, ood_ece;
  double mean(const std::vector<double>& v) const {
    double s = 0;
    for (double x : v) s += x;
    return s / v.size();
  }
};

std::map<std::string, PresetStats> g_runs;
double g_runs_seconds = 0.0;

void run_synthetic_study() {
  const auto start = Clock::now();
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SyntheticSpec spec;
    spec.seed = seed;
    const auto data = make_synthetic(spec);
    for (const auto& preset : preset_names()) {
      TrainConfig cfg;
      cfg.seed = seed;
      apply_preset(cfg, preset);
      const auto result = train(data, cfg);
      EvalConfig ec;
      ec.ece_bins = cfg.ece_bins;
      ec.calibrated = cfg.calibrates_classifier();
      const auto rep = evaluate(result.best, data, ec);
      auto& st = g_runs[preset];
      st.top1.push_back(rep.top1);
      st.ece.push_back(rep.ece_multiclass);
      st.ood_ece.push_back(rep.ood_ece);
    }
  }
  g_runs_seconds = seconds_since(start);
}

Verdict ordering() {
  const double cali = g_runs["calimatch"].mean(g_runs["calimatch"].top1);
  const double open = g_runs["openmatch"].mean(g_runs["openmatch"].top1);
  const double fix = g_runs["fixmatch"].mean(g_runs["fixmatch"].top1);
  const double sup = g_runs["supervised"].mean(g_runs["supervised"].top1);
  std::ostringstream d;
  d.precision(4);
  d << "mean top-1 calimatch " << cali << ", openmatch " << open << ", fixmatch " << fix << ", supervised "
    << sup << "; 20 runs in " << g_runs_seconds << " s";
  const bool pass = cali >= open && open >= fix && fix >= sup && cali - fix >= 0.01 && g_runs_seconds < 600.0;
  return {pass, d.str()};
}

Verdict calibration() {
  auto& c = g_runs["calimatch"];
  auto& o = g_runs["openmatch"];
  const double ce = c.mean(c.ece), oe = o.mean(o.ece), co = c.mean(c.ood_ece), oo = o.mean(o.ood_ece);

  SyntheticSpec spec;
  spec.seed = 6;
  const auto data = make_synthetic(spec);
  TrainConfig cfg;
  cfg.seed = 6;
  TrainState state = init_state(data.training_view(), cfg);
  state.tables = refresh_tables(state.params, data.validation.x, data.validation.labels, cfg.bins);
  std::mt19937_64 rng(6);
  std::vector<std::size_t> li(cfg.batch_size_labeled), ui(cfg.batch_size_unlabeled);
  for (std::size_t i = 0; i < li.size(); ++i) li[i] = i;
  for (std::size_t i = 0; i < ui.size(); ++i) ui[i] = 3 * i;
  std::vector<int> ly;
  for (auto i : li) ly.push_back(data.labeled.labels[i]);
  const auto batch = make_step_batch(data.labeled.x.gather_rows(li), ly, data.unlabeled.x.gather_rows(ui),
                                     AugmentationPair{}, rng);
  TrainConfig open_cfg = cfg;
  apply_preset(open_cfg, "openmatch");
  const int epoch = cfg.warmup_epochs;
  const auto cali_obj = compute_objective(state.params, state.tables, epoch, batch, cfg);
  const auto open_obj = compute_objective(state.params, state.tables, epoch, batch, open_cfg);
  LossBreakdown zeroed = cali_obj.losses;
  zeroed.l_mcal = 0.0;
  zeroed.l_ocal = 0.0;
  const bool bitwise = open_obj.losses.total == zeroed.weighted_total();

  std::ostringstream d;
  d.precision(4);
  d << "multiclass ECE " << ce << " vs " << oe << ", OOD ECE " << co << " vs " << oo
    << ", objective bitwise " << (bitwise ? "equal" : "different");
  return {ce < oe && co < oo && bitwise, d.str()};
}

// ---------------------------------------------------------------- criterion 7

int argmax(std::span<const double> v) {
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

Verdict selection_gate() {
  std::mt19937_64 rng(7);
  const std::size_t n = 10000, k = 6;
  const auto pt = random_point(n, k, rng);
  const auto out = pt.outputs();
  const double grid[] = {0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99};
  std::size_t subset = 0, strict = 0, invariance = 0;

  std::vector<std::vector<SelectionRecord>> by_cell;
  for (double t1 : grid)
    for (double t2 : grid) by_cell.push_back(select_batch(out, t1, t2));
  const std::size_t g = std::size(grid);
  for (std::size_t a = 0; a < g; ++a)
    for (std::size_t b = 0; b < g; ++b)
      for (std::size_t a2 = a; a2 < g; ++a2)
        for (std::size_t b2 = b; b2 < g; ++b2) {
          const auto& loose = by_cell[a * g + b];
          const auto& tight = by_cell[a2 * g + b2];
          for (std::size_t i = 0; i < n; ++i) subset += tight[i].selected && !loose[i].selected;
        }

  for (std::size_t i = 0; i < n; ++i) {
    const std::vector<std::size_t> one{i};
    const auto row = outputs_from_logits(pt.z_f.gather_rows(one), pt.z_g.gather_rows(one), pt.t_m, pt.t_o,
                                         Exec::serial);
    const auto sc = score(row, 0);
    if (sc.s > 0.0 && sc.s < 1.0) strict += select_batch(row, sc.s, 0.01)[0].selected;
    if (sc.c > 0.0 && sc.c < 1.0) strict += select_batch(row, 0.01, sc.c)[0].selected;
    const int base = argmax(row.p.row(0));
    for (double t : {0.05, 0.5, 1.0, 1.5, 4.0, 20.0}) {
      const auto tr = outputs_from_logits(pt.z_f.gather_rows(one), pt.z_g.gather_rows(one), t, t, Exec::serial);
      invariance += argmax(tr.p_s.row(0)) != base;
      invariance += select_batch(tr, 0.5, 0.5)[0].pseudo_label != base;
    }
  }
  std::ostringstream d;
  d << "violations: subset " << subset << ", boundary " << strict << ", argmax " << invariance;
  return {subset == 0 && strict == 0 && invariance == 0, d.str()};
}

// ---------------------------------------------------------------- criterion 8

int run_cli(const std::string& args) {
  const std::string cmd = "\"" CALIMATCH_CLI_PATH "\" " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Verdict reproducibility() {
  const fs::path root = fs::temp_directory_path() / "calimatch_acceptance_repro";
  fs::remove_all(root);
  std::vector<nlohmann::json> reports, manifests;
  for (const char* run : {"a", "b"}) {
    const fs::path dir = root / run;
    const std::string data = (dir / "data").string(), tr = (dir / "train").string(), ev = (dir / "eval").string();
    if (run_cli("prepare --seed 8 --out " + data) != 0 ||
        run_cli("train --quiet --preset calimatch --seed 8 --data " + data + "/manifest.json --out " + tr) != 0 ||
        run_cli("evaluate --checkpoint " + tr + "/checkpoint-best --data " + data + "/manifest.json --out " + ev) != 0)
      return {false, std::string("pipeline run ") + run + " failed"};
    reports.push_back(nlohmann::json::parse(read_text_file(ev + "/report.json")));
    manifests.push_back(nlohmann::json::parse(read_text_file(data + "/manifest.json")));
  }
  std::size_t scalars = 0, mismatches = 0;
  for (const auto& [key, value] : reports[0].items()) {
    if (value.is_structured()) continue;
    ++scalars;
    mismatches += reports[1].value(key, nlohmann::json()) != value;
  }
  const bool checksums = manifests[0]["checksum"] == manifests[1]["checksum"] &&
                         dataset_checksum(root / "a" / "data" / "manifest.json") ==
                             dataset_checksum(root / "b" / "data" / "manifest.json");
  fs::remove_all(root);
  std::ostringstream d;
  d << scalars << " report scalars, " << mismatches << " mismatches, checksums "
    << (checksums ? "identical" : "different");
  return {mismatches == 0 && scalars > 0 && checksums, d.str()};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"1 gradient correctness", gradients},
      {"2 ECE oracle equivalence", ece_oracle},
      {"3 gradient identity and bound", theorem_identity},
      {"4 selection-error bound simulation", lemma_grid},
      {"5 synthetic accuracy ordering", [] { run_synthetic_study(); return ordering(); }},
      {"6 calibration improvement", calibration},
      {"7 selection-gate properties", selection_gate},
      {"8 reproducibility", reproducibility},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Verdict v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failed += !v.pass;
    std::cout << (v.pass ? "PASS" : "FAIL") << "  " << name << ": " << v.detail << std::endl;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
