#include "calimatch/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "calimatch/calibration.hpp"
#include "calimatch/error.hpp"
#include "calimatch/io.hpp"
#include "calimatch/selection.hpp"

namespace calimatch {

double ReliabilityTable::ece() const noexcept {
  if (total == 0) return 0.0;
  double sum = 0.0;
  for (const auto& b : bins)
    if (b.count > 0) sum += static_cast<double>(b.count) / static_cast<double>(total) * b.gap;
  return sum;
}

EceResult ece(std::span<const double> confidences, const std::vector<bool>& correct, int bins,
              Exec exec) {
  if (bins < 1) throw ConfigError("ECE needs at least one bin");
  if (confidences.size() != correct.size())
    throw ValidationError("ECE: confidences and correctness differ in length");
  if (confidences.empty()) throw ValidationError("ECE of an empty sample");
  const std::size_t n = confidences.size();
  for (double c : confidences)
    if (!(c >= 0.0 && c <= 1.0)) throw DomainError("ECE: confidence outside [0, 1]");

  std::vector<std::size_t> index(n);
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < n; ++i) index[i] = confidence_bin(confidences[i], bins);
  } else {
    for (std::size_t i = 0; i < n; ++i) index[i] = confidence_bin(confidences[i], bins);
  }

  std::vector<double> conf_sum(bins, 0.0);
  std::vector<std::size_t> hits(bins, 0), count(bins, 0);
  for (std::size_t i = 0; i < n; ++i) {
    conf_sum[index[i]] += confidences[i];
    count[index[i]] += 1;
    if (correct[i]) hits[index[i]] += 1;
  }

  EceResult out;
  out.table.total = n;
  out.table.bins.resize(bins);
  for (int b = 0; b < bins; ++b) {
    auto& row = out.table.bins[b];
    row.lo = static_cast<double>(b) / bins;
    row.hi = static_cast<double>(b + 1) / bins;
    row.count = count[b];
    if (count[b] > 0) {
      row.mean_confidence = conf_sum[b] / static_cast<double>(count[b]);
      row.accuracy = static_cast<double>(hits[b]) / static_cast<double>(count[b]);
      row.gap = std::abs(row.accuracy - row.mean_confidence);
    }
  }
  out.ece = out.table.ece();
  return out;
}

std::optional<double> f1_score(const BinaryCounts& c) noexcept {
  const std::size_t denom = 2 * c.tp + c.fp + c.fn;
  if (denom == 0) return std::nullopt;
  return 2.0 * static_cast<double>(c.tp) / static_cast<double>(denom);
}

BinaryCounts confusion(const std::vector<bool>& predicted, const std::vector<bool>& actual) {
  if (predicted.size() != actual.size())
    throw ValidationError("confusion: prediction and truth differ in length");
  BinaryCounts c;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (predicted[i] && actual[i]) ++c.tp;
    else if (predicted[i]) ++c.fp;
    else if (actual[i]) ++c.fn;
    else ++c.tn;
  }
  return c;
}

namespace {

std::size_t argmax_row(const Matrix& m, std::size_t r) {
  auto row = m.row(r);
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

}  // namespace

MetricsReport evaluate(const ModelParams& params, const MismatchDataset& data,
                       const EvalConfig& config, Exec exec) {
  const TestSplit& test = data.test;
  if (test.size() == 0) throw ValidationError("test split is empty");
  const auto K = static_cast<std::size_t>(data.info.num_seen());
  if (static_cast<std::size_t>(params.arch.num_classes) != K ||
      params.arch.input_dim != data.info.dim)
    throw ConfigError("checkpoint architecture does not match the dataset");

  const ModelOutputs out = predict(params, test.x, exec);
  MetricsReport rep;
  rep.calibrated = config.calibrated;
  rep.n_test = test.size();
  rep.t_m = params.t_m;
  rep.t_o = params.t_o;

  // Seen-only classification metrics.
  std::vector<double> conf_p, conf_ps;
  std::vector<bool> correct;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < test.size(); ++r) {
    if (!test.seen[r]) continue;
    const bool ok = argmax_row(out.p, r) == static_cast<std::size_t>(test.labels[r]);
    hits += ok;
    correct.push_back(ok);
    auto p = out.p.row(r);
    auto ps = out.p_s.row(r);
    conf_p.push_back(*std::max_element(p.begin(), p.end()));
    conf_ps.push_back(*std::max_element(ps.begin(), ps.end()));
  }
  rep.n_seen_test = correct.size();
  if (rep.n_seen_test == 0) throw ValidationError("test split holds no seen samples");
  rep.top1 = static_cast<double>(hits) / static_cast<double>(rep.n_seen_test);
  auto e_p = ece(conf_p, correct, config.ece_bins, exec);
  auto e_ps = ece(conf_ps, correct, config.ece_bins, exec);
  rep.ece_multiclass_p = e_p.ece;
  rep.ece_multiclass_ps = e_ps.ece;
  rep.ece_multiclass = config.calibrated ? e_ps.ece : e_p.ece;
  rep.multiclass_table = config.calibrated ? e_ps.table : e_p.table;

  // OOD detection on every test sample; unseen is the positive class.
  std::vector<SampleScore> scores(test.size());
  for (std::size_t r = 0; r < test.size(); ++r) scores[r] = score(out, r);
  std::vector<bool> predicted(test.size()), actual(test.size()), ood_correct(test.size());
  std::vector<double> ood_conf(test.size());
  for (std::size_t r = 0; r < test.size(); ++r) {
    predicted[r] = scores[r].u > kOodDecision;
    actual[r] = !test.seen[r];
    ood_correct[r] = predicted[r] == actual[r];
    ood_conf[r] = std::max(scores[r].s, scores[r].u);
  }
  rep.ood_f1 = f1_score(confusion(predicted, actual));
  auto e_ood = ece(ood_conf, ood_correct, config.ece_bins, exec);
  rep.ood_ece = e_ood.ece;
  rep.ood_table = e_ood.table;

  for (double tau : config.sweep_taus) {
    SweepRow row;
    row.tau1 = tau;
    std::size_t seen_n = 0, seen_kept = 0, seen_kept_hits = 0;
    std::vector<bool> kp, ka;
    for (std::size_t r = 0; r < test.size(); ++r) {
      const bool kept = ood_conf[r] > tau;
      if (test.seen[r]) {
        ++seen_n;
        if (kept) {
          ++seen_kept;
          seen_kept_hits += argmax_row(out.p, r) == static_cast<std::size_t>(test.labels[r]);
        }
      }
      if (kept) {
        kp.push_back(predicted[r]);
        ka.push_back(actual[r]);
      }
    }
    if (seen_kept > 0)
      row.accuracy = static_cast<double>(seen_kept_hits) / static_cast<double>(seen_kept);
    row.f1 = f1_score(confusion(kp, ka));
    if (seen_n > 0) row.selected_fraction = static_cast<double>(seen_kept) / static_cast<double>(seen_n);
    rep.sweep.push_back(row);
  }
  return rep;
}

namespace {

nlohmann::json opt(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string num(const std::optional<double>& v) { return v ? num(*v) : "NA"; }

}  // namespace

nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json sweep = nlohmann::json::array();
  for (const auto& s : r.sweep)
    sweep.push_back({{"tau1", s.tau1},
                     {"accuracy", opt(s.accuracy)},
                     {"f1", opt(s.f1)},
                     {"selected_fraction", opt(s.selected_fraction)}});
  return {{"calibrated", r.calibrated},
          {"n_seen_test", r.n_seen_test},
          {"n_test", r.n_test},
          {"top1", r.top1},
          {"ece_multiclass", r.ece_multiclass},
          {"ece_multiclass_p", r.ece_multiclass_p},
          {"ece_multiclass_ps", r.ece_multiclass_ps},
          {"ood_f1", opt(r.ood_f1)},
          {"ood_ece", r.ood_ece},
          {"t_m", r.t_m},
          {"t_o", r.t_o},
          {"sweep", sweep}};
}

void emit_reliability_data(const ReliabilityTable& table, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "bin_lo,bin_hi,count,mean_confidence,accuracy,gap\n";
  for (const auto& b : table.bins)
    out << num(b.lo) << ',' << num(b.hi) << ',' << b.count << ',' << num(b.mean_confidence) << ','
        << num(b.accuracy) << ',' << num(b.gap) << '\n';
  write_text_file(path, out.str());
}

ReliabilityTable read_reliability_data(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  if (!std::getline(in, line) || line != "bin_lo,bin_hi,count,mean_confidence,accuracy,gap")
    throw IoError(path.string() + ": unexpected reliability header");
  ReliabilityTable t;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ReliabilityBin b;
    char c1, c2, c3, c4, c5;
    std::istringstream row(line);
    if (!(row >> b.lo >> c1 >> b.hi >> c2 >> b.count >> c3 >> b.mean_confidence >> c4 >>
          b.accuracy >> c5 >> b.gap))
      throw IoError(path.string() + ": malformed row '" + line + "'");
    t.total += b.count;
    t.bins.push_back(b);
  }
  return t;
}

void emit_sweep(std::span<const SweepRow> rows, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "tau1,accuracy,f1,selected_fraction\n";
  for (const auto& r : rows)
    out << num(r.tau1) << ',' << num(r.accuracy) << ',' << num(r.f1) << ','
        << num(r.selected_fraction) << '\n';
  write_text_file(path, out.str());
}

void write_report(const MetricsReport& report, const std::filesystem::path& dir) {
  write_text_file(dir / "report.json", to_json(report).dump(2) + "\n");
  emit_reliability_data(report.multiclass_table, dir / "reliability_multiclass.csv");
  emit_reliability_data(report.ood_table, dir / "reliability_ood.csv");
  emit_sweep(report.sweep, dir / "sweep.csv");
}

}  // namespace calimatch
