#include "calimatch/selection.hpp"

#include <algorithm>

#include "calimatch/error.hpp"

namespace calimatch {

SampleScore score(const ModelOutputs& out, std::size_t row) {
  auto ps = out.p_s.row(row);
  auto qs = out.q_s.row(row);
  SampleScore sc;
  sc.s = 0.0;
  for (std::size_t k = 0; k < ps.size(); ++k) sc.s += ps[k] * qs[k];
  sc.c = *std::max_element(ps.begin(), ps.end());
  sc.u = 1.0 - sc.s;
  return sc;
}

std::vector<SelectionRecord> select_batch(const ModelOutputs& weak, const SelectionGate& gate,
                                          Exec exec) {
  auto in_open_unit = [](double t) { return t > 0.0 && t < 1.0; };
  if (!in_open_unit(gate.tau1) || !in_open_unit(gate.tau2))
    throw ConfigError("selection thresholds must lie in (0, 1)");

  const auto n = static_cast<long>(weak.batch_size());
  std::vector<SelectionRecord> records(weak.batch_size());
  auto one = [&](long i) {
    const auto r = static_cast<std::size_t>(i);
    const SampleScore sc = score(weak, r);
    auto p = weak.p.row(r);
    SelectionRecord& rec = records[r];
    rec.s = sc.s;
    rec.c = sc.c;
    rec.u = sc.u;
    rec.pseudo_label = static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
    rec.selected = (!gate.use_seen_score || sc.s > gate.tau1) && sc.c > gate.tau2;
  };
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) one(i);
  } else {
    for (long i = 0; i < n; ++i) one(i);
  }
  return records;
}

std::vector<SelectionRecord> select_batch(const ModelOutputs& weak, double tau1, double tau2) {
  return select_batch(weak, SelectionGate{tau1, tau2, true});
}

std::vector<bool> selection_mask(std::span<const SelectionRecord> records) {
  std::vector<bool> mask(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) mask[i] = records[i].selected;
  return mask;
}

namespace {

std::optional<double> ratio(std::size_t num, std::size_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

void check_truth(std::span<const SelectionRecord> records, const HiddenTruth& truth) {
  if (truth.labels.size() != records.size() || truth.seen.size() != records.size())
    throw ValidationError("hidden truth does not match the record count");
}

}  // namespace

SelectionDiagnostics selection_diagnostics(std::span<const SelectionRecord> records,
                                           const HiddenTruth& truth) {
  check_truth(records, truth);
  std::size_t sel_seen = 0, sel_seen_correct = 0, seen = 0;
  std::size_t confident = 0, confident_unseen = 0, conf_low = 0, conf_low_unseen = 0;
  SelectionDiagnostics d;
  d.total = records.size();
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    const bool is_seen = truth.seen[i];
    if (r.selected) ++d.selected;
    if (is_seen) {
      ++seen;
      if (r.selected) {
        ++sel_seen;
        if (r.pseudo_label == truth.labels[i]) ++sel_seen_correct;
      }
    }
    if (r.c > kHighConfidence) {
      ++confident;
      if (!is_seen) ++confident_unseen;
      if (r.u < kLowOod) {
        ++conf_low;
        if (!is_seen) ++conf_low_unseen;
      }
    }
  }
  d.pseudo_label_accuracy = ratio(sel_seen_correct, sel_seen);
  d.seen_selected_fraction = ratio(sel_seen, seen);
  d.unseen_in_confident = ratio(confident_unseen, confident);
  d.unseen_in_confident_low_ood = ratio(conf_low_unseen, conf_low);
  d.selection_error = selection_error_rate(records, truth);
  return d;
}

std::optional<double> selection_error_rate(std::span<const SelectionRecord> records,
                                           const HiddenTruth& truth) {
  check_truth(records, truth);
  std::size_t selected = 0, wrong = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!records[i].selected) continue;
    ++selected;
    if (!truth.seen[i] || records[i].pseudo_label != truth.labels[i]) ++wrong;
  }
  return ratio(wrong, selected);
}

}  // namespace calimatch
