#include "calimatch/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "calimatch/checkpoint.hpp"
#include "calimatch/error.hpp"
#include "calimatch/io.hpp"

namespace calimatch {

namespace {

AugmentationPair augmentation_of(const TrainConfig& c) {
  return {c.sigma_weak, c.sigma_strong, c.dropout};
}

std::vector<double> lookup_all(const ReferenceTable& table, const Matrix& probs) {
  std::vector<double> refs(probs.rows());
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    auto row = probs.row(r);
    refs[r] = lookup_reference(table, *std::max_element(row.begin(), row.end()));
  }
  return refs;
}

void check_finite(double value, const char* term) {
  if (!std::isfinite(value)) throw NumericError(std::string("non-finite loss term ") + term);
}

// Cycles through a reshuffled permutation of [0, n).
class Sampler {
 public:
  Sampler(std::size_t n, std::uint64_t seed) : order_(n), rng_(seed) {
    std::iota(order_.begin(), order_.end(), 0);
    std::shuffle(order_.begin(), order_.end(), rng_);
  }
  std::vector<std::size_t> next(std::size_t count) {
    std::vector<std::size_t> out;
    out.reserve(count);
    while (out.size() < count) {
      if (at_ == order_.size()) {
        std::shuffle(order_.begin(), order_.end(), rng_);
        at_ = 0;
      }
      out.push_back(order_[at_++]);
    }
    return out;
  }

 private:
  std::vector<std::size_t> order_;
  std::mt19937_64 rng_;
  std::size_t at_ = 0;
};

}  // namespace

TrainState init_state(const TrainingView& view, const TrainConfig& config) {
  ModelParams params = make_toy_model(config.seed, view.dim, config.hidden_dims, view.num_classes,
                                      config.activation);
  Optimizer opt(config.optimizer, params.weights.size());
  return TrainState{std::move(params), std::nullopt, 1, 0, std::move(opt),
                    std::mt19937_64(config.seed ^ 0x5eed5eed5eedULL)};
}

StepBatch make_step_batch(const Matrix& labeled_x, std::span<const int> labeled_y,
                          const Matrix& unlabeled_x, const AugmentationPair& aug,
                          std::mt19937_64& rng) {
  const std::uint64_t s_l = rng(), s_w1 = rng(), s_w2 = rng(), s_s = rng();
  StepBatch b;
  b.labeled_x = augment(aug, labeled_x, AugmentKind::weak, s_l);
  b.labeled_y.assign(labeled_y.begin(), labeled_y.end());
  b.weak1 = augment(aug, unlabeled_x, AugmentKind::weak, s_w1);
  b.weak2 = augment(aug, unlabeled_x, AugmentKind::weak, s_w2);
  b.strong = augment(aug, unlabeled_x, AugmentKind::strong, s_s);
  return b;
}

bool past_warmup(int epoch, const TrainConfig& config) noexcept {
  return epoch >= config.warmup_epochs;
}

Objective compute_objective(const ModelParams& params, const std::optional<ReferenceTables>& tables,
                            int epoch, const StepBatch& batch, const TrainConfig& config,
                            Exec exec) {
  const Reduction red = config.reduction;
  const bool ood_head = !config.disable_ood_head;
  const bool calibrate = past_warmup(epoch, config);

  Objective obj;
  LossBreakdown& lb = obj.losses;
  lb.lambda_o = config.lambda_o;
  lb.lambda_ocal = config.lambda_ocal;
  lb.lambda_s = config.lambda_s;

  const ForwardPass labeled = forward(params, batch.labeled_x, exec);
  ViewGrad g_labeled;
  {
    auto ce = loss_ce(labeled.outputs, batch.labeled_y, red);
    lb.l_ce = ce.value;
    g_labeled.accumulate(ce.grad, 1.0);
  }
  if (ood_head) {
    auto ood = loss_ood(labeled.outputs, batch.labeled_y, red);
    lb.l_ood = ood.value;
    g_labeled.accumulate(ood.grad, config.lambda_o);
  }

  std::optional<ForwardPass> weak1, weak2, strong;
  ViewGrad g_weak1, g_weak2, g_strong;
  if (ood_head) {
    weak1 = forward(params, batch.weak1, exec);
    weak2 = forward(params, batch.weak2, exec);
    auto sc = loss_soft_consistency(weak1->outputs, weak2->outputs, red);
    lb.l_sc = sc.value;
    g_weak1.accumulate(sc.first, config.lambda_s);
    g_weak2.accumulate(sc.second, config.lambda_s);
  }

  if (calibrate) {
    const bool mcal = !config.disable_mcal;
    const bool ocal = !config.disable_ocal && ood_head;
    if ((mcal || ocal) && !tables)
      throw std::logic_error("calibration loss requested before any reference table exists");
    if (mcal) {
      auto gammas = lookup_all(tables->gamma, labeled.outputs.p);
      auto term = loss_mcal(labeled.outputs, batch.labeled_y, gammas, red);
      lb.l_mcal = term.value;
      g_labeled.accumulate(term.grad, 1.0);
    }
    if (ocal) {
      auto deltas = lookup_all(tables->delta, labeled.outputs.q);
      auto term =
          loss_ocal(labeled.outputs, batch.labeled_y, deltas, red, config.ocal_min_mode);
      lb.l_ocal = term.value;
      g_labeled.accumulate(term.grad, config.lambda_ocal);
    }
    if (!config.disable_fix) {
      // Gate scores and pseudo-labels come from the weak view and carry no gradient.
      const ModelOutputs weak = weak1 ? weak1->outputs : predict(params, batch.weak1, exec);
      const auto records =
          select_batch(weak, SelectionGate{config.tau1, config.tau2, ood_head}, exec);
      const auto mask = selection_mask(records);
      obj.selected = static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
      strong = forward(params, batch.strong, exec);
      auto fix = loss_fix(weak, strong->outputs, mask, red);
      lb.l_fix = fix.value;
      g_strong.accumulate(fix.grad, 1.0);
    }
  }

  check_finite(lb.l_ce, "L_CE");
  if (lb.l_ood) check_finite(*lb.l_ood, "L_OOD");
  if (lb.l_sc) check_finite(*lb.l_sc, "L_SC");
  if (lb.l_mcal) check_finite(*lb.l_mcal, "L_MCal");
  if (lb.l_ocal) check_finite(*lb.l_ocal, "L_OCal");
  if (lb.l_fix) check_finite(*lb.l_fix, "L_Fix");
  lb.total = lb.weighted_total();
  check_finite(lb.total, "total");

  obj.grad = backward(params, labeled, to_logit_grad(labeled.outputs, g_labeled), exec);
  auto add_pass = [&](const std::optional<ForwardPass>& pass, const ViewGrad& g) {
    if (pass && !g.empty()) obj.grad += backward(params, *pass, to_logit_grad(pass->outputs, g), exec);
  };
  add_pass(weak1, g_weak1);
  add_pass(weak2, g_weak2);
  add_pass(strong, g_strong);
  return obj;
}

double learning_rate_at(long iteration, long total_iterations, const TrainConfig& config) noexcept {
  const long decay_at = config.lr_decay_iteration > 0
                            ? config.lr_decay_iteration
                            : static_cast<long>(0.8 * static_cast<double>(total_iterations));
  return iteration >= decay_at ? config.learning_rate * config.lr_decay_factor
                               : config.learning_rate;
}

Objective train_step(TrainState& state, const Matrix& labeled_x, std::span<const int> labeled_y,
                     const Matrix& unlabeled_x, const TrainConfig& config, double learning_rate,
                     Exec exec) {
  const StepBatch batch =
      make_step_batch(labeled_x, labeled_y, unlabeled_x, augmentation_of(config), state.rng);
  Objective obj = compute_objective(state.params, state.tables, state.epoch, batch, config, exec);
  state.optimizer.step(state.params, obj.grad, learning_rate);
  ++state.iteration;
  return obj;
}

long iterations_per_epoch(const TrainingView& view, const TrainConfig& config) noexcept {
  if (config.iterations_per_epoch > 0) return config.iterations_per_epoch;
  const auto n = static_cast<long>(view.unlabeled.size());
  const long b = config.batch_size_unlabeled;
  return std::max(1L, (n + b - 1) / b);
}

double accuracy(const ModelParams& params, const LabeledSplit& split, Exec exec) {
  if (split.size() == 0) throw ValidationError("accuracy of an empty split");
  const ModelOutputs out = predict(params, split.x, exec);
  std::size_t hits = 0;
  for (std::size_t r = 0; r < split.size(); ++r) {
    auto row = out.p.row(r);
    if (std::max_element(row.begin(), row.end()) - row.begin() == split.labels[r]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(split.size());
}

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string num(const std::optional<double>& v) { return v ? num(*v) : "NA"; }

std::string iteration_csv(const std::vector<IterationRow>& rows) {
  std::ostringstream out;
  out << "iteration,epoch,l_ce,l_ood,l_sc,l_mcal,l_ocal,l_fix,total,lambda_o,lambda_ocal,"
         "lambda_s,selected,learning_rate,t_m,t_o\n";
  for (const auto& r : rows) {
    const auto& l = r.losses;
    out << r.iteration << ',' << r.epoch << ',' << num(l.l_ce) << ',' << num(l.l_ood) << ','
        << num(l.l_sc) << ',' << num(l.l_mcal) << ',' << num(l.l_ocal) << ',' << num(l.l_fix)
        << ',' << num(l.total) << ',' << num(l.lambda_o) << ',' << num(l.lambda_ocal) << ','
        << num(l.lambda_s) << ',' << r.selected << ',' << num(r.learning_rate) << ','
        << num(r.t_m) << ',' << num(r.t_o) << '\n';
  }
  return out.str();
}

std::string epoch_csv(const std::vector<EpochRow>& rows) {
  std::ostringstream out;
  out << "epoch,val_accuracy,t_m,t_o,gamma_populated,gamma_fallback,delta_populated,"
         "delta_fallback,selected,pseudo_label_accuracy,seen_selected_fraction,"
         "unseen_in_confident,unseen_in_confident_low_ood,selection_error\n";
  for (const auto& r : rows) {
    const auto& d = r.diagnostics;
    out << r.epoch << ',' << num(r.val_accuracy) << ',' << num(r.t_m) << ',' << num(r.t_o) << ','
        << r.tables.gamma.populated_bins() << ',' << num(r.tables.gamma.fallback) << ','
        << r.tables.delta.populated_bins() << ',' << num(r.tables.delta.fallback) << ','
        << d.selected << ',' << num(d.pseudo_label_accuracy) << ','
        << num(d.seen_selected_fraction) << ',' << num(d.unseen_in_confident) << ','
        << num(d.unseen_in_confident_low_ood) << ',' << num(d.selection_error) << '\n';
  }
  return out.str();
}

std::string tables_csv(const std::vector<EpochRow>& rows) {
  std::ostringstream out;
  out << "epoch,table,bin,count,value\n";
  for (const auto& r : rows) {
    auto emit = [&](const char* name, const ReferenceTable& t) {
      for (std::size_t b = 0; b < t.values.size(); ++b)
        out << r.epoch << ',' << name << ',' << b + 1 << ',' << t.counts[b] << ','
            << num(t.values[b]) << '\n';
    };
    emit("gamma", r.tables.gamma);
    emit("delta", r.tables.delta);
  }
  return out.str();
}

void check_dataset(const MismatchDataset& data) {
  const auto dim = static_cast<std::size_t>(data.info.dim);
  auto same = [dim](const Matrix& x, const char* split) {
    if (x.rows() > 0 && x.cols() != dim)
      throw ConfigError(std::string(split) + " split has " + std::to_string(x.cols()) +
                        " features, dataset declares " + std::to_string(dim));
  };
  same(data.labeled.x, "labeled");
  same(data.validation.x, "validation");
  same(data.unlabeled.x, "unlabeled");
  same(data.test.x, "test");
  if (data.info.num_seen() < 2) throw ConfigError("dataset needs at least two seen classes");
  if (data.labeled.size() == 0) throw ConfigError("labeled split is empty");
  if (data.validation.size() == 0) throw ConfigError("validation split is empty");
  if (data.unlabeled.size() == 0) throw ConfigError("unlabeled split is empty");
  for (const auto* split : {&data.labeled, &data.validation})
    for (int y : split->labels)
      if (y < 0 || y >= data.info.num_seen())
        throw ConfigError("labeled split holds label " + std::to_string(y) +
                          " outside the seen classes");
}

}  // namespace

TrainResult train(const MismatchDataset& data, const TrainConfig& config,
                  const TrainOptions& options) {
  validate(config);
  check_dataset(data);
  const TrainingView view = data.training_view();

  TrainState state = init_state(view, config);
  TrainResult result{state.params, state.params, 0, -1.0, std::nullopt, {}, {}};
  std::optional<ReferenceTables> best_tables;

  const long per_epoch = iterations_per_epoch(view, config);
  const long total = per_epoch * config.epochs;
  Sampler labeled_sampler(view.labeled.size(), config.seed * 2 + 1);
  Sampler unlabeled_sampler(view.unlabeled.size(), config.seed * 2 + 2);
  const auto bl = static_cast<std::size_t>(config.batch_size_labeled);
  const auto bu = static_cast<std::size_t>(config.batch_size_unlabeled);
  const SelectionGate gate{config.tau1, config.tau2, !config.disable_ood_head};

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    state.epoch = epoch;
    for (long it = 0; it < per_epoch; ++it) {
      const auto li = labeled_sampler.next(bl);
      const auto ui = unlabeled_sampler.next(bu);
      Matrix lx = view.labeled.x.gather_rows(li);
      std::vector<int> ly(li.size());
      for (std::size_t i = 0; i < li.size(); ++i) ly[i] = view.labeled.labels[li[i]];
      Matrix ux = view.unlabeled.x.gather_rows(ui);
      const double lr = learning_rate_at(state.iteration, total, config);
      Objective obj = train_step(state, lx, ly, ux, config, lr, options.exec);
      result.iterations.push_back(IterationRow{state.iteration, epoch, obj.losses, obj.selected,
                                               lr, state.params.t_m, state.params.t_o});
    }

    state.tables = refresh_tables(state.params, view.validation.x, view.validation.labels,
                                  config.bins, options.exec);

    EpochRow row;
    row.epoch = epoch;
    row.t_m = state.params.t_m;
    row.t_o = state.params.t_o;
    row.tables = *state.tables;
    {
      const ModelOutputs out = predict(state.params, data.unlabeled.x, options.exec);
      row.diagnostics =
          selection_diagnostics(select_batch(out, gate, options.exec), data.unlabeled_truth);
    }
    if (epoch % config.eval_period == 0 || epoch == config.epochs) {
      row.val_accuracy = accuracy(state.params, view.validation, options.exec);
      if (*row.val_accuracy >= result.best_val_accuracy) {
        result.best_val_accuracy = *row.val_accuracy;
        result.best_epoch = epoch;
        result.best = state.params;
        best_tables = state.tables;
      }
    }
    if (options.verbose) {
      std::cerr << "epoch " << epoch << "/" << config.epochs
                << " val_acc=" << num(row.val_accuracy) << " t_m=" << row.t_m
                << " t_o=" << row.t_o << " selected=" << row.diagnostics.selected << "\n";
    }
    result.epochs.push_back(std::move(row));
  }

  result.last = state.params;
  result.tables = state.tables;

  if (options.out_dir) {
    const auto& dir = *options.out_dir;
    write_text_file(dir / "log.csv", iteration_csv(result.iterations));
    write_text_file(dir / "epochs.csv", epoch_csv(result.epochs));
    write_text_file(dir / "tables.csv", tables_csv(result.epochs));
    save_checkpoint(dir / "checkpoint-best", result.best, config, best_tables);
    save_checkpoint(dir / "checkpoint-last", result.last, config, result.tables);
  }
  return result;
}

}  // namespace calimatch
