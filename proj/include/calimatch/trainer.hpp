#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "calimatch/calibration.hpp"
#include "calimatch/config.hpp"
#include "calimatch/data.hpp"
#include "calimatch/objectives.hpp"
#include "calimatch/optimizer.hpp"
#include "calimatch/selection.hpp"

namespace calimatch {

struct TrainState {
  ModelParams params;
  std::optional<ReferenceTables> tables;  // present from the end of epoch 1
  int epoch = 1;                          // 1-based
  long iteration = 0;                     // completed steps
  Optimizer optimizer;
  std::mt19937_64 rng;
};

TrainState init_state(const TrainingView& view, const TrainConfig& config);

/// One step's inputs after augmentation. Unlabeled views may be empty when
/// the configuration never reads them.
struct StepBatch {
  Matrix labeled_x;
  std::vector<int> labeled_y;
  Matrix weak1;
  Matrix weak2;
  Matrix strong;
};

StepBatch make_step_batch(const Matrix& labeled_x, std::span<const int> labeled_y,
                          const Matrix& unlabeled_x, const AugmentationPair& aug,
                          std::mt19937_64& rng);

struct Objective {
  LossBreakdown losses;
  ParamGrad grad;
  std::size_t selected = 0;
};

/// True once the calibration and pseudo-label terms are active.
bool past_warmup(int epoch, const TrainConfig& config) noexcept;

/// Total loss and its gradient for one batch without touching any state.
Objective compute_objective(const ModelParams& params, const std::optional<ReferenceTables>& tables,
                            int epoch, const StepBatch& batch, const TrainConfig& config,
                            Exec exec = Exec::parallel);

/// Learning rate after the step-decay schedule.
double learning_rate_at(long iteration, long total_iterations, const TrainConfig& config) noexcept;

/// Draws views, evaluates the objective, takes one optimizer step and clamps
/// the temperatures. NumericError names the first non-finite loss term.
Objective train_step(TrainState& state, const Matrix& labeled_x, std::span<const int> labeled_y,
                     const Matrix& unlabeled_x, const TrainConfig& config, double learning_rate,
                     Exec exec = Exec::parallel);

struct IterationRow {
  long iteration = 0;
  int epoch = 0;
  LossBreakdown losses;
  std::size_t selected = 0;
  double learning_rate = 0.0;
  double t_m = 0.0;
  double t_o = 0.0;
};

struct EpochRow {
  int epoch = 0;
  std::optional<double> val_accuracy;
  double t_m = 0.0;
  double t_o = 0.0;
  ReferenceTables tables;
  SelectionDiagnostics diagnostics;
};

struct TrainOptions {
  std::optional<std::filesystem::path> out_dir;
  Exec exec = Exec::parallel;
  bool verbose = false;
};

struct TrainResult {
  ModelParams last;
  ModelParams best;
  int best_epoch = 0;
  double best_val_accuracy = -1.0;
  std::optional<ReferenceTables> tables;
  std::vector<IterationRow> iterations;
  std::vector<EpochRow> epochs;
};

long iterations_per_epoch(const TrainingView& view, const TrainConfig& config) noexcept;

/// Full training loop. With an output directory it writes log.csv,
/// epochs.csv, tables.csv, checkpoint-best and checkpoint-last.
TrainResult train(const MismatchDataset& data, const TrainConfig& config,
                  const TrainOptions& options = {});

double accuracy(const ModelParams& params, const LabeledSplit& split, Exec exec = Exec::parallel);

}  // namespace calimatch
