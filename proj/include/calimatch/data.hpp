#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "calimatch/matrix.hpp"
#include "calimatch/selection.hpp"

namespace calimatch {

inline constexpr double kValidationFraction = 0.1;

/// Labeled samples; labels are model class indices 0..K-1.
struct LabeledSplit {
  Matrix x;
  std::vector<int> labels;
  std::vector<std::uint64_t> ids;

  std::size_t size() const noexcept { return labels.size(); }
};

/// Unlabeled features as the training loop sees them: no truth fields.
struct UnlabeledSplit {
  Matrix x;
  std::vector<std::uint64_t> ids;

  std::size_t size() const noexcept { return ids.size(); }
};

/// Test samples over all classes. Unseen classes carry labels >= K.
struct TestSplit {
  Matrix x;
  std::vector<int> labels;
  std::vector<bool> seen;
  std::vector<std::uint64_t> ids;

  std::size_t size() const noexcept { return labels.size(); }
};

struct DatasetInfo {
  std::uint64_t seed = 0;
  double kappa = 0.0;
  int dim = 0;
  std::vector<int> seen_classes;    // source class ids, position = model index
  std::vector<int> unseen_classes;  // source class ids, position + K = truth index
  std::string source = "synthetic";

  int num_seen() const noexcept { return static_cast<int>(seen_classes.size()); }
};

/// The read-only inputs of the training loop.
struct TrainingView {
  const LabeledSplit& labeled;
  const UnlabeledSplit& unlabeled;
  const LabeledSplit& validation;
  int num_classes;
  int dim;
};

struct MismatchDataset {
  DatasetInfo info;
  LabeledSplit labeled;
  LabeledSplit validation;
  UnlabeledSplit unlabeled;
  HiddenTruth unlabeled_truth;
  TestSplit test;

  TrainingView training_view() const {
    return {labeled, unlabeled, validation, info.num_seen(), info.dim};
  }
  /// Test samples whose class is seen; classification metrics use these.
  LabeledSplit seen_test() const;
};

struct SyntheticSpec {
  std::uint64_t seed = 0;
  int num_seen = 6;
  int num_unseen = 4;
  double kappa = 0.6;
  int n_labeled = 300;  // labeled pool before the validation hold-out
  int n_unlabeled = 5000;
  int n_test = 2000;
  int dim = 2;
  double cluster_spread = 0.5;
  double seen_radius = 2.0;
  double unseen_radius = 3.5;
};

/// Gaussian class clusters. Seen means sit on a circle in the first two
/// coordinates, unseen means on a larger circle at interleaved angles; any
/// further coordinates are pure noise with the same spread.
MismatchDataset make_synthetic(const SyntheticSpec& spec);

enum class AugmentKind { weak, strong };

struct AugmentationPair {
  double sigma_weak = 0.1;
  double sigma_strong = 0.4;
  double dropout = 0.2;  // strong only; dropped coordinates are zeroed
};

/// Weak: x + N(0, sigma_weak^2). Strong: x + N(0, sigma_strong^2), then each
/// coordinate zeroed with probability `dropout`. Deterministic in `seed`.
Matrix augment(const AugmentationPair& pair, const Matrix& x, AugmentKind kind,
               std::uint64_t seed);

struct ImageIngestSpec {
  std::filesystem::path directory;
  std::uint64_t seed = 0;
  std::vector<int> seen_classes{2, 3, 4, 5, 6, 7};
  int num_classes = 10;
  double kappa = 0.6;
  int labels_per_class = 400;
  int n_unlabeled = 20000;
  int test_per_class = 100;
  std::size_t record_bytes = 3073;  // one label byte + 32x32x3 pixels
  bool scale_pixels = true;         // map bytes to [0, 1]
};

/// Reads every `*.bin` file of fixed-size records (label byte, then pixels)
/// under `directory`. IngestionError names the class that runs short.
MismatchDataset ingest_image_dataset(const ImageIngestSpec& spec);

}  // namespace calimatch
