#include "calimatch/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <set>

#include "calimatch/error.hpp"

namespace calimatch {

LabeledSplit MismatchDataset::seen_test() const {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < test.size(); ++i)
    if (test.seen[i]) keep.push_back(i);
  LabeledSplit out;
  out.x = test.x.gather_rows(keep);
  for (auto i : keep) {
    out.labels.push_back(test.labels[i]);
    out.ids.push_back(test.ids[i]);
  }
  return out;
}

namespace {

// Split-specific id ranges keep identifiers unique across splits.
constexpr std::uint64_t kIdStride = 1ULL << 40;
enum SplitTag : std::uint64_t { kLabeledIds = 0, kUnlabeledIds = 1, kTestIds = 2 };

// Independent generator streams per split, so kappa only affects the unlabeled split.
std::mt19937_64 stream(std::uint64_t seed, std::uint64_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tag), 0x9e3779b9U};
  return std::mt19937_64(seq);
}

struct ClassLayout {
  std::vector<std::array<double, 2>> means;  // seen first, then unseen
};

ClassLayout make_layout(const SyntheticSpec& spec) {
  ClassLayout layout;
  const double two_pi = 2.0 * std::numbers::pi;
  for (int j = 0; j < spec.num_seen; ++j) {
    const double a = two_pi * j / spec.num_seen;
    layout.means.push_back({spec.seen_radius * std::cos(a), spec.seen_radius * std::sin(a)});
  }
  for (int j = 0; j < spec.num_unseen; ++j) {
    const double a = two_pi * (j + 0.5) / spec.num_unseen;
    layout.means.push_back({spec.unseen_radius * std::cos(a), spec.unseen_radius * std::sin(a)});
  }
  return layout;
}

void draw_sample(const ClassLayout& layout, int cls, double spread, std::mt19937_64& rng,
                 std::span<double> out) {
  std::normal_distribution<double> noise(0.0, spread);
  for (std::size_t d = 0; d < out.size(); ++d) {
    const double mean = d < 2 ? layout.means[static_cast<std::size_t>(cls)][d] : 0.0;
    out[d] = mean + noise(rng);
  }
}

// Draws one sample per entry of `classes`, in order.
Matrix draw_many(const ClassLayout& layout, const std::vector<int>& classes, int dim,
                 double spread, std::mt19937_64& rng) {
  Matrix x(classes.size(), static_cast<std::size_t>(dim));
  for (std::size_t i = 0; i < classes.size(); ++i)
    draw_sample(layout, classes[i], spread, rng, x.row(i));
  return x;
}

std::vector<int> round_robin(std::size_t n, int first, int count) {
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = first + static_cast<int>(i % count);
  return out;
}

std::vector<std::uint64_t> id_range(std::uint64_t tag, std::size_t n) {
  std::vector<std::uint64_t> ids(n);
  std::iota(ids.begin(), ids.end(), tag * kIdStride);
  return ids;
}

// Splits a labeled pool into training and validation, holding out 10%.
void hold_out_validation(LabeledSplit pool, std::mt19937_64& rng, LabeledSplit& train,
                         LabeledSplit& validation) {
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  auto n_val = static_cast<std::size_t>(std::lround(kValidationFraction * pool.size()));
  n_val = std::clamp<std::size_t>(n_val, 1, pool.size() - 1);
  auto take = [&](std::span<const std::size_t> idx, LabeledSplit& dst) {
    dst.x = pool.x.gather_rows(idx);
    dst.labels.clear();
    dst.ids.clear();
    for (auto i : idx) {
      dst.labels.push_back(pool.labels[i]);
      dst.ids.push_back(pool.ids[i]);
    }
  };
  take(std::span<const std::size_t>(order).first(n_val), validation);
  take(std::span<const std::size_t>(order).subspan(n_val), train);
}

void check_kappa(double kappa, std::size_t num_unseen) {
  if (!(kappa >= 0.0 && kappa <= 1.0)) throw ConfigError("kappa must lie in [0, 1]");
  if (kappa > 0.0 && num_unseen == 0)
    throw ConfigError("kappa > 0 requires at least one unseen class");
}

}  // namespace

MismatchDataset make_synthetic(const SyntheticSpec& spec) {
  if (spec.num_seen < 2) throw ConfigError("need at least two seen classes");
  if (spec.num_unseen < 0) throw ConfigError("unseen class count must be non-negative");
  check_kappa(spec.kappa, static_cast<std::size_t>(spec.num_unseen));
  if (spec.n_labeled < 2 || spec.n_unlabeled < 1 || spec.n_test < 1)
    throw ConfigError("split sizes must be positive (labeled pool at least 2)");
  if (spec.dim < 2) throw ConfigError("synthetic data needs dim >= 2");
  if (!(spec.cluster_spread >= 0.0)) throw ConfigError("cluster_spread must be non-negative");

  const ClassLayout layout = make_layout(spec);
  MismatchDataset data;
  data.info.seed = spec.seed;
  data.info.kappa = spec.kappa;
  data.info.dim = spec.dim;
  for (int j = 0; j < spec.num_seen; ++j) data.info.seen_classes.push_back(j);
  for (int j = 0; j < spec.num_unseen; ++j) data.info.unseen_classes.push_back(spec.num_seen + j);
  const int total_classes = spec.num_seen + spec.num_unseen;

  {
    auto rng = stream(spec.seed, kLabeledIds);
    LabeledSplit pool;
    pool.labels = round_robin(static_cast<std::size_t>(spec.n_labeled), 0, spec.num_seen);
    std::shuffle(pool.labels.begin(), pool.labels.end(), rng);
    pool.x = draw_many(layout, pool.labels, spec.dim, spec.cluster_spread, rng);
    pool.ids = id_range(kLabeledIds, pool.labels.size());
    hold_out_validation(std::move(pool), rng, data.labeled, data.validation);
  }
  {
    auto rng = stream(spec.seed, kUnlabeledIds);
    const auto n = static_cast<std::size_t>(spec.n_unlabeled);
    const auto n_unseen = static_cast<std::size_t>(std::lround(spec.kappa * static_cast<double>(n)));
    std::vector<int> classes = round_robin(n - n_unseen, 0, spec.num_seen);
    if (n_unseen > 0) {
      auto unseen = round_robin(n_unseen, spec.num_seen, spec.num_unseen);
      classes.insert(classes.end(), unseen.begin(), unseen.end());
    }
    std::shuffle(classes.begin(), classes.end(), rng);
    data.unlabeled.x = draw_many(layout, classes, spec.dim, spec.cluster_spread, rng);
    data.unlabeled.ids = id_range(kUnlabeledIds, n);
    data.unlabeled_truth.labels = classes;
    data.unlabeled_truth.seen.resize(n);
    for (std::size_t i = 0; i < n; ++i) data.unlabeled_truth.seen[i] = classes[i] < spec.num_seen;
  }
  {
    auto rng = stream(spec.seed, kTestIds);
    std::vector<int> classes = round_robin(static_cast<std::size_t>(spec.n_test), 0, total_classes);
    std::shuffle(classes.begin(), classes.end(), rng);
    data.test.x = draw_many(layout, classes, spec.dim, spec.cluster_spread, rng);
    data.test.labels = classes;
    data.test.ids = id_range(kTestIds, classes.size());
    data.test.seen.resize(classes.size());
    for (std::size_t i = 0; i < classes.size(); ++i) data.test.seen[i] = classes[i] < spec.num_seen;
  }
  return data;
}

Matrix augment(const AugmentationPair& pair, const Matrix& x, AugmentKind kind,
               std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Matrix out = x;
  const double sigma = kind == AugmentKind::weak ? pair.sigma_weak : pair.sigma_strong;
  if (sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, sigma);
    for (double& v : out.flat()) v += noise(rng);
  }
  if (kind == AugmentKind::strong && pair.dropout > 0.0) {
    std::bernoulli_distribution drop(pair.dropout);
    for (double& v : out.flat())
      if (drop(rng)) v = 0.0;
  }
  return out;
}

MismatchDataset ingest_image_dataset(const ImageIngestSpec& spec) {
#ifndef CALIMATCH_WITH_IMAGE_INGEST
  (void)spec;
  throw ConfigError("this build has image ingestion disabled (CALIMATCH_IMAGE_INGEST=OFF)");
#else
  namespace fs = std::filesystem;
  if (spec.record_bytes < 2) throw ConfigError("record_bytes must cover a label and pixels");
  if (spec.num_classes < 2) throw ConfigError("num_classes must be at least 2");
  if (spec.seen_classes.size() < 2) throw ConfigError("need at least two seen classes");
  if (spec.labels_per_class < 1 || spec.n_unlabeled < 1 || spec.test_per_class < 0)
    throw ConfigError("requested counts must be positive");
  std::set<int> seen_set;
  for (int c : spec.seen_classes) {
    if (c < 0 || c >= spec.num_classes)
      throw ConfigError("seen class " + std::to_string(c) + " outside [0, num_classes)");
    if (!seen_set.insert(c).second) throw ConfigError("duplicate seen class " + std::to_string(c));
  }
  std::vector<int> unseen;
  for (int c = 0; c < spec.num_classes; ++c)
    if (!seen_set.count(c)) unseen.push_back(c);
  check_kappa(spec.kappa, unseen.size());

  if (!fs::is_directory(spec.directory))
    throw IngestionError("image directory not found: " + spec.directory.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(spec.directory))
    if (entry.is_regular_file() && entry.path().extension() == ".bin") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IngestionError("no .bin record files in " + spec.directory.string());

  const std::size_t dim = spec.record_bytes - 1;
  std::vector<std::vector<unsigned char>> pixels;
  std::vector<int> record_label;
  std::map<int, std::vector<std::size_t>> by_class;
  for (const auto& f : files) {
    std::ifstream in(f, std::ios::binary);
    if (!in) throw IngestionError("cannot open " + f.string());
    std::vector<unsigned char> rec(spec.record_bytes);
    while (in.read(reinterpret_cast<char*>(rec.data()), static_cast<std::streamsize>(rec.size()))) {
      const int label = rec[0];
      if (label >= spec.num_classes)
        throw IngestionError("record label " + std::to_string(label) + " in " + f.string() +
                             " exceeds num_classes");
      by_class[label].push_back(pixels.size());
      record_label.push_back(label);
      pixels.emplace_back(rec.begin() + 1, rec.end());
    }
    if (in.gcount() != 0) throw IngestionError("truncated record in " + f.string());
  }

  const auto n_u = static_cast<std::size_t>(spec.n_unlabeled);
  const auto n_unseen = static_cast<std::size_t>(std::lround(spec.kappa * static_cast<double>(n_u)));
  std::map<int, std::size_t> unlabeled_quota;
  for (std::size_t i = 0; i < n_u - n_unseen; ++i)
    ++unlabeled_quota[spec.seen_classes[i % spec.seen_classes.size()]];
  for (std::size_t i = 0; i < n_unseen; ++i) ++unlabeled_quota[unseen[i % unseen.size()]];

  // Per-class shuffles depend only on (seed, class): labeled and test picks do not move with kappa.
  std::map<int, std::vector<std::size_t>> shuffled;
  for (int c = 0; c < spec.num_classes; ++c) {
    auto pool = by_class[c];
    auto rng = stream(spec.seed, 16 + static_cast<std::uint64_t>(c));
    std::shuffle(pool.begin(), pool.end(), rng);
    const std::size_t labeled = seen_set.count(c) ? static_cast<std::size_t>(spec.labels_per_class) : 0;
    const std::size_t need =
        labeled + static_cast<std::size_t>(spec.test_per_class) + unlabeled_quota[c];
    if (pool.size() < need)
      throw IngestionError("class " + std::to_string(c) + " has " + std::to_string(pool.size()) +
                           " records but " + std::to_string(need) + " were requested");
    shuffled[c] = std::move(pool);
  }

  auto feature_row = [&](std::size_t idx, std::span<double> out) {
    const auto& px = pixels[idx];
    for (std::size_t d = 0; d < dim; ++d) out[d] = spec.scale_pixels ? px[d] / 255.0 : px[d];
  };
  std::map<int, int> model_index;
  for (std::size_t j = 0; j < spec.seen_classes.size(); ++j)
    model_index[spec.seen_classes[j]] = static_cast<int>(j);
  for (std::size_t j = 0; j < unseen.size(); ++j)
    model_index[unseen[j]] = static_cast<int>(spec.seen_classes.size() + j);

  MismatchDataset data;
  data.info.seed = spec.seed;
  data.info.kappa = spec.kappa;
  data.info.dim = static_cast<int>(dim);
  data.info.seen_classes = spec.seen_classes;
  data.info.unseen_classes = unseen;
  data.info.source = "image:" + spec.directory.string();

  std::vector<std::size_t> labeled_idx, test_idx, unlabeled_idx;
  for (int c = 0; c < spec.num_classes; ++c) {
    const auto& pool = shuffled[c];
    std::size_t at = 0;
    if (seen_set.count(c))
      for (int i = 0; i < spec.labels_per_class; ++i) labeled_idx.push_back(pool[at++]);
    for (int i = 0; i < spec.test_per_class; ++i) test_idx.push_back(pool[at++]);
    for (std::size_t i = 0; i < unlabeled_quota[c]; ++i) unlabeled_idx.push_back(pool[at++]);
  }
  auto label_of = [&](std::size_t idx) { return record_label[idx]; };

  {
    auto rng = stream(spec.seed, kLabeledIds);
    LabeledSplit pool;
    pool.x = Matrix(labeled_idx.size(), dim);
    for (std::size_t i = 0; i < labeled_idx.size(); ++i) {
      feature_row(labeled_idx[i], pool.x.row(i));
      pool.labels.push_back(model_index[label_of(labeled_idx[i])]);
      pool.ids.push_back(labeled_idx[i]);
    }
    hold_out_validation(std::move(pool), rng, data.labeled, data.validation);
  }
  {
    auto rng = stream(spec.seed, kUnlabeledIds);
    std::shuffle(unlabeled_idx.begin(), unlabeled_idx.end(), rng);
    data.unlabeled.x = Matrix(unlabeled_idx.size(), dim);
    for (std::size_t i = 0; i < unlabeled_idx.size(); ++i) {
      feature_row(unlabeled_idx[i], data.unlabeled.x.row(i));
      data.unlabeled.ids.push_back(unlabeled_idx[i]);
      const int c = label_of(unlabeled_idx[i]);
      data.unlabeled_truth.labels.push_back(model_index[c]);
      data.unlabeled_truth.seen.push_back(seen_set.count(c) > 0);
    }
  }
  data.test.x = Matrix(test_idx.size(), dim);
  for (std::size_t i = 0; i < test_idx.size(); ++i) {
    feature_row(test_idx[i], data.test.x.row(i));
    const int c = label_of(test_idx[i]);
    data.test.labels.push_back(model_index[c]);
    data.test.seen.push_back(seen_set.count(c) > 0);
    data.test.ids.push_back(test_idx[i]);
  }
  return data;
#endif
}

}  // namespace calimatch
