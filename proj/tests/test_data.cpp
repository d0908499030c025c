#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "calimatch/data.hpp"
#include "calimatch/error.hpp"
#include "calimatch/io.hpp"

using namespace calimatch;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("calimatch_test_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("synthetic split sizes, labels and kappa") {
  SyntheticSpec spec;
  spec.seed = 3;
  auto d = make_synthetic(spec);
  CHECK(d.labeled.size() + d.validation.size() == 300);
  CHECK(d.validation.size() == 30);
  CHECK(d.unlabeled.size() == 5000);
  CHECK(d.test.size() == 2000);
  CHECK(d.info.num_seen() == 6);
  for (int y : d.labeled.labels) CHECK((y >= 0 && y < 6));
  for (int y : d.validation.labels) CHECK((y >= 0 && y < 6));
  std::size_t unseen = 0;
  for (bool s : d.unlabeled_truth.seen) unseen += !s;
  CHECK(unseen == 3000);
  std::size_t seen_test = 0;
  for (std::size_t i = 0; i < d.test.size(); ++i) {
    CHECK(d.test.seen[i] == (d.test.labels[i] < 6));
    seen_test += d.test.seen[i];
  }
  CHECK(d.seen_test().size() == seen_test);
  CHECK(seen_test == 1200);

  std::set<std::uint64_t> ids;
  for (auto i : d.labeled.ids) ids.insert(i);
  for (auto i : d.validation.ids) ids.insert(i);
  for (auto i : d.unlabeled.ids) ids.insert(i);
  for (auto i : d.test.ids) ids.insert(i);
  CHECK(ids.size() == 300 + 5000 + 2000);
}

TEST_CASE("kappa only changes the unlabeled split") {
  SyntheticSpec a, b;
  a.kappa = 0.3;
  b.kappa = 0.75;
  auto da = make_synthetic(a);
  auto db = make_synthetic(b);
  CHECK(da.labeled.x == db.labeled.x);
  CHECK(da.validation.labels == db.validation.labels);
  CHECK(da.test.x == db.test.x);
  CHECK_FALSE(da.unlabeled.x == db.unlabeled.x);
  a.kappa = 1.5;
  CHECK_THROWS_AS(make_synthetic(a), ConfigError);
  b.num_unseen = 0;
  CHECK_THROWS_AS(make_synthetic(b), ConfigError);
  b.kappa = 0.0;
  CHECK_NOTHROW(make_synthetic(b));
}

TEST_CASE("generation is deterministic in the seed") {
  SyntheticSpec s;
  s.seed = 8;
  auto a = make_synthetic(s);
  auto b = make_synthetic(s);
  CHECK(a.unlabeled.x == b.unlabeled.x);
  CHECK(a.unlabeled_truth.labels == b.unlabeled_truth.labels);
  s.seed = 9;
  CHECK_FALSE(make_synthetic(s).labeled.x == a.labeled.x);
}

TEST_CASE("augmentation") {
  Matrix x(200, 5, 1.0);
  AugmentationPair aug{0.1, 0.4, 0.2};
  auto w1 = augment(aug, x, AugmentKind::weak, 1);
  auto w2 = augment(aug, x, AugmentKind::weak, 1);
  auto w3 = augment(aug, x, AugmentKind::weak, 2);
  CHECK(w1 == w2);
  CHECK_FALSE(w1 == w3);
  auto s = augment(aug, x, AugmentKind::strong, 3);
  std::size_t zeros = 0;
  for (double v : s.flat()) zeros += v == 0.0;
  CHECK(zeros > 100);
  CHECK(zeros < 300);
  for (double v : w1.flat()) CHECK(v != 0.0);
  AugmentationPair none{0.0, 0.0, 0.0};
  CHECK(augment(none, x, AugmentKind::strong, 4) == x);
}

TEST_CASE("dataset round trip and checksum") {
  SyntheticSpec spec;
  spec.seed = 5;
  spec.n_unlabeled = 400;
  spec.n_test = 100;
  auto d = make_synthetic(spec);
  const auto dir = scratch("roundtrip");
  auto files = save_dataset(d, dir);
  auto back = load_dataset(files.manifest);
  CHECK(back.labeled.x == d.labeled.x);
  CHECK(back.labeled.labels == d.labeled.labels);
  CHECK(back.validation.ids == d.validation.ids);
  CHECK(back.unlabeled.x == d.unlabeled.x);
  CHECK(back.unlabeled_truth.labels == d.unlabeled_truth.labels);
  CHECK(back.unlabeled_truth.seen == d.unlabeled_truth.seen);
  CHECK(back.test.labels == d.test.labels);
  CHECK(back.test.seen == d.test.seen);
  CHECK(back.info.kappa == d.info.kappa);
  CHECK(back.info.seen_classes == d.info.seen_classes);
  CHECK(dataset_checksum(files.manifest) == files.checksum);

  // Same seed into a second directory: identical checksum.
  const auto dir2 = scratch("roundtrip2");
  CHECK(save_dataset(make_synthetic(spec), dir2).checksum == files.checksum);

  // Tampering is detected.
  {
    std::fstream f(dir / "test.bin", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(40);
    f.put('\x7f');
  }
  CHECK_THROWS_AS(load_dataset(files.manifest), IoError);
  CHECK_THROWS_AS(load_dataset(dir / "missing.json"), IoError);
  fs::remove_all(dir);
  fs::remove_all(dir2);
}

TEST_CASE("FNV-1a reference values") {
  auto bytes = [](const std::string& s) {
    return std::span<const unsigned char>(reinterpret_cast<const unsigned char*>(s.data()), s.size());
  };
  CHECK(fnv1a64(bytes("")) == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64(bytes("a")) == 0xaf63dc4c8601ec8cULL);
  CHECK(hex64(0xaf63dc4c8601ec8cULL) == "af63dc4c8601ec8c");
}

TEST_CASE("image record ingestion") {
  const auto dir = scratch("images");
  fs::create_directories(dir);
  ImageIngestSpec spec;
  spec.directory = dir;
  spec.record_bytes = 5;  // label + 4 pixels
  spec.seen_classes = {0, 1};
  spec.num_classes = 3;
  spec.labels_per_class = 4;
  spec.n_unlabeled = 6;
  spec.test_per_class = 2;
  spec.kappa = 0.5;
  {
    std::ofstream f(dir / "batch.bin", std::ios::binary);
    for (int cls = 0; cls < 3; ++cls)
      for (int i = 0; i < 12; ++i) {
        const unsigned char rec[5] = {static_cast<unsigned char>(cls), static_cast<unsigned char>(i),
                                      10, 20, 255};
        f.write(reinterpret_cast<const char*>(rec), 5);
      }
  }
#ifdef CALIMATCH_TEST_IMAGE_INGEST
  auto d = ingest_image_dataset(spec);
  CHECK(d.info.dim == 4);
  CHECK(d.labeled.size() + d.validation.size() == 8);
  CHECK(d.unlabeled.size() == 6);
  std::size_t unseen = 0;
  for (bool s : d.unlabeled_truth.seen) unseen += !s;
  CHECK(unseen == 3);
  CHECK(d.test.size() == 6);
  for (double v : d.labeled.x.flat()) CHECK((v >= 0.0 && v <= 1.0));

  spec.labels_per_class = 20;
  try {
    ingest_image_dataset(spec);
    FAIL("expected IngestionError");
  } catch (const IngestionError& e) {
    CHECK(std::string(e.what()).find("class") != std::string::npos);
  }
#else
  CHECK_THROWS_AS(ingest_image_dataset(spec), ConfigError);
#endif
  fs::remove_all(dir);
}
