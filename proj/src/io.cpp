#include "calimatch/io.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "calimatch/error.hpp"

namespace calimatch {

static_assert(std::endian::native == std::endian::little,
              "split files are written in native order and assume little-endian hosts");

namespace fs = std::filesystem;

std::uint64_t fnv1a64(std::span<const unsigned char> bytes, std::uint64_t seed) noexcept {
  std::uint64_t h = seed;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

namespace {

constexpr char kMagic[8] = {'C', 'M', 'S', 'P', 'L', 'I', 'T', '1'};
constexpr std::uint32_t kFloat64 = 1;

struct SplitRecord {
  const Matrix* x = nullptr;  // null for truth-only files
  std::size_t count = 0;
  std::vector<std::uint64_t> ids;
  std::vector<std::int32_t> labels;
  std::vector<std::uint8_t> seen;
};

template <typename T>
void put(std::string& buf, const T& v) {
  const auto* p = reinterpret_cast<const char*>(&v);
  buf.append(p, sizeof(T));
}

template <typename T>
void put_array(std::string& buf, const std::vector<T>& v) {
  buf.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(T));
}

std::string encode(const SplitRecord& rec) {
  std::string buf(kMagic, sizeof kMagic);
  const std::uint32_t dim = rec.x ? static_cast<std::uint32_t>(rec.x->cols()) : 0;
  put(buf, dim);
  put(buf, kFloat64);
  put(buf, static_cast<std::uint64_t>(rec.count));
  if (rec.x) put_array(buf, rec.x->storage());
  put_array(buf, rec.ids);
  put_array(buf, rec.labels);
  put_array(buf, rec.seen);
  return buf;
}

struct DecodedSplit {
  Matrix x;
  std::vector<std::uint64_t> ids;
  std::vector<std::int32_t> labels;
  std::vector<std::uint8_t> seen;
};

class Reader {
 public:
  Reader(std::string bytes, std::string name) : bytes_(std::move(bytes)), name_(std::move(name)) {}

  template <typename T>
  T get() {
    T v;
    take(&v, sizeof(T));
    return v;
  }
  template <typename T>
  std::vector<T> get_array(std::size_t n) {
    std::vector<T> v(n);
    take(v.data(), n * sizeof(T));
    return v;
  }
  void take(void* dst, std::size_t n) {
    if (at_ + n > bytes_.size()) throw IoError("truncated split file " + name_);
    std::memcpy(dst, bytes_.data() + at_, n);
    at_ += n;
  }
  bool done() const { return at_ == bytes_.size(); }

 private:
  std::string bytes_;
  std::string name_;
  std::size_t at_ = 0;
};

DecodedSplit decode(const fs::path& path) {
  Reader r(read_text_file(path), path.string());
  char magic[8];
  r.take(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw IoError("bad magic in split file " + path.string());
  const auto dim = r.get<std::uint32_t>();
  const auto dtype = r.get<std::uint32_t>();
  const auto count = r.get<std::uint64_t>();
  if (dtype != kFloat64) throw IoError("unsupported dtype in " + path.string());
  DecodedSplit out;
  out.x = Matrix(count, dim, r.get_array<double>(count * dim));
  out.ids = r.get_array<std::uint64_t>(count);
  out.labels = r.get_array<std::int32_t>(count);
  out.seen = r.get_array<std::uint8_t>(count);
  if (!r.done()) throw IoError("trailing bytes in split file " + path.string());
  return out;
}

SplitRecord labeled_record(const LabeledSplit& s) {
  SplitRecord rec{&s.x, s.size(), s.ids, {}, std::vector<std::uint8_t>(s.size(), 1)};
  rec.labels.assign(s.labels.begin(), s.labels.end());
  return rec;
}

LabeledSplit labeled_from(DecodedSplit d) {
  LabeledSplit s;
  s.x = std::move(d.x);
  s.ids = std::move(d.ids);
  s.labels.assign(d.labels.begin(), d.labels.end());
  return s;
}

const std::vector<std::pair<std::string, std::string>>& split_files() {
  static const std::vector<std::pair<std::string, std::string>> files{
      {"labeled", "labeled.bin"},
      {"validation", "validation.bin"},
      {"unlabeled", "unlabeled.bin"},
      {"unlabeled_truth", "unlabeled_truth.bin"},
      {"test", "test.bin"}};
  return files;
}

std::string checksum_of(const std::vector<std::string>& blobs) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& b : blobs)
    h = fnv1a64({reinterpret_cast<const unsigned char*>(b.data()), b.size()}, h);
  return hex64(h);
}

}  // namespace

DatasetFiles save_dataset(const MismatchDataset& data, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  SplitRecord unlabeled{&data.unlabeled.x, data.unlabeled.size(), data.unlabeled.ids,
                        std::vector<std::int32_t>(data.unlabeled.size(), -1),
                        std::vector<std::uint8_t>(data.unlabeled.size(), 0)};
  SplitRecord truth{nullptr, data.unlabeled.size(), data.unlabeled.ids, {}, {}};
  truth.labels.assign(data.unlabeled_truth.labels.begin(), data.unlabeled_truth.labels.end());
  truth.seen.assign(data.unlabeled_truth.seen.begin(), data.unlabeled_truth.seen.end());
  SplitRecord test{&data.test.x, data.test.size(), data.test.ids, {}, {}};
  test.labels.assign(data.test.labels.begin(), data.test.labels.end());
  test.seen.assign(data.test.seen.begin(), data.test.seen.end());

  const std::vector<std::string> blobs{encode(labeled_record(data.labeled)),
                                       encode(labeled_record(data.validation)), encode(unlabeled),
                                       encode(truth), encode(test)};
  nlohmann::json files = nlohmann::json::object();
  for (std::size_t i = 0; i < blobs.size(); ++i) {
    const auto& [key, name] = split_files()[i];
    write_text_file(dir / name, blobs[i]);
    files[key] = name;
  }

  const std::string checksum = checksum_of(blobs);
  nlohmann::json manifest{
      {"format", "calimatch-dataset/1"},
      {"seed", data.info.seed},
      {"kappa", data.info.kappa},
      {"dim", data.info.dim},
      {"source", data.info.source},
      {"seen_classes", data.info.seen_classes},
      {"unseen_classes", data.info.unseen_classes},
      {"counts",
       {{"labeled", data.labeled.size()},
        {"validation", data.validation.size()},
        {"unlabeled", data.unlabeled.size()},
        {"test", data.test.size()}}},
      {"files", files},
      {"checksum", checksum}};
  const fs::path manifest_path = dir / "manifest.json";
  write_text_file(manifest_path, manifest.dump(2) + "\n");
  return {manifest_path, checksum};
}

namespace {

nlohmann::json read_manifest(const fs::path& manifest) {
  try {
    return nlohmann::json::parse(read_text_file(manifest));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed dataset manifest " + manifest.string() + ": " + e.what());
  }
}

}  // namespace

std::string dataset_checksum(const fs::path& manifest) {
  const auto doc = read_manifest(manifest);
  std::vector<std::string> blobs;
  for (const auto& [key, name] : split_files())
    blobs.push_back(read_text_file(manifest.parent_path() / doc.at("files").at(key).get<std::string>()));
  return checksum_of(blobs);
}

MismatchDataset load_dataset(const fs::path& manifest) {
  const auto doc = read_manifest(manifest);
  const fs::path dir = manifest.parent_path();
  MismatchDataset data;
  try {
    data.info.seed = doc.at("seed").get<std::uint64_t>();
    data.info.kappa = doc.at("kappa").get<double>();
    data.info.dim = doc.at("dim").get<int>();
    data.info.source = doc.at("source").get<std::string>();
    data.info.seen_classes = doc.at("seen_classes").get<std::vector<int>>();
    data.info.unseen_classes = doc.at("unseen_classes").get<std::vector<int>>();
    auto file = [&](const char* key) { return dir / doc.at("files").at(key).get<std::string>(); };

    data.labeled = labeled_from(decode(file("labeled")));
    data.validation = labeled_from(decode(file("validation")));
    auto unlabeled = decode(file("unlabeled"));
    data.unlabeled.x = std::move(unlabeled.x);
    data.unlabeled.ids = std::move(unlabeled.ids);
    auto truth = decode(file("unlabeled_truth"));
    data.unlabeled_truth.labels.assign(truth.labels.begin(), truth.labels.end());
    data.unlabeled_truth.seen.assign(truth.seen.begin(), truth.seen.end());
    auto test = decode(file("test"));
    data.test.x = std::move(test.x);
    data.test.ids = std::move(test.ids);
    data.test.labels.assign(test.labels.begin(), test.labels.end());
    data.test.seen.assign(test.seen.begin(), test.seen.end());

    if (dataset_checksum(manifest) != doc.at("checksum").get<std::string>())
      throw IoError("checksum mismatch for dataset " + manifest.string());
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed dataset manifest " + manifest.string() + ": " + e.what());
  }
  return data;
}

}  // namespace calimatch
