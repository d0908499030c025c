#include "calimatch/checkpoint.hpp"

#include "calimatch/error.hpp"
#include "calimatch/io.hpp"

namespace calimatch {

namespace {

constexpr const char* kFormat = "calimatch-checkpoint/1";

nlohmann::json arch_json(const ModelArch& arch) {
  return {{"input_dim", arch.input_dim},
          {"hidden_dims", arch.hidden_dims},
          {"num_classes", arch.num_classes},
          {"activation", to_string(arch.activation)}};
}

ModelArch arch_from_json(const nlohmann::json& doc) {
  ModelArch arch;
  arch.input_dim = doc.at("input_dim").get<int>();
  arch.hidden_dims = doc.at("hidden_dims").get<std::vector<int>>();
  arch.num_classes = doc.at("num_classes").get<int>();
  arch.activation = activation_from_string(doc.at("activation").get<std::string>());
  return arch;
}

}  // namespace

nlohmann::json to_json(const ReferenceTable& table) {
  return {{"bins", table.bins},
          {"values", table.values},
          {"counts", table.counts},
          {"fallback", table.fallback}};
}

ReferenceTable reference_table_from_json(const nlohmann::json& doc) {
  ReferenceTable t;
  t.bins = doc.at("bins").get<int>();
  t.values = doc.at("values").get<std::vector<double>>();
  t.counts = doc.at("counts").get<std::vector<std::size_t>>();
  t.fallback = doc.at("fallback").get<double>();
  if (t.bins < 1 || t.values.size() != static_cast<std::size_t>(t.bins) ||
      t.counts.size() != t.values.size())
    throw ValidationError("reference table has inconsistent bin counts");
  t.edges.resize(static_cast<std::size_t>(t.bins) + 1);
  for (int m = 0; m <= t.bins; ++m) t.edges[m] = static_cast<double>(m) / t.bins;
  return t;
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                     const TrainConfig& config, const std::optional<ReferenceTables>& tables) {
  nlohmann::json doc;
  doc["format"] = kFormat;
  doc["arch"] = arch_json(params.arch);
  doc["t_m"] = params.t_m;
  doc["t_o"] = params.t_o;
  doc["weights"] = params.weights;
  doc["config"] = to_json(config);
  doc["config_hash"] = config_hash(config);
  if (tables)
    doc["tables"] = {{"gamma", to_json(tables->gamma)}, {"delta", to_json(tables->delta)}};
  else
    doc["tables"] = nullptr;
  write_text_file(path, doc.dump() + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("checkpoint " + path.string() + " is not valid JSON: " + e.what());
  }
  try {
    if (doc.value("format", "") != kFormat)
      throw IoError("checkpoint " + path.string() + " has unknown format");
    ModelParams params(arch_from_json(doc.at("arch")));
    params.weights = doc.at("weights").get<std::vector<double>>();
    if (params.weights.size() != params.layout.total)
      throw IoError("checkpoint " + path.string() + " holds " +
                    std::to_string(params.weights.size()) + " weights, architecture needs " +
                    std::to_string(params.layout.total));
    params.t_m = doc.at("t_m").get<double>();
    params.t_o = doc.at("t_o").get<double>();
    TrainConfig config = config_from_json(doc.at("config"));
    std::optional<ReferenceTables> tables;
    if (!doc.at("tables").is_null())
      tables = ReferenceTables{reference_table_from_json(doc["tables"].at("gamma")),
                               reference_table_from_json(doc["tables"].at("delta"))};
    return Checkpoint{std::move(params), std::move(config), doc.at("config_hash").get<std::string>(),
                      std::move(tables)};
  } catch (const nlohmann::json::exception& e) {
    throw IoError("checkpoint " + path.string() + " is malformed: " + e.what());
  }
}

}  // namespace calimatch
