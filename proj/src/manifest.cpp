#include "calimatch/manifest.hpp"

#include <chrono>
#include <ctime>

#include "calimatch/io.hpp"
#include "calimatch/version.hpp"

namespace calimatch {

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

RunManifest start_manifest(const std::string& command, const TrainConfig& config) {
  RunManifest m;
  m.command = command;
  m.config = to_json(config);
  m.config_hash = config_hash(config);
  m.seed = config.seed;
  m.version = kVersion;
  m.source_dirty = kSourceDirty;
  m.started_at = utc_timestamp();
  return m;
}

nlohmann::json to_json(const RunManifest& m) {
  return {{"command", m.command},         {"config_hash", m.config_hash},
          {"config", m.config},           {"seed", m.seed},
          {"version", m.version},         {"source_dirty", m.source_dirty},
          {"started_at", m.started_at},   {"finished_at", m.finished_at},
          {"artifacts", m.artifacts}};
}

RunManifest manifest_from_json(const nlohmann::json& doc) {
  RunManifest m;
  m.command = doc.at("command").get<std::string>();
  m.config_hash = doc.at("config_hash").get<std::string>();
  m.config = doc.at("config");
  m.seed = doc.at("seed").get<std::uint64_t>();
  m.version = doc.at("version").get<std::string>();
  m.source_dirty = doc.at("source_dirty").get<bool>();
  m.started_at = doc.at("started_at").get<std::string>();
  m.finished_at = doc.at("finished_at").get<std::string>();
  m.artifacts = doc.at("artifacts").get<std::map<std::string, std::string>>();
  return m;
}

void finish_manifest(RunManifest& manifest, const std::filesystem::path& dir) {
  manifest.finished_at = utc_timestamp();
  write_text_file(dir / "manifest.json", to_json(manifest).dump(2) + "\n");
}

}  // namespace calimatch
