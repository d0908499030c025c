#pragma once

// manifest.json written once per run output directory.

#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

#include "calimatch/config.hpp"

namespace calimatch {

struct RunManifest {
  std::string command;
  std::string config_hash;
  nlohmann::json config;  // stored so the hash can be recomputed
  std::uint64_t seed = 0;
  std::string version;
  bool source_dirty = false;
  std::string started_at;   // UTC, ISO 8601
  std::string finished_at;
  std::map<std::string, std::string> artifacts;  // name -> path relative to the manifest
};

std::string utc_timestamp();

/// Version and dirty flag from the build; empty timestamps and artifacts.
RunManifest start_manifest(const std::string& command, const TrainConfig& config);

nlohmann::json to_json(const RunManifest& manifest);
RunManifest manifest_from_json(const nlohmann::json& doc);

/// Sets finished_at and writes `dir/manifest.json`.
void finish_manifest(RunManifest& manifest, const std::filesystem::path& dir);

}  // namespace calimatch
