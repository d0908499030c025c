#pragma once

// Checkpoints are JSON documents:
//   {"format": "calimatch-checkpoint/1", "arch": {...}, "t_m": .., "t_o": ..,
//    "weights": [...], "config": {...}, "config_hash": "..",
//    "tables": {"gamma": {...}, "delta": {...}} | null}
// Doubles are written with round-trip precision, so loading restores the
// parameters bit for bit.

#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "calimatch/calibration.hpp"
#include "calimatch/config.hpp"
#include "calimatch/model.hpp"

namespace calimatch {

struct Checkpoint {
  ModelParams params;
  TrainConfig config;
  std::string config_hash;
  std::optional<ReferenceTables> tables;
};

nlohmann::json to_json(const ReferenceTable& table);
ReferenceTable reference_table_from_json(const nlohmann::json& doc);

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                     const TrainConfig& config, const std::optional<ReferenceTables>& tables);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace calimatch
