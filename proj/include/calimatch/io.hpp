#pragma once

// On-disk dataset layout.
//
// Each split is one little-endian file:
//   offset 0   char[8]   magic "CMSPLIT1"
//   offset 8   uint32    dim
//   offset 12  uint32    dtype (1 = float64)
//   offset 16  uint64    count
//   offset 24  float64   features[count][dim]
//              uint64    ids[count]
//              int32     labels[count]   (-1 for the unlabeled training split)
//              uint8     seen[count]
// The unlabeled split stores its hidden truth in a separate file
// `unlabeled_truth.bin` with the same layout and dim = 0.
//
// manifest.json lists the split files, per-split counts, the generation
// parameters and an FNV-1a 64 checksum over all split bytes in file order.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

#include "calimatch/data.hpp"

namespace calimatch {

struct DatasetFiles {
  std::filesystem::path manifest;
  std::string checksum;
};

std::uint64_t fnv1a64(std::span<const unsigned char> bytes,
                      std::uint64_t seed = 0xcbf29ce484222325ULL) noexcept;
std::string hex64(std::uint64_t value);

DatasetFiles save_dataset(const MismatchDataset& data, const std::filesystem::path& dir);
MismatchDataset load_dataset(const std::filesystem::path& manifest);
/// Recomputes the checksum of the split files a manifest points at.
std::string dataset_checksum(const std::filesystem::path& manifest);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace calimatch
