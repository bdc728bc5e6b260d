#pragma once

// Binary checkpoint container.
//
//   bytes 0..7   magic "HMAPCKPT"
//   u32          format version (1)
//   u64          length n of the header
//   n bytes      JSON header: {"config": {...}, "census": {"frozen": [...],
//                "trainable": [...]}, "tensors": [{"name", "rows", "cols",
//                "trainable", "family"}, ...], "meta": {...}}
//   then         each tensor's values as little-endian IEEE doubles,
//                row-major, in header order
//
// Integers are little-endian.

#include <filesystem>
#include <memory>

#include <json.hpp>

#include "histmap/model.hpp"

namespace histmap {

inline constexpr uint32_t kCheckpointVersion = 1;

nlohmann::json config_to_json(const ModelConfig& cfg);
ModelConfig config_from_json(const nlohmann::json& j);

void save_checkpoint(const std::filesystem::path& path, const ModelParams& p, const nlohmann::json& meta = {});

struct Checkpoint {
  std::unique_ptr<ModelParams> params;
  nlohmann::json meta;
};

/// Rebuilds the model from the stored config and verifies that the stored
/// tensor list and census match it exactly.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace histmap
