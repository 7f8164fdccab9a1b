#pragma once

#include "morphaeus/models.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>

namespace morphaeus {

inline constexpr int64_t kCheckpointSchema = 1;

struct Checkpoint {
  ModelPtr model;
  int epoch = 0;
  nlohmann::json meta;  // training provenance (config echo, seed, manifest hash, ...)
};

/// Single archive holding the schema version, the model spec, weights and
/// buffers, the epoch, free-form metadata and torch's global RNG state.
void save_checkpoint(const std::filesystem::path& path, AnomalyModel& model, int epoch,
                     const nlohmann::json& meta = nlohmann::json::object());

/// Rebuilds the model from the stored spec and loads its state. When
/// `restore_rng` is set, torch's global generator is reset to the saved state.
Checkpoint load_checkpoint(const std::filesystem::path& path, bool restore_rng = false);

}  // namespace morphaeus
