#pragma once

#include "angio/train/trainer.hpp"

#include <json.hpp>

namespace angio {

inline constexpr int kCheckpointVersion = 1;

/// Parameter groups, Adam moments, schedule position and config in one tensor file.
/// Tensor names are "<group>/<param>", with "#m" / "#v" suffixes for the moments.
void save_checkpoint(const std::string& path, TrainState& state, const nlohmann::json& extra_meta = {});

/// Rebuilds the state from the stored config; throws LoadError on digest or layout mismatch.
std::unique_ptr<TrainState> load_checkpoint(const std::string& path);

/// SHA-256 of the checkpoint file.
std::string checkpoint_digest(const std::string& path);

}  // namespace angio
