#pragma once

#include <string>

#include "soda2/trainer.hpp"

namespace soda2 {

// Container: magic "SDC1" | u32 LE manifest length | JSON manifest | payload.
// The manifest lists layer names and shapes in a fixed order; the payload is
// the concatenation of each layer's values as little-endian 64-bit floats.
// Optimizer momentum buffers ride along so a reloaded state resumes exactly.
void save_checkpoint(const TrainState& state, const TrainConfig& cfg,
                     const std::string& path);

struct LoadedCheckpoint {
    TrainState state;
    TrainConfig config;
};
LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace soda2
