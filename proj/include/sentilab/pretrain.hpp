#pragma once

#include "sentilab/model.hpp"
#include "sentilab/synth.hpp"

namespace sentilab::pretrain {

// Trains a desk checkpoint from scratch on the synthetic multitask
// mixture. Encoder checkpoints keep only the encoder afterwards.
model::Checkpoint build_checkpoint(const model::RegistryEntry& entry, const synth::WorldConfig& world = {});

// Returns the checkpoint file for `entry` under `dir`, building it first
// when it does not exist yet.
fs::path ensure_checkpoint(const model::RegistryEntry& entry, const fs::path& dir,
                           const synth::WorldConfig& world = {});

// Registry lookup plus ensure_checkpoint in model::checkpoint_dir().
fs::path resolve(const model::Registry& registry, std::string_view checkpoint_id);

}  // namespace sentilab::pretrain
