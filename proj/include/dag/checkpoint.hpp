#pragma once

#include <string>

#include "dag/epoch.hpp"

namespace dag {

// Versioned binary checkpoint: magic, format version, config/task hashes,
// schedule and architecture descriptors, then named little-endian f64 arrays
// (parameters, optimizer moments) plus counters and the RNG state. Written to
// a temp file and renamed, so a crash never leaves a torn checkpoint.
//
// Loading rebuilds the model from the config and verifies the stored
// descriptors bit-exactly; a resumed run therefore continues with the same
// arithmetic as the run that saved it.

enum class RunStage : std::uint8_t { Pretrain = 0, Align = 1 };

struct Checkpoint {
  std::uint32_t format_version = 1;
  std::uint64_t config_hash = 0;
  std::uint64_t task_hash = 0;
  RunStage stage = RunStage::Align;
  AlignState state;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);

// `expected` supplies the chain/schedule structure (rebuilt from the config);
// stored descriptors must match it exactly.
Checkpoint load_checkpoint(const std::string& path, const Model& expected);

}  // namespace dag
