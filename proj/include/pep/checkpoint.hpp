#pragma once

// Binary checkpoint format (all integers and floats little-endian):
//
//   magic      8 bytes  "PEPCKPT\0"
//   version    u32      kCheckpointVersion
//   config     8 x u64  layers, heads, hidden, ffn, max_positions, vocab_size,
//                       task_proj_dim, task_projection
//   state      3 x u64  stage, step, optimizer steps taken
//   blocks     u32 count, then per block:
//                u32 name length, name bytes, u64 value count,
//                value count x f64, u32 CRC-32 of (name bytes + value bytes)
//   trailer    u32      CRC-32 of every preceding byte
//
// Parameter blocks appear in layout order under their layout names, followed
// by "adamw.m" and "adamw.v" when optimizer state is saved.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pep/encoder.hpp"

namespace pep {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainerState {
  int stage = 1;
  std::size_t step = 0;             // steps completed in `stage`
  std::size_t optimizer_steps = 0;  // AdamW bias-correction counter
  std::vector<double> adam_m;       // empty when not saved
  std::vector<double> adam_v;

  bool operator==(const TrainerState&) const = default;
};

struct Checkpoint {
  EncoderParams params;
  TrainerState state;
};

/// Writes to `path` via a temporary file and rename, so a crash never leaves
/// a half-written checkpoint behind.
void save_checkpoint(const EncoderParams& params, const TrainerState& state,
                     const std::string& path);

/// Throws CheckpointError on a bad magic, an unsupported version, truncation,
/// or a checksum mismatch; messages name the failing block.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace pep
