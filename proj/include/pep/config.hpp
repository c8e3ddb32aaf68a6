#pragma once

// Plain-text run configuration. One "key = value" per line; '#' starts a
// comment; blank lines are ignored. Keys are grouped by prefix:
//
//   encoder.*  layers heads hidden ffn max_positions vocab_size task_proj_dim
//              task_projection
//   pep.*      alpha beta gamma mlm rop brp pap mask_rate pap_pos_weight
//   stage1.*   steps warmup_fraction peak_lr batch_size decay (linear|constant)
//   stage2.*   same keys as stage1 (batch_size counts trees)
//   optim.*    beta1 beta2 eps weight_decay decay_mask
//   train.*    seed threads checkpoint_every tree_cap init_std
//   vocab.*    size max
//   eval.*     k_values repetitions test_fraction balanced pooling (mean|max)
//              gcn l2 tolerance max_iterations
//   paths.*    corpus conversations vocab labeled checkpoint out_dir
//
// Booleans are true/false; lists are comma-separated. encoder.vocab_size = 0
// means "take it from the vocabulary file".

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "pep/encoder.hpp"
#include "pep/objectives.hpp"
#include "pep/optimizer.hpp"

namespace pep {

enum class Pooling { kMean, kMax };

struct EvalConfig {
  std::vector<std::size_t> k_values = {10, 20, 30, 40, 50, 60, 70, 80, 90, 100, 110, 120, 130, 140};
  std::size_t repetitions = 5;
  double test_fraction = 0.3;
  bool balanced = true;  // true: accuracy is primary; false: macro F1
  Pooling pooling = Pooling::kMean;
  bool gcn = false;
  double l2 = 1e-3;
  double tolerance = 1e-6;
  std::size_t max_iterations = 20000;
  bool operator==(const EvalConfig&) const = default;
};

struct PathsConfig {
  std::string corpus;
  std::string conversations;
  std::string vocab;
  std::string labeled;
  std::string checkpoint;
  std::string out_dir = "runs";
  bool operator==(const PathsConfig&) const = default;
};

struct RunConfig {
  EncoderConfig encoder;
  PepConfig pep;
  StageSchedule stage1{2000, 0.1, 1e-3, 32, DecayShape::kLinear};
  StageSchedule stage2{1000, 0.1, 5e-4, 8, DecayShape::kLinear};
  AdamWConfig optim;
  bool decay_mask = true;  // exclude biases and layer-norm gains from weight decay
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::size_t checkpoint_every = 100;
  std::size_t tree_cap = 128;
  double init_std = 0.02;
  std::size_t vocab_size = 2000;
  std::size_t vocab_max = 52000;
  EvalConfig eval;
  PathsConfig paths;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Applies one key/value assignment; throws ConfigError on an unknown key or a
/// malformed value.
void set_config_value(RunConfig& config, std::string_view key, std::string_view value);

/// Parses text on top of `base`. Errors carry the line number.
RunConfig parse_config(std::string_view text, RunConfig base = {});
RunConfig load_config(const std::string& path, RunConfig base = {});

/// Every key in a fixed order; doubles are written with round-trip precision,
/// so parse_config(to_text(c)) reproduces c exactly.
std::string to_text(const RunConfig& config);

std::vector<std::string_view> config_keys();

}  // namespace pep
