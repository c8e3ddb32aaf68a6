#pragma once

// Two-stage pretraining: MLM on a post corpus, then MLM + PEP on whole
// propagation trees. Batches, masks and initial parameters are pure functions
// of (seed, stage, step), so runs are reproducible and resumable.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pep/checkpoint.hpp"
#include "pep/conversation.hpp"
#include "pep/encoder.hpp"
#include "pep/labels.hpp"
#include "pep/objectives.hpp"
#include "pep/optimizer.hpp"
#include "pep/vocab.hpp"

namespace pep {

struct TrainingSchedule {
  StageSchedule stage1{2000, 0.1, 1e-3, 32, DecayShape::kLinear};
  StageSchedule stage2{1000, 0.1, 5e-4, 8, DecayShape::kLinear};
  std::uint64_t seed = 0;
  void validate() const;
};

struct TrainOptions {
  std::uint64_t seed = 0;
  AdamWConfig adamw;
  bool decay_mask = true;  // no weight decay on biases and layer-norm gains
  std::size_t checkpoint_every = 0;  // 0: only at the end (when a path is set)
  std::string checkpoint_path;       // empty: no checkpoints
  std::ostream* log = nullptr;       // tab-separated step records
  std::size_t stop_at = 0;           // 0: run to the end of the schedule
};

/// One encoded propagation tree with its relation labels.
struct TreeExample {
  std::string id;
  std::vector<TokenSequence> posts;  // canonical order
  LabelMatrices labels;
};

/// Canonicalizes, caps (see subsample_tree), encodes and labels every
/// conversation. Parallel across trees; output order follows the input.
std::vector<TreeExample> prepare_trees(std::span<const ClaimConversation> conversations,
                                       const Vocabulary& vocab, std::size_t tree_cap,
                                       std::uint64_t seed,
                                       std::size_t max_positions = kMaxPositions);

struct StepRecord {
  std::size_t step = 0;
  int stage = 1;
  double lr = 0.0;
  double mlm = 0.0;
  double rop = 0.0;
  double brp = 0.0;
  double pap = 0.0;
  double total = 0.0;
};

/// "step\tstage\tlr\tmlm_loss\trop_loss\tbrp_loss\tpap_loss\ttotal"
std::string log_header();
std::string format_record(const StepRecord& r);

struct TrainResult {
  std::vector<StepRecord> records;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Loss and gradient for one batch. `trees` partitions `posts` into
/// consecutive whole trees (sizes must add up); pass an empty span for an
/// MLM-only batch. Masks are drawn from (seed, step, position in batch).
struct BatchLoss {
  LossValue mlm;
  PepBreakdown pep;
  double total = 0.0;
};
BatchLoss batch_loss(const EncoderParams& params, std::span<const TokenSequence> posts,
                     std::span<const LabelMatrices* const> trees, const PepConfig& pep,
                     std::uint64_t mask_seed, std::span<double> grad);

/// Indices drawn for `step` (1-based) from a stream of per-epoch shuffles of
/// [0, n).
std::vector<std::size_t> batch_indices(std::size_t step, std::size_t n, std::size_t batch_size,
                                       std::uint64_t seed, int stage);

/// Posts of the stage-2 batch at `step`, flattened in tree order.
std::vector<TokenSequence> stage2_posts(std::span<const TreeExample> trees, std::size_t step,
                                        std::size_t batch_size, std::uint64_t seed);

using PostBatchFn = std::function<std::vector<TokenSequence>(std::size_t step)>;

/// Stage 1: minimizes the MLM loss. `state` is advanced in place; a state from
/// stage 1 with step k resumes at step k + 1.
TrainResult train_stage1(EncoderParams& params, TrainerState& state,
                         std::span<const TokenSequence> corpus, const StageSchedule& schedule,
                         const TrainOptions& options);
/// Same loop over an arbitrary post stream.
TrainResult train_stage1(EncoderParams& params, TrainerState& state, const PostBatchFn& batches,
                         const StageSchedule& schedule, const TrainOptions& options);

/// Stage 2: minimizes L_MLM + L_PEP over batches of whole trees. A state left
/// by stage 1 starts stage 2 at step 1 with fresh optimizer moments.
TrainResult train_stage2(EncoderParams& params, TrainerState& state,
                         std::span<const TreeExample> trees, const StageSchedule& schedule,
                         const PepConfig& pep, const TrainOptions& options);

/// PEP loss on unmasked posts (no gradient).
PepBreakdown evaluate_pep(const EncoderParams& params, std::span<const TreeExample> trees,
                          const PepConfig& pep);

/// Area under the ROC curve of pairwise logits for one task over every
/// supervised unordered pair of the given trees (unmasked posts).
double pairwise_auc(const EncoderParams& params, std::span<const TreeExample> trees, PepTask task);

/// Weight-decay mask for AdamW: 0 on biases and layer-norm gains.
std::vector<std::uint8_t> decay_mask(const EncoderParams& params);

}  // namespace pep
