#pragma once

// Masking, the MLM loss, the three pairwise relation losses and their
// weighted combination.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "pep/labels.hpp"
#include "pep/tensor.hpp"
#include "pep/vocab.hpp"

namespace pep {

struct PepConfig {
  double alpha = 1.0;  // root
  double beta = 1.0;   // branch
  double gamma = 1.0;  // parent
  bool mlm = true;
  bool rop = true;
  bool brp = true;
  bool pap = true;
  double mask_rate = 0.15;
  /// Optional positive-class weight for the parent task (1 = unweighted).
  double pap_pos_weight = 1.0;

  bool task_enabled(PepTask t) const;
  double weight(PepTask t) const;
  bool any_pep() const { return rop || brp || pap; }
  /// Throws std::invalid_argument when nothing is enabled, a weight is negative
  /// or not finite, or the mask rate is outside (0, 1).
  void validate() const;
};

struct MaskingOutcome {
  std::vector<TokenId> corrupted;
  std::vector<std::size_t> positions;  // ascending
  std::vector<TokenId> targets;        // original ids at `positions`
  bool skipped = false;                // no maskable token in the sequence
};

/// Each non-special position is selected independently with probability
/// `rate`; a selected position becomes [MASK] with probability 0.8, a uniform
/// non-special id with 0.1, and stays unchanged with 0.1. `force_mask` makes
/// every selected position [MASK].
MaskingOutcome mask_tokens(std::span<const TokenId> ids, double rate, std::uint64_t seed,
                           std::size_t vocab_size, bool force_mask = false);

struct LossValue {
  double value = 0.0;
  bool contributes = false;  // false when there was nothing to supervise
};

/// Mean negative log-likelihood of `targets` under row-wise softmax.
LossValue mlm_loss(const Matrix& logits, std::span<const TokenId> targets);
/// dLoss/dlogits scaled by `scale` (pass 1/total masked count for batch means).
Matrix mlm_loss_grad(const Matrix& logits, std::span<const TokenId> targets, double scale);

/// Mean binary cross-entropy with logits over supervised entries of one tree:
/// max(x,0) - x*y + log1p(exp(-|x|)).
LossValue pep_task_loss(const Matrix& logits, const RelationMatrix& labels,
                        const RelationMatrix& mask, double pos_weight = 1.0);
/// dLoss/dlogits scaled by `scale`.
Matrix pep_task_loss_grad(const Matrix& logits, const RelationMatrix& labels,
                          const RelationMatrix& mask, double scale, double pos_weight = 1.0);

struct PepBreakdown {
  double rop = 0.0;
  double brp = 0.0;
  double pap = 0.0;
  double total = 0.0;
};

struct TreeLogits {
  Matrix rop, brp, pap;
  const Matrix& for_task(PepTask t) const;
};

/// Per-task loss = mean over trees; total = alpha*rop + beta*brp + gamma*pap.
/// Disabled tasks report and contribute 0.
PepBreakdown pep_loss(std::span<const TreeLogits> logits, std::span<const LabelMatrices> labels,
                      const PepConfig& config);

/// Unweighted sum of the two stage-2 parts.
double combined_stage2_loss(const LossValue& mlm, const PepBreakdown& pep);

}  // namespace pep
