#pragma once

// Compact bidirectional transformer encoder (pre-LN, GELU) with a tied MLM
// head and one linear projection per pairwise relation task.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pep/labels.hpp"
#include "pep/tensor.hpp"
#include "pep/vocab.hpp"

namespace pep {

struct EncoderConfig {
  std::size_t layers = 2;
  std::size_t heads = 2;
  std::size_t hidden = 64;
  std::size_t ffn = 256;
  std::size_t max_positions = kMaxPositions;
  std::size_t vocab_size = 0;
  std::size_t task_proj_dim = 0;  // 0 means "same as hidden"
  bool task_projection = true;    // false: pairwise logits are H H^T

  std::size_t proj_dim() const { return task_proj_dim ? task_proj_dim : hidden; }
  std::size_t head_dim() const { return hidden / heads; }
  /// Throws std::invalid_argument on inconsistent dimensions.
  void validate() const;

  /// Laptop-sized default.
  static EncoderConfig desk(std::size_t vocab_size);
  /// BERT-base geometry with the 52k social vocabulary.
  static EncoderConfig full();

  bool operator==(const EncoderConfig&) const = default;
};

/// Named block inside the flat parameter vector.
struct ParamBlock {
  std::string name;
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t size() const { return rows * cols; }
};

/// Offsets of every parameter block for a given config.
struct ParamLayout {
  struct Layer {
    std::size_t ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo, ln2_g, ln2_b, w1, b1, w2, b2;
  };
  std::size_t tok_emb = 0, pos_emb = 0;
  std::vector<Layer> layers;
  std::size_t lnf_g = 0, lnf_b = 0, mlm_bias = 0;
  std::size_t proj[3] = {0, 0, 0};
  std::size_t total = 0;
  std::vector<ParamBlock> blocks;

  explicit ParamLayout(const EncoderConfig& cfg);
  ParamLayout() = default;
};

class EncoderParams {
 public:
  /// All parameters zero.
  explicit EncoderParams(const EncoderConfig& config);

  /// Normal(0, stddev) weights and embeddings, zero biases, unit
  /// layer-norm gains; deterministic in `seed`.
  void init_random(std::uint64_t seed, double stddev = 0.02);

  const EncoderConfig& config() const { return config_; }
  const ParamLayout& layout() const { return layout_; }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::size_t size() const { return values_.size(); }

  const double* at(std::size_t offset) const { return values_.data() + offset; }
  double* at(std::size_t offset) { return values_.data() + offset; }

  bool operator==(const EncoderParams& other) const {
    return config_ == other.config_ && values_ == other.values_;
  }

 private:
  EncoderConfig config_;
  ParamLayout layout_;
  std::vector<double> values_;
};

/// Activations kept from the forward pass of one sequence for backprop.
struct SequenceCache {
  struct Layer {
    Matrix xhat1, a;
    std::vector<double> rstd1;
    Matrix q, k, v;
    std::vector<double> probs;  // heads x L x L
    Matrix ctx;
    Matrix xhat2, b;
    std::vector<double> rstd2;
    Matrix u, g;
  };
  std::vector<TokenId> ids;  // trailing [PAD] stripped
  std::vector<Layer> layers;
  Matrix xhatf;
  std::vector<double> rstdf;
  Matrix hidden;  // L x d final states
};

/// Number of leading non-[PAD] positions; [PAD] may only trail.
std::size_t effective_length(std::span<const TokenId> ids);

/// Throws std::invalid_argument when the length is outside [1, max_positions],
/// an id is out of range, or [PAD] appears before a real token.
void validate_sequence(std::span<const TokenId> ids, const EncoderConfig& cfg);

/// Validates ids and length, then runs one sequence and fills `cache`.
void forward_sequence(std::span<const TokenId> ids, const EncoderParams& params,
                      SequenceCache& cache);

/// Accumulates parameter gradients into `grad` given dLoss/d(final hidden).
void backward_sequence(const SequenceCache& cache, const EncoderParams& params,
                       const Matrix& d_hidden, std::span<double> grad);

struct EncoderOutput {
  std::vector<Matrix> hidden;  // per sequence, effective length x d
  Matrix cls;                  // batch x d
};

/// Batch forward, parallel across sequences. [PAD] positions are excluded from
/// attention; the [CLS] embedding is the final state at position 0.
EncoderOutput forward(std::span<const TokenSequence> batch, const EncoderParams& params);

/// Pads every sequence with trailing [PAD] to the longest length.
std::vector<TokenSequence> pad_batch(std::span<const TokenSequence> batch);

/// Vocabulary logits at the given positions: hidden * tok_emb^T + bias.
Matrix mlm_logits(const Matrix& hidden, const EncoderParams& params,
                  std::span<const std::size_t> positions);
/// d_hidden (rows at `positions`) += ..., parameter gradients into `grad`.
void mlm_logits_backward(const Matrix& hidden, const EncoderParams& params,
                         std::span<const std::size_t> positions, const Matrix& d_logits,
                         Matrix& d_hidden, std::span<double> grad);

/// S = (H P)(H P)^T for the task's projection P, or H H^T when projections
/// are disabled. Symmetric; no activation.
Matrix pairwise_logits(const Matrix& H, const EncoderParams& params, PepTask task);
/// d_H += dS-propagated gradient; projection gradient into `grad`.
void pairwise_logits_backward(const Matrix& H, const EncoderParams& params, PepTask task,
                              const Matrix& d_logits, Matrix& d_H, std::span<double> grad);

}  // namespace pep
