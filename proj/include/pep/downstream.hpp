#pragma once

// Downstream claim classification on frozen encoder features: pooled linear
// probe, a two-layer graph convolution classifier, metrics, few-shot harness.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pep/config.hpp"
#include "pep/conversation.hpp"
#include "pep/encoder.hpp"
#include "pep/tensor.hpp"
#include "pep/vocab.hpp"

namespace pep {

// ---- embeddings -----------------------------------------------------------

/// [CLS] embedding of every post, one row per post in the given order.
Matrix post_embeddings(const ClaimConversation& conv, const Vocabulary& vocab,
                       const EncoderParams& params);

/// Column-wise mean (or max) of the rows. The mean sums each column in sorted
/// order, so any row permutation gives a bitwise identical result.
std::vector<double> pool_rows(const Matrix& rows, Pooling pooling = Pooling::kMean);

std::vector<double> claim_embedding(const ClaimConversation& conv, const Vocabulary& vocab,
                                    const EncoderParams& params,
                                    Pooling pooling = Pooling::kMean);

/// One row per conversation; parallel across conversations.
Matrix claim_embeddings(std::span<const ClaimConversation> convs, const Vocabulary& vocab,
                        const EncoderParams& params, Pooling pooling = Pooling::kMean);

// ---- labels ---------------------------------------------------------------

/// Sorted class names; index = class id.
struct LabelSet {
  std::vector<std::string> names;
  std::size_t size() const { return names.size(); }
  int index(const std::string& name) const;  // throws on unknown names
  static LabelSet from(std::span<const ClaimConversation> convs);
  std::vector<int> encode(std::span<const ClaimConversation> convs) const;
};

// ---- linear probe ---------------------------------------------------------

struct ProbeConfig {
  double l2 = 1e-3;
  double tolerance = 1e-6;  // stop when the loss changes by less than this
  std::size_t max_iterations = 20000;
  bool standardize = true;
};

/// Multinomial logistic regression on standardized features, minimizing
/// mean cross-entropy + l2/2 * (|W|^2 + |b|^2) by gradient descent with a
/// backtracking line search from zero weights.
class LinearProbe {
 public:
  LinearProbe() = default;
  LinearProbe(std::size_t dim, std::size_t classes);

  Matrix logits(const Matrix& X) const;
  std::vector<int> predict(const Matrix& X) const;

  std::size_t dim() const { return W_.rows(); }
  std::size_t classes() const { return W_.cols(); }
  Matrix& weights() { return W_; }
  const Matrix& weights() const { return W_; }
  std::vector<double>& bias() { return b_; }
  const std::vector<double>& bias() const { return b_; }
  std::vector<double>& mean() { return mean_; }
  const std::vector<double>& mean() const { return mean_; }
  std::vector<double>& scale() { return scale_; }
  const std::vector<double>& scale() const { return scale_; }

  std::size_t iterations = 0;
  double final_loss = 0.0;
  bool converged = false;

  /// Standardized copy of X.
  Matrix transform(const Matrix& X) const;

 private:
  Matrix W_;  // dim x classes
  std::vector<double> b_, mean_, scale_;
};

/// Throws std::invalid_argument when fewer than two classes are present.
LinearProbe train_probe(const Matrix& X, std::span<const int> y, std::size_t num_classes,
                        const ProbeConfig& config = {});

/// Objective value and gradient of the probe loss on already-standardized
/// features, for checking against other optimizers.
double probe_objective(const Matrix& Z, std::span<const int> y, const Matrix& W,
                       std::span<const double> b, double l2, Matrix* dW = nullptr,
                       std::vector<double>* db = nullptr);

// ---- graph convolution ----------------------------------------------------

struct GraphExample {
  Matrix features;                                  // one row per node
  std::vector<std::optional<std::size_t>> parent;  // tree edges
  int label = 0;
};

/// Graph example from a conversation: rows are post [CLS] embeddings.
GraphExample graph_example(const ClaimConversation& conv, const Vocabulary& vocab,
                           const EncoderParams& params, int label);

struct GcnConfig {
  std::size_t hidden = 32;
  double l2 = 1e-3;
  double tolerance = 1e-6;
  std::size_t max_iterations = 2000;
  std::uint64_t seed = 0;
  bool standardize = true;
};

/// logits = mean_rows(relu(A relu(A X W1 + b1) W2 + b2)) Wo + bo, where A is the
/// symmetrically normalized undirected adjacency with self-loops.
class GcnClassifier {
 public:
  GcnClassifier() = default;
  GcnClassifier(std::size_t in, std::size_t hidden, std::size_t classes, std::uint64_t seed);

  std::vector<double> logits(const GraphExample& g) const;
  int predict(const GraphExample& g) const;
  std::vector<int> predict(std::span<const GraphExample> graphs) const;

  std::vector<double>& params() { return theta_; }
  const std::vector<double>& params() const { return theta_; }
  std::size_t in_dim() const { return in_; }
  std::size_t hidden_dim() const { return hidden_; }
  std::size_t classes() const { return classes_; }

  /// Mean cross-entropy + l2/2 |theta|^2 over `graphs`, with gradient.
  double objective(std::span<const GraphExample> graphs, double l2,
                   std::vector<double>* grad) const;

  std::vector<double> feature_mean, feature_scale;
  std::size_t iterations = 0;
  double final_loss = 0.0;

 private:
  std::size_t in_ = 0, hidden_ = 0, classes_ = 0;
  std::vector<double> theta_;  // W1 b1 W2 b2 Wo bo
};

/// Normalized adjacency D^-1/2 (A + I) D^-1/2 of the undirected tree.
Matrix normalized_adjacency(std::span<const std::optional<std::size_t>> parent);

GcnClassifier train_gcn(std::span<const GraphExample> graphs, std::size_t num_classes,
                        const GcnConfig& config = {});

// ---- metrics --------------------------------------------------------------

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct Metrics {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::vector<ClassMetrics> per_class;
  std::vector<std::vector<std::size_t>> confusion;  // [truth][prediction]
  bool balanced = true;
  /// Accuracy on balanced datasets, macro F1 otherwise.
  double primary() const { return balanced ? accuracy : macro_f1; }
};

/// Per-class precision/recall/F1 use 0 when a denominator is 0.
Metrics evaluate(std::span<const int> predictions, std::span<const int> labels,
                 std::size_t num_classes, bool balanced = true);

double roc_auc(std::span<const double> scores, std::span<const int> labels);
double spearman(std::span<const double> x, std::span<const double> y);

// ---- few-shot ---------------------------------------------------------------

struct FewShotConfig {
  std::vector<std::size_t> k_values = {10, 20, 30, 40, 50, 60, 70, 80, 90, 100, 110, 120, 130, 140};
  std::size_t repetitions = 5;
  std::uint64_t seed = 0;
};

/// k items from the pool, stratified: per-class quotas proportional to class
/// frequency (largest remainder), at least one per class when k allows.
std::vector<std::size_t> stratified_sample(std::span<const int> labels, std::size_t num_classes,
                                           std::size_t k, std::uint64_t seed);

struct FewShotRun {
  std::size_t k = 0;
  std::size_t repetition = 0;
  Metrics metrics;
};

struct FewShotPoint {
  std::size_t k = 0;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation (0 for one repetition)
};

struct FewShotResult {
  std::vector<FewShotPoint> curve;
  std::vector<FewShotRun> runs;
};

/// Predictions on the fixed test split from a model fit on the selected
/// training-pool items.
using FitPredict = std::function<std::vector<int>(std::span<const std::size_t> train_subset)>;

/// For each k and repetition, samples k training items (stratified), fits,
/// evaluates on the test labels, and aggregates the primary metric.
FewShotResult few_shot_run(std::span<const int> train_labels, std::span<const int> test_labels,
                           std::size_t num_classes, const FewShotConfig& config, bool balanced,
                           const FitPredict& fit_predict);

/// Probe-based few-shot run on precomputed claim embeddings.
FewShotResult few_shot_probe(const Matrix& train_X, std::span<const int> train_y,
                             const Matrix& test_X, std::span<const int> test_y,
                             std::size_t num_classes, const FewShotConfig& config, bool balanced,
                             const ProbeConfig& probe = {});

/// Plain-text table "k mean stddev" for plotting.
std::string format_curve(const FewShotResult& result);

/// Rows of X selected by `rows`.
Matrix select_rows(const Matrix& X, std::span<const std::size_t> rows);

}  // namespace pep
