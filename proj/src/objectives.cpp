#include "pep/objectives.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace pep {

bool PepConfig::task_enabled(PepTask t) const {
  switch (t) {
    case PepTask::kRoot: return rop;
    case PepTask::kBranch: return brp;
    case PepTask::kParent: return pap;
  }
  return false;
}

double PepConfig::weight(PepTask t) const {
  switch (t) {
    case PepTask::kRoot: return alpha;
    case PepTask::kBranch: return beta;
    case PepTask::kParent: return gamma;
  }
  return 0.0;
}

void PepConfig::validate() const {
  if (!mlm && !rop && !brp && !pap)
    throw std::invalid_argument("pep config: at least one of mlm/rop/brp/pap must be enabled");
  for (double w : {alpha, beta, gamma, pap_pos_weight})
    if (!std::isfinite(w) || w < 0.0)
      throw std::invalid_argument("pep config: loss weights must be finite and non-negative");
  if (!(mask_rate > 0.0 && mask_rate < 1.0))
    throw std::invalid_argument("pep config: mask rate must lie in (0, 1)");
}

MaskingOutcome mask_tokens(std::span<const TokenId> ids, double rate, std::uint64_t seed,
                           std::size_t vocab_size, bool force_mask) {
  if (rate < 0.0 || rate > 1.0) throw std::invalid_argument("mask_tokens: rate outside [0, 1]");
  MaskingOutcome out;
  out.corrupted.assign(ids.begin(), ids.end());
  bool any = false;
  for (TokenId id : ids) any = any || !Vocabulary::is_special(id);
  if (!any) {
    out.skipped = true;
    return out;
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const bool can_randomize = vocab_size > kNumSpecial;
  std::uniform_int_distribution<TokenId> random_id(
      static_cast<TokenId>(kNumSpecial),
      static_cast<TokenId>(can_randomize ? vocab_size - 1 : kNumSpecial));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (Vocabulary::is_special(ids[i])) continue;
    if (!(unit(rng) < rate)) continue;
    out.positions.push_back(i);
    out.targets.push_back(ids[i]);
    const double r = unit(rng);
    if (force_mask || r < 0.8)
      out.corrupted[i] = kMask;
    else if (r < 0.9 && can_randomize)
      out.corrupted[i] = random_id(rng);
  }
  return out;
}

namespace {
void check_rows(const Matrix& logits, std::span<const TokenId> targets) {
  if (logits.rows() != targets.size())
    throw std::invalid_argument("mlm_loss: " + std::to_string(logits.rows()) +
                                " logit rows for " + std::to_string(targets.size()) + " targets");
  for (TokenId t : targets)
    if (t < 0 || static_cast<std::size_t>(t) >= logits.cols())
      throw std::invalid_argument("mlm_loss: target id outside the logit width");
}

double log_sum_exp(std::span<const double> row, double& mx) {
  mx = -INFINITY;
  for (double v : row) mx = std::max(mx, v);
  double z = 0.0;
  for (double v : row) z += std::exp(v - mx);
  return mx + std::log(z);
}

// Softplus-form BCE and its derivative for label y in {0,1}.
double bce(double x, bool y, double pos_weight) {
  const double w = y ? pos_weight : 1.0;
  return w * (std::max(x, 0.0) - (y ? x : 0.0) + std::log1p(std::exp(-std::abs(x))));
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void check_shapes(const Matrix& logits, const RelationMatrix& labels, const RelationMatrix& mask) {
  if (logits.rows() != logits.cols() || logits.rows() != labels.n() || labels.n() != mask.n())
    throw std::invalid_argument("pep_task_loss: shape mismatch");
}
}  // namespace

LossValue mlm_loss(const Matrix& logits, std::span<const TokenId> targets) {
  check_rows(logits, targets);
  if (targets.empty()) return {0.0, false};
  double total = 0.0;
  for (std::size_t m = 0; m < targets.size(); ++m) {
    double mx;
    const double lse = log_sum_exp(logits.row(m), mx);
    total += lse - logits(m, static_cast<std::size_t>(targets[m]));
  }
  return {total / static_cast<double>(targets.size()), true};
}

Matrix mlm_loss_grad(const Matrix& logits, std::span<const TokenId> targets, double scale) {
  check_rows(logits, targets);
  Matrix g(logits.rows(), logits.cols());
  for (std::size_t m = 0; m < targets.size(); ++m) {
    double mx;
    const double lse = log_sum_exp(logits.row(m), mx);
    for (std::size_t v = 0; v < logits.cols(); ++v) g(m, v) = std::exp(logits(m, v) - lse) * scale;
    g(m, static_cast<std::size_t>(targets[m])) -= scale;
  }
  return g;
}

LossValue pep_task_loss(const Matrix& logits, const RelationMatrix& labels,
                        const RelationMatrix& mask, double pos_weight) {
  check_shapes(logits, labels, mask);
  double total = 0.0;
  std::size_t count = 0;
  const std::size_t n = labels.n();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (!mask(i, j)) continue;
      total += bce(logits(i, j), labels(i, j), pos_weight);
      ++count;
    }
  if (count == 0) return {0.0, false};
  return {total / static_cast<double>(count), true};
}

Matrix pep_task_loss_grad(const Matrix& logits, const RelationMatrix& labels,
                          const RelationMatrix& mask, double scale, double pos_weight) {
  check_shapes(logits, labels, mask);
  const std::size_t n = labels.n();
  Matrix g(n, n);
  const std::size_t count = mask.count_true();
  if (count == 0) return g;
  const double s = scale / static_cast<double>(count);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (!mask(i, j)) continue;
      const bool y = labels(i, j);
      const double w = y ? pos_weight : 1.0;
      g(i, j) = w * (sigmoid(logits(i, j)) - (y ? 1.0 : 0.0)) * s;
    }
  return g;
}

const Matrix& TreeLogits::for_task(PepTask t) const {
  switch (t) {
    case PepTask::kRoot: return rop;
    case PepTask::kBranch: return brp;
    case PepTask::kParent: return pap;
  }
  throw std::invalid_argument("unknown task");
}

PepBreakdown pep_loss(std::span<const TreeLogits> logits, std::span<const LabelMatrices> labels,
                      const PepConfig& config) {
  if (logits.size() != labels.size())
    throw std::invalid_argument("pep_loss: logits and labels count differ");
  if (logits.empty()) throw std::invalid_argument("pep_loss: empty batch");
  PepBreakdown out;
  const double inv = 1.0 / static_cast<double>(logits.size());
  for (PepTask t : kAllTasks) {
    if (!config.task_enabled(t)) continue;
    const double pw = t == PepTask::kParent ? config.pap_pos_weight : 1.0;
    double sum = 0.0;
    for (std::size_t g = 0; g < logits.size(); ++g)
      sum += pep_task_loss(logits[g].for_task(t), labels[g].for_task(t), labels[g].mask, pw).value;
    const double mean = sum * inv;
    switch (t) {
      case PepTask::kRoot: out.rop = mean; break;
      case PepTask::kBranch: out.brp = mean; break;
      case PepTask::kParent: out.pap = mean; break;
    }
  }
  out.total = config.alpha * out.rop + config.beta * out.brp + config.gamma * out.pap;
  return out;
}

double combined_stage2_loss(const LossValue& mlm, const PepBreakdown& pep) {
  return (mlm.contributes ? mlm.value : 0.0) + pep.total;
}

}  // namespace pep
