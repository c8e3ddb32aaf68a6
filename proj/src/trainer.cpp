#include "pep/trainer.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <optional>
#include <random>

#include "pep/downstream.hpp"
#include "pep/parallel.hpp"
#include "pep/random.hpp"

namespace pep {

void TrainingSchedule::validate() const {
  stage1.validate();
  stage2.validate();
}

std::vector<TreeExample> prepare_trees(std::span<const ClaimConversation> conversations,
                                       const Vocabulary& vocab, std::size_t tree_cap,
                                       std::uint64_t seed, std::size_t max_positions) {
  if (tree_cap == 0) throw std::invalid_argument("prepare_trees: tree cap must be >= 1");
  std::vector<ClaimConversation> capped;
  capped.reserve(conversations.size());
  for (std::size_t i = 0; i < conversations.size(); ++i)
    capped.push_back(subsample_tree(canonical_order(conversations[i]), tree_cap,
                                    mix_seed({seed, i})));
  std::vector<TreeExample> out(capped.size());
  const auto count = static_cast<std::ptrdiff_t>(capped.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    const auto& conv = capped[static_cast<std::size_t>(i)];
    auto& ex = out[static_cast<std::size_t>(i)];
    ex.id = conv.id;
    ex.posts.reserve(conv.size());
    for (const auto& p : conv.posts) ex.posts.push_back(encode_text(p.text, vocab, max_positions));
    ex.labels = derive_all(conv);
  }
  return out;
}

std::string log_header() { return "step\tstage\tlr\tmlm_loss\trop_loss\tbrp_loss\tpap_loss\ttotal"; }

std::string format_record(const StepRecord& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu\t%d\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g", r.step, r.stage,
                r.lr, r.mlm, r.rop, r.brp, r.pap, r.total);
  return buf;
}

std::vector<std::uint8_t> decay_mask(const EncoderParams& params) {
  std::vector<std::uint8_t> mask(params.size(), 1);
  for (const auto& b : params.layout().blocks)
    if (b.rows == 1) std::fill_n(mask.begin() + static_cast<std::ptrdiff_t>(b.offset), b.size(), 0);
  return mask;
}

namespace {

constexpr std::size_t kPostsPerBlock = kReductionBlock;

// Posts of one tree, or a run of posts without relation labels.
struct Unit {
  std::size_t begin = 0, end = 0;
  const LabelMatrices* labels = nullptr;
};

Matrix cls_rows(const std::vector<SequenceCache>& caches) {
  const std::size_t d = caches.front().hidden.cols();
  Matrix H(caches.size(), d);
  for (std::size_t i = 0; i < caches.size(); ++i) {
    const auto r = caches[i].hidden.row(0);
    std::copy(r.begin(), r.end(), H.row(i).begin());
  }
  return H;
}

double& task_slot(PepBreakdown& b, PepTask t) {
  switch (t) {
    case PepTask::kRoot: return b.rop;
    case PepTask::kBranch: return b.brp;
    case PepTask::kParent: return b.pap;
  }
  return b.total;
}

}  // namespace

BatchLoss batch_loss(const EncoderParams& params, std::span<const TokenSequence> posts,
                     std::span<const LabelMatrices* const> trees, const PepConfig& pep,
                     std::uint64_t mask_seed, std::span<double> grad) {
  pep.validate();
  const auto& cfg = params.config();
  const bool with_grad = !grad.empty();
  if (with_grad && grad.size() != params.size())
    throw std::invalid_argument("batch_loss: gradient buffer size mismatch");
  for (const auto& p : posts) validate_sequence(p.ids, cfg);
  const bool use_pep = pep.any_pep() && !trees.empty();

  std::vector<Unit> units;
  if (!trees.empty()) {
    std::size_t at = 0;
    for (const auto* t : trees) {
      if (t == nullptr || t->n() == 0) throw std::invalid_argument("batch_loss: empty tree");
      if (use_pep) units.push_back({at, at + t->n(), t});
      at += t->n();
    }
    if (at != posts.size())
      throw std::invalid_argument("batch_loss: tree sizes do not cover the post batch");
  }
  // Without PEP the grouping (and so the summation order) matches stage 1.
  if (!use_pep)
    for (std::size_t b = 0; b < posts.size(); b += kPostsPerBlock)
      units.push_back({b, std::min(posts.size(), b + kPostsPerBlock), nullptr});

  // Masks depend only on (mask_seed, position in batch).
  std::vector<MaskingOutcome> masks(posts.size());
  std::size_t masked_total = 0;
  if (pep.mlm) {
    for (std::size_t i = 0; i < posts.size(); ++i) {
      masks[i] = mask_tokens(posts[i].ids, pep.mask_rate, mix_seed({mask_seed, i}),
                             cfg.vocab_size);
      masked_total += masks[i].positions.size();
    }
  }
  const double mlm_scale = masked_total ? 1.0 / static_cast<double>(masked_total) : 0.0;
  const double tree_scale = trees.empty() ? 0.0 : 1.0 / static_cast<double>(trees.size());

  std::vector<double> nll(posts.size(), 0.0);
  PepBreakdown pep_sum;
  std::vector<double> pep_grad;  // projection gradients, accumulated in tree order
  if (with_grad && use_pep) pep_grad.assign(params.size(), 0.0);

  const int threads = num_threads();
  std::vector<std::vector<double>> buffers;

  for (const Unit& u : units) {
    const std::size_t n = u.end - u.begin;
    std::vector<SequenceCache> caches(n);
    const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic) if (threads > 1 && n > 1)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
      const std::size_t g = u.begin + static_cast<std::size_t>(i);
      const auto& ids = pep.mlm ? masks[g].corrupted : posts[g].ids;
      forward_sequence(ids, params, caches[static_cast<std::size_t>(i)]);
    }

    // Pairwise relation losses over the tree's [CLS] rows.
    Matrix dH;
    if (use_pep && u.labels != nullptr) {
      const Matrix H = cls_rows(caches);
      if (with_grad) dH = Matrix(n, cfg.hidden);
      for (PepTask t : kAllTasks) {
        if (!pep.task_enabled(t)) continue;
        const double pw = t == PepTask::kParent ? pep.pap_pos_weight : 1.0;
        const Matrix S = pairwise_logits(H, params, t);
        const auto& labels = u.labels->for_task(t);
        task_slot(pep_sum, t) += pep_task_loss(S, labels, u.labels->mask, pw).value;
        if (!with_grad || pep.weight(t) == 0.0) continue;
        const Matrix dS =
            pep_task_loss_grad(S, labels, u.labels->mask, pep.weight(t) * tree_scale, pw);
        pairwise_logits_backward(H, params, t, dS, dH, pep_grad);
      }
    }

    // MLM head and encoder backward in fixed blocks of posts.
    const std::size_t blocks = (n + kPostsPerBlock - 1) / kPostsPerBlock;
    for (std::size_t wave = 0; wave < blocks; wave += static_cast<std::size_t>(threads)) {
      const std::size_t wave_end = std::min(blocks, wave + static_cast<std::size_t>(threads));
      if (with_grad && buffers.size() < wave_end - wave)
        buffers.resize(wave_end - wave, std::vector<double>(params.size()));
      const auto wave_count = static_cast<std::ptrdiff_t>(wave_end - wave);
#pragma omp parallel for schedule(static, 1) if (threads > 1 && wave_count > 1)
      for (std::ptrdiff_t w = 0; w < wave_count; ++w) {
        const std::size_t blk = wave + static_cast<std::size_t>(w);
        std::span<double> buf;
        if (with_grad) {
          auto& b = buffers[static_cast<std::size_t>(w)];
          std::fill(b.begin(), b.end(), 0.0);
          buf = b;
        }
        const std::size_t lo = blk * kPostsPerBlock, hi = std::min(n, lo + kPostsPerBlock);
        for (std::size_t i = lo; i < hi; ++i) {
          const std::size_t g = u.begin + i;
          const auto& cache = caches[i];
          Matrix d_hidden;
          if (with_grad) d_hidden = Matrix(cache.hidden.rows(), cfg.hidden);
          const auto& m = masks[g];
          if (!m.positions.empty()) {
            const Matrix logits = mlm_logits(cache.hidden, params, m.positions);
            nll[g] = mlm_loss(logits, m.targets).value * static_cast<double>(m.positions.size());
            if (with_grad) {
              const Matrix dl = mlm_loss_grad(logits, m.targets, mlm_scale);
              mlm_logits_backward(cache.hidden, params, m.positions, dl, d_hidden, buf);
            }
          }
          if (!with_grad) continue;
          if (dH.rows() == n)
            for (std::size_t j = 0; j < cfg.hidden; ++j) d_hidden(0, j) += dH(i, j);
          backward_sequence(cache, params, d_hidden, buf);
        }
      }
      if (with_grad)
        for (std::size_t w = 0; w < wave_end - wave; ++w)
          for (std::size_t p = 0; p < grad.size(); ++p) grad[p] += buffers[w][p];
    }
  }
  if (!pep_grad.empty())
    for (std::size_t p = 0; p < grad.size(); ++p) grad[p] += pep_grad[p];

  BatchLoss out;
  if (pep.mlm && masked_total > 0) {
    const double sum = std::accumulate(nll.begin(), nll.end(), 0.0);
    out.mlm = {sum * mlm_scale, true};
  }
  if (use_pep) {
    for (PepTask t : kAllTasks)
      if (pep.task_enabled(t)) task_slot(out.pep, t) = task_slot(pep_sum, t) * tree_scale;
    out.pep.total = pep.alpha * out.pep.rop + pep.beta * out.pep.brp + pep.gamma * out.pep.pap;
  }
  out.total = combined_stage2_loss(out.mlm, out.pep);
  return out;
}

namespace {

// Per-epoch Fisher-Yates shuffles keyed by (seed, stage, epoch).
class EpochStream {
 public:
  EpochStream(std::size_t n, std::uint64_t seed, int stage) : n_(n), seed_(seed), stage_(stage) {}

  std::size_t at(std::size_t position) {
    const std::size_t epoch = position / n_;
    if (!epoch_ || *epoch_ != epoch) {
      perm_.resize(n_);
      std::iota(perm_.begin(), perm_.end(), std::size_t{0});
      std::mt19937_64 rng(mix_seed({seed_, static_cast<std::uint64_t>(stage_), epoch}));
      for (std::size_t i = n_; i > 1; --i) std::swap(perm_[i - 1], perm_[rng() % i]);
      epoch_ = epoch;
    }
    return perm_[position % n_];
  }

 private:
  std::size_t n_;
  std::uint64_t seed_;
  int stage_;
  std::optional<std::size_t> epoch_;
  std::vector<std::size_t> perm_;
};

std::vector<std::size_t> draw(EpochStream& stream, std::size_t step, std::size_t batch_size) {
  std::vector<std::size_t> out(batch_size);
  for (std::size_t j = 0; j < batch_size; ++j) out[j] = stream.at((step - 1) * batch_size + j);
  return out;
}

struct StepBatch {
  std::vector<TokenSequence> posts;
  std::vector<const LabelMatrices*> trees;
};

using StepBatchFn = std::function<StepBatch(std::size_t)>;

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

TrainResult run_stage(EncoderParams& params, TrainerState& state, int stage,
                      const StepBatchFn& next_batch, const StageSchedule& schedule,
                      const PepConfig& pep, const TrainOptions& options) {
  schedule.validate();
  pep.validate();
  if (state.stage > stage)
    throw std::invalid_argument("cannot run stage " + std::to_string(stage) +
                                " from a stage-" + std::to_string(state.stage) + " state");
  if (state.stage < stage) state = TrainerState{stage, 0, 0, {}, {}};
  if (state.step > schedule.steps)
    throw std::invalid_argument("resume step " + std::to_string(state.step) +
                                " is past the schedule's " + std::to_string(schedule.steps) +
                                " steps");

  AdamW opt(params.size(), options.adamw);
  if (options.decay_mask) opt.set_decay_mask(decay_mask(params));
  if (!state.adam_m.empty()) opt.restore(state.adam_m, state.adam_v, state.optimizer_steps);

  const std::size_t end =
      options.stop_at ? std::min(options.stop_at, schedule.steps) : schedule.steps;
  auto persist = [&] {
    state.optimizer_steps = opt.steps_taken();
    state.adam_m = opt.first_moment();
    state.adam_v = opt.second_moment();
  };
  TrainResult result;
  std::vector<double> grad(params.size());
  for (std::size_t step = state.step + 1; step <= end; ++step) {
    const double lr = lr_at(step, schedule);
    const StepBatch batch = next_batch(step);
    std::fill(grad.begin(), grad.end(), 0.0);
    const BatchLoss loss = batch_loss(params, batch.posts, batch.trees, pep,
                                      mix_seed({options.seed, step}), grad);
    if (!std::isfinite(loss.total) || !all_finite(grad))
      throw TrainingError("non-finite loss at stage " + std::to_string(stage) + " step " +
                          std::to_string(step) + "; last checkpoint kept");
    opt.step(params.values(), grad, lr);
    state.step = step;

    StepRecord rec{step, stage, lr, loss.mlm.value, loss.pep.rop, loss.pep.brp, loss.pep.pap,
                   loss.total};
    result.records.push_back(rec);
    if (options.log) *options.log << format_record(rec) << '\n';

    if (!options.checkpoint_path.empty() && options.checkpoint_every &&
        step % options.checkpoint_every == 0 && step != end) {
      persist();
      save_checkpoint(params, state, options.checkpoint_path);
    }
  }
  persist();
  if (!options.checkpoint_path.empty()) save_checkpoint(params, state, options.checkpoint_path);
  if (options.log) options.log->flush();
  return result;
}

PepConfig mlm_only(double mask_rate) {
  PepConfig c;
  c.rop = c.brp = c.pap = false;
  c.mask_rate = mask_rate;
  return c;
}

}  // namespace

std::vector<std::size_t> batch_indices(std::size_t step, std::size_t n, std::size_t batch_size,
                                       std::uint64_t seed, int stage) {
  if (step == 0 || n == 0) throw std::invalid_argument("batch_indices: step and n must be >= 1");
  EpochStream stream(n, seed, stage);
  return draw(stream, step, batch_size);
}

std::vector<TokenSequence> stage2_posts(std::span<const TreeExample> trees, std::size_t step,
                                        std::size_t batch_size, std::uint64_t seed) {
  std::vector<TokenSequence> out;
  for (std::size_t t : batch_indices(step, trees.size(), batch_size, seed, 2))
    out.insert(out.end(), trees[t].posts.begin(), trees[t].posts.end());
  return out;
}

TrainResult train_stage1(EncoderParams& params, TrainerState& state, const PostBatchFn& batches,
                         const StageSchedule& schedule, const TrainOptions& options) {
  return run_stage(
      params, state, 1, [&](std::size_t step) { return StepBatch{batches(step), {}}; }, schedule,
      mlm_only(PepConfig{}.mask_rate), options);
}

TrainResult train_stage1(EncoderParams& params, TrainerState& state,
                         std::span<const TokenSequence> corpus, const StageSchedule& schedule,
                         const TrainOptions& options) {
  if (corpus.empty() && schedule.steps > 0)
    throw std::invalid_argument("train_stage1: empty corpus");
  std::optional<EpochStream> stream;
  if (!corpus.empty()) stream.emplace(corpus.size(), options.seed, 1);
  return train_stage1(
      params, state,
      [&](std::size_t step) {
        std::vector<TokenSequence> out;
        for (std::size_t i : draw(*stream, step, schedule.batch_size)) out.push_back(corpus[i]);
        return out;
      },
      schedule, options);
}

TrainResult train_stage2(EncoderParams& params, TrainerState& state,
                         std::span<const TreeExample> trees, const StageSchedule& schedule,
                         const PepConfig& pep, const TrainOptions& options) {
  if (trees.empty() && schedule.steps > 0)
    throw std::invalid_argument("train_stage2: no trees");
  std::optional<EpochStream> stream;
  if (!trees.empty()) stream.emplace(trees.size(), options.seed, 2);
  return run_stage(
      params, state, 2,
      [&](std::size_t step) {
        StepBatch b;
        for (std::size_t t : draw(*stream, step, schedule.batch_size)) {
          b.posts.insert(b.posts.end(), trees[t].posts.begin(), trees[t].posts.end());
          b.trees.push_back(&trees[t].labels);
        }
        return b;
      },
      schedule, pep, options);
}

PepBreakdown evaluate_pep(const EncoderParams& params, std::span<const TreeExample> trees,
                          const PepConfig& pep) {
  PepConfig clean = pep;
  clean.mlm = false;
  std::vector<TokenSequence> posts;
  std::vector<const LabelMatrices*> labels;
  for (const auto& t : trees) {
    posts.insert(posts.end(), t.posts.begin(), t.posts.end());
    labels.push_back(&t.labels);
  }
  return batch_loss(params, posts, labels, clean, 0, {}).pep;
}

double pairwise_auc(const EncoderParams& params, std::span<const TreeExample> trees, PepTask task) {
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& t : trees) {
    if (t.posts.size() < 2) continue;
    const EncoderOutput out = forward(t.posts, params);
    const Matrix S = pairwise_logits(out.cls, params, task);
    const auto& y = t.labels.for_task(task);
    for (std::size_t i = 0; i < S.rows(); ++i)
      for (std::size_t j = i + 1; j < S.rows(); ++j) {
        scores.push_back(S(i, j));
        labels.push_back(y(i, j) ? 1 : 0);
      }
  }
  return roc_auc(scores, labels);
}

}  // namespace pep
