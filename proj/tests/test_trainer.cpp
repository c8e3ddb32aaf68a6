#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "pep/parallel.hpp"
#include "pep/synthetic.hpp"
#include "pep/trainer.hpp"

namespace fs = std::filesystem;
using pep::PepConfig;
using pep::PepTask;

namespace {

pep::EncoderConfig micro() {
  pep::EncoderConfig c;
  c.layers = 2;
  c.heads = 2;
  c.hidden = 8;
  c.ffn = 16;
  c.max_positions = 16;
  c.vocab_size = 20;
  c.task_proj_dim = 4;
  return c;
}

struct Fixture {
  std::vector<pep::TokenSequence> posts;
  std::vector<pep::LabelMatrices> labels;
  std::vector<const pep::LabelMatrices*> ptrs;
};

Fixture random_batch(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Fixture f;
  for (std::size_t n : {5, 4}) {
    f.labels.push_back(pep::derive_all(oracle::random_tree(n, 0.4, rng)));
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<pep::TokenId> ids{pep::kCls};
      const std::size_t len = 2 + rng() % 6;
      for (std::size_t k = 0; k < len; ++k) ids.push_back(static_cast<pep::TokenId>(7 + rng() % 13));
      ids.push_back(pep::kSep);
      f.posts.push_back({ids});
    }
  }
  for (const auto& l : f.labels) f.ptrs.push_back(&l);
  return f;
}

struct Corpus {
  pep::Vocabulary vocab;
  std::vector<pep::TreeExample> trees;
  std::vector<pep::TokenSequence> posts;
};

const Corpus& corpus() {
  static const Corpus c = [] {
    Corpus out;
    const auto data = pep::synth::make_pretraining_mix(24, {}, 2);
    const auto texts = pep::synth::post_texts(data);
    out.vocab = pep::build_vocab(texts, 120);
    out.trees = pep::prepare_trees(data.conversations, out.vocab, 16, 1, 24);
    for (const auto& t : texts) out.posts.push_back(pep::encode_text(t, out.vocab, 24));
    return out;
  }();
  return c;
}

pep::EncoderParams fresh() {
  auto cfg = micro();
  cfg.vocab_size = corpus().vocab.size();
  cfg.max_positions = 24;
  pep::EncoderParams p(cfg);
  p.init_random(11);
  return p;
}

pep::StageSchedule sched(std::size_t steps, std::size_t batch) {
  return {steps, 0.2, 3e-3, batch, pep::DecayShape::kLinear};
}

void check_gradient(const PepConfig& cfg, bool trees, std::uint64_t seed) {
  const auto f = random_batch(seed);
  pep::EncoderParams p(micro());
  p.init_random(seed, 0.3);
  std::span<const pep::LabelMatrices* const> tspan;
  if (trees) tspan = f.ptrs;
  std::vector<double> grad(p.size(), 0.0);
  pep::batch_loss(p, f.posts, tspan, cfg, 77, grad);
  auto loss = [&](const pep::EncoderParams& q) {
    return pep::batch_loss(q, f.posts, tspan, cfg, 77, {}).total;
  };
  const auto r = oracle::gradient_check(loss, p, grad, oracle::sample_coordinates(p, 3, seed));
  EXPECT_GE(r.coordinates, 100u);
  EXPECT_LT(r.max_rel_error, 1e-4) << "worst coordinate " << r.worst;
}

}  // namespace

TEST(BatchLoss, MlmGradient) {
  PepConfig c;
  c.rop = c.brp = c.pap = false;
  check_gradient(c, false, 1);
}

TEST(BatchLoss, EachTaskGradient) {
  for (auto task : {PepTask::kRoot, PepTask::kBranch, PepTask::kParent}) {
    PepConfig c;
    c.mlm = false;
    c.rop = task == PepTask::kRoot;
    c.brp = task == PepTask::kBranch;
    c.pap = task == PepTask::kParent;
    check_gradient(c, true, 2 + static_cast<int>(task));
  }
}

TEST(BatchLoss, CombinedGradient) {
  PepConfig c;
  c.alpha = 0.7;
  c.gamma = 1.3;
  check_gradient(c, true, 9);
}

TEST(BatchLoss, ThreadCountDoesNotChangeGradient) {
  const auto f = random_batch(4);
  pep::EncoderParams p(micro());
  p.init_random(4, 0.3);
  std::vector<double> g1(p.size(), 0.0), g4(p.size(), 0.0);
  pep::set_num_threads(1);
  const auto a = pep::batch_loss(p, f.posts, f.ptrs, PepConfig{}, 5, g1);
  pep::set_num_threads(4);
  const auto b = pep::batch_loss(p, f.posts, f.ptrs, PepConfig{}, 5, g4);
  pep::set_num_threads(1);
  EXPECT_EQ(a.total, b.total);
  EXPECT_EQ(g1, g4);
}

TEST(BatchLoss, TreeSizesMustCoverPosts) {
  auto f = random_batch(5);
  f.posts.pop_back();
  pep::EncoderParams p(micro());
  EXPECT_THROW(pep::batch_loss(p, f.posts, f.ptrs, PepConfig{}, 1, {}), std::invalid_argument);
}

TEST(Batches, IndicesCoverEpochs) {
  std::vector<int> seen(10, 0);
  for (std::size_t s = 1; s <= 5; ++s)
    for (auto i : pep::batch_indices(s, 10, 4, 3, 1)) ++seen[i];
  // 20 draws over two full epochs
  for (int c : seen) EXPECT_EQ(c, 2);
  EXPECT_EQ(pep::batch_indices(3, 10, 4, 3, 1), pep::batch_indices(3, 10, 4, 3, 1));
  EXPECT_NE(pep::batch_indices(1, 10, 4, 3, 1), pep::batch_indices(1, 10, 4, 3, 2));
}

TEST(Trainer, PrepareTreesIsDeterministic) {
  const auto data = pep::synth::make_pretraining_mix(10, {}, 3);
  const auto& v = corpus().vocab;
  pep::set_num_threads(3);
  const auto a = pep::prepare_trees(data.conversations, v, 6, 5, 24);
  pep::set_num_threads(1);
  const auto b = pep::prepare_trees(data.conversations, v, 6, 5, 24);
  ASSERT_EQ(a.size(), 10u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].posts, b[i].posts);
    EXPECT_EQ(a[i].labels, b[i].labels);
    EXPECT_LE(a[i].posts.size(), 6u);
  }
}

TEST(Trainer, ZeroStepsLeavesParametersUnchanged) {
  auto p = fresh();
  const auto before = p;
  pep::TrainerState st;
  pep::TrainOptions o;
  const auto r = pep::train_stage1(p, st, corpus().posts, sched(0, 8), o);
  EXPECT_TRUE(r.records.empty());
  EXPECT_EQ(p, before);
  pep::TrainerState st2{2, 0, 0, {}, {}};
  pep::train_stage2(p, st2, corpus().trees, sched(0, 2), PepConfig{}, o);
  EXPECT_EQ(p, before);
}

TEST(Trainer, LossDecreasesAndLogsEveryStep) {
  auto p = fresh();
  pep::TrainerState st;
  std::ostringstream log;
  pep::TrainOptions o;
  o.seed = 1;
  o.log = &log;
  const auto r = pep::train_stage2(p, st, corpus().trees, sched(30, 2), PepConfig{}, o);
  ASSERT_EQ(r.records.size(), 30u);
  EXPECT_EQ(st.stage, 2);
  EXPECT_EQ(st.step, 30u);
  double first = 0, last = 0;
  for (int i = 0; i < 5; ++i) first += r.records[i].total, last += r.records[25 + i].total;
  EXPECT_LT(last, first);
  std::string line;
  std::istringstream in(log.str());
  std::size_t lines = 0;
  while (std::getline(in, line)) ++lines;
  EXPECT_EQ(lines, 30u);
}

TEST(Trainer, ResumeIsBitwiseIdentical) {
  const auto dir = fs::temp_directory_path() / ("pep_resume_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  pep::TrainOptions o;
  o.seed = 4;
  o.checkpoint_every = 3;

  auto full = fresh();
  pep::TrainerState s_full;
  std::ostringstream log_full;
  o.log = &log_full;
  o.checkpoint_path = (dir / "full.ckpt").string();
  pep::train_stage2(full, s_full, corpus().trees, sched(8, 2), PepConfig{}, o);

  auto part = fresh();
  pep::TrainerState s_part;
  std::ostringstream log_part;
  o.log = &log_part;
  o.checkpoint_path = (dir / "part.ckpt").string();
  o.stop_at = 5;
  pep::train_stage2(part, s_part, corpus().trees, sched(8, 2), PepConfig{}, o);
  EXPECT_EQ(s_part.step, 5u);
  auto ck = pep::load_checkpoint(o.checkpoint_path);
  o.stop_at = 0;
  pep::train_stage2(ck.params, ck.state, corpus().trees, sched(8, 2), PepConfig{}, o);
  EXPECT_EQ(ck.params, full);
  EXPECT_EQ(ck.state, s_full);
  EXPECT_EQ(log_part.str(), log_full.str());
  fs::remove_all(dir);
}

TEST(Trainer, StageTwoAfterStageOneResetsMoments) {
  auto p = fresh();
  pep::TrainerState st;
  pep::TrainOptions o;
  pep::train_stage1(p, st, corpus().posts, sched(3, 4), o);
  EXPECT_EQ(st.stage, 1);
  EXPECT_EQ(st.optimizer_steps, 3u);
  pep::train_stage2(p, st, corpus().trees, sched(2, 2), PepConfig{}, o);
  EXPECT_EQ(st.stage, 2);
  EXPECT_EQ(st.step, 2u);
  EXPECT_EQ(st.optimizer_steps, 2u);
}

TEST(Trainer, PepDisabledMatchesStageOneOnSamePosts) {
  PepConfig mlm_only;
  mlm_only.rop = mlm_only.brp = mlm_only.pap = false;
  pep::TrainOptions o;
  o.seed = 6;
  const auto s = sched(4, 2);

  auto a = fresh();
  pep::TrainerState sa{2, 0, 0, {}, {}};
  const auto ra = pep::train_stage2(a, sa, corpus().trees, s, mlm_only, o);

  auto b = fresh();
  pep::TrainerState sb;
  const auto& trees = corpus().trees;
  const pep::PostBatchFn fn = [&](std::size_t step) { return pep::stage2_posts(trees, step, 2, 6); };
  const auto rb = pep::train_stage1(b, sb, fn, s, o);
  EXPECT_EQ(a, b);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(ra.records[i].mlm, rb.records[i].mlm);
}

TEST(Trainer, NonFiniteLossAbortsWithoutCheckpoint) {
  const auto path = fs::temp_directory_path() / "pep_nan.ckpt";
  fs::remove(path);
  auto p = fresh();
  p.values()[p.layout().lnf_g] = std::nan("");
  pep::TrainerState st;
  pep::TrainOptions o;
  o.checkpoint_path = path.string();
  EXPECT_THROW(pep::train_stage1(p, st, corpus().posts, sched(3, 4), o), pep::TrainingError);
  EXPECT_FALSE(fs::exists(path));
}

TEST(Trainer, EvaluationHelpers) {
  const auto p = fresh();
  const auto& trees = corpus().trees;
  const auto b = pep::evaluate_pep(p, trees, PepConfig{});
  EXPECT_NEAR(b.total, b.rop + b.brp + b.pap, 1e-12);

  // AUC against pair counting over the same logits.
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& t : trees) {
    const auto out = pep::forward(t.posts, p);
    const auto S = oracle::pairwise(out.cls, p, PepTask::kParent);
    for (std::size_t i = 0; i < t.posts.size(); ++i)
      for (std::size_t j = i + 1; j < t.posts.size(); ++j) {
        scores.push_back(S(i, j));
        labels.push_back(t.labels.pap(i, j) ? 1 : 0);
      }
  }
  EXPECT_NEAR(pep::pairwise_auc(p, trees, PepTask::kParent), oracle::pair_count_auc(scores, labels), 1e-9);
}

TEST(Trainer, DecayMaskSkipsBiasesAndGains) {
  const auto p = fresh();
  const auto m = pep::decay_mask(p);
  const auto& lay = p.layout();
  EXPECT_EQ(m[lay.tok_emb], 1);
  EXPECT_EQ(m[lay.layers[0].wq], 1);
  EXPECT_EQ(m[lay.layers[0].bq], 0);
  EXPECT_EQ(m[lay.layers[1].ln2_g], 0);
  EXPECT_EQ(m[lay.mlm_bias], 0);
  EXPECT_EQ(m[lay.proj[2]], 1);
}
