#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "pep/objectives.hpp"

using pep::Matrix;
using pep::PepConfig;
using pep::PepTask;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, double scale, std::mt19937_64& rng) {
  Matrix m(r, c);
  std::normal_distribution<double> g(0.0, scale);
  for (double& v : m.flat()) v = g(rng);
  return m;
}

Matrix symmetric(Matrix m) {
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < i; ++j) m(i, j) = m(j, i);
  return m;
}

}  // namespace

TEST(PepLoss, ZeroLogitsGiveLn2PerTask) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 20; ++t) {
    const auto tree = oracle::random_tree(2 + rng() % 30, 0.3, rng);
    const auto labels = pep::derive_all(tree);
    const std::size_t n = tree.size();
    std::vector<pep::TreeLogits> logits(1, {Matrix(n, n), Matrix(n, n), Matrix(n, n)});
    const auto b = pep::pep_loss(logits, std::span(&labels, 1), PepConfig{});
    EXPECT_NEAR(b.rop, std::numbers::ln2, 1e-12);
    EXPECT_NEAR(b.brp, std::numbers::ln2, 1e-12);
    EXPECT_NEAR(b.pap, std::numbers::ln2, 1e-12);
    EXPECT_NEAR(b.total, 3 * std::numbers::ln2, 1e-12);
  }
}

TEST(PepLoss, MatchesScalarOracle) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 100; ++t) {
    const auto tree = oracle::random_tree(2 + rng() % 40, 0.4, rng);
    const auto labels = pep::derive_all(tree);
    const std::size_t n = tree.size();
    const double scale = t < 50 ? 1.0 : 40.0;
    for (auto task : {PepTask::kRoot, PepTask::kBranch, PepTask::kParent}) {
      const Matrix S = symmetric(random_matrix(n, n, scale, rng));
      const auto v = pep::pep_task_loss(S, labels.for_task(task), labels.mask);
      EXPECT_TRUE(v.contributes);
      EXPECT_NEAR(v.value, oracle::bce(S, labels.for_task(task), labels.mask), 1e-10);
    }
  }
}

TEST(PepLoss, WeightsAndSwitches) {
  std::mt19937_64 rng(3);
  const auto tree = oracle::random_tree(12, 0.3, rng);
  const auto labels = pep::derive_all(tree);
  std::vector<pep::TreeLogits> lg(1);
  lg[0].rop = symmetric(random_matrix(12, 12, 1, rng));
  lg[0].brp = symmetric(random_matrix(12, 12, 1, rng));
  lg[0].pap = symmetric(random_matrix(12, 12, 1, rng));
  PepConfig c;
  c.alpha = 0.5;
  c.beta = 2.0;
  c.gamma = 0.0;
  const auto b = pep::pep_loss(lg, std::span(&labels, 1), c);
  EXPECT_NEAR(b.total, 0.5 * b.rop + 2.0 * b.brp, 1e-14);
  c.gamma = 1.0;
  c.brp = false;
  const auto d = pep::pep_loss(lg, std::span(&labels, 1), c);
  EXPECT_EQ(d.brp, 0.0);
  EXPECT_NEAR(d.total, 0.5 * d.rop + d.pap, 1e-14);
  PepConfig bad;
  bad.alpha = -1;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = PepConfig{};
  bad.mlm = bad.rop = bad.brp = bad.pap = false;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(PepLoss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  const auto tree = oracle::random_tree(9, 0.3, rng);
  const auto labels = pep::derive_all(tree);
  Matrix S = symmetric(random_matrix(9, 9, 2, rng));
  const auto G = pep::pep_task_loss_grad(S, labels.brp, labels.mask, 1.0);
  for (std::size_t i = 0; i < 9; ++i)
    for (std::size_t j = 0; j < 9; ++j) {
      Matrix a = S, b = S;
      a(i, j) += 1e-6;
      b(i, j) -= 1e-6;
      const double fd = (oracle::bce(a, labels.brp, labels.mask) -
                         oracle::bce(b, labels.brp, labels.mask)) / 2e-6;
      EXPECT_NEAR(G(i, j), fd, 1e-8);
    }
}

TEST(PepLoss, EmptySupervision) {
  pep::ClaimConversation c;
  c.posts.push_back({"x", std::nullopt});
  const auto l = pep::derive_all(c);
  const auto v = pep::pep_task_loss(Matrix(1, 1), l.rop, l.mask);
  EXPECT_FALSE(v.contributes);
  EXPECT_EQ(v.value, 0.0);
}

TEST(MlmLoss, UniformLogitsGiveLnV) {
  const Matrix z(5, 37);
  const std::vector<pep::TokenId> t = {1, 2, 3, 4, 36};
  EXPECT_NEAR(pep::mlm_loss(z, t).value, std::log(37.0), 1e-12);
}

TEST(MlmLoss, MatchesScalarOracleAndGradient) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 100; ++t) {
    const std::size_t rows = 1 + rng() % 6, V = 10 + rng() % 20;
    const Matrix z = random_matrix(rows, V, t < 50 ? 1.0 : 30.0, rng);
    std::vector<pep::TokenId> y(rows);
    for (auto& v : y) v = static_cast<pep::TokenId>(rng() % V);
    EXPECT_NEAR(pep::mlm_loss(z, y).value, oracle::softmax_nll(z, y), 1e-10);
    if (t < 5) {
      const Matrix G = pep::mlm_loss_grad(z, y, 1.0 / static_cast<double>(rows));
      for (std::size_t i = 0; i < z.size(); ++i) {
        Matrix a = z, b = z;
        a.data()[i] += 1e-6;
        b.data()[i] -= 1e-6;
        EXPECT_NEAR(G.data()[i], (oracle::softmax_nll(a, y) - oracle::softmax_nll(b, y)) / 2e-6, 1e-8);
      }
    }
  }
  EXPECT_FALSE(pep::mlm_loss(Matrix(0, 5), {}).contributes);
}

TEST(Masking, RatesAndReplacementMix) {
  const std::size_t V = 1000;
  std::vector<pep::TokenId> ids{pep::kCls};
  for (int i = 0; i < 126; ++i) ids.push_back(static_cast<pep::TokenId>(pep::kNumSpecial + i));
  ids.push_back(pep::kSep);
  std::size_t candidates = 0, selected = 0, masked = 0, random = 0, kept = 0;
  for (std::uint64_t s = 0; s < 1000; ++s) {
    const auto m = pep::mask_tokens(ids, 0.15, s, V);
    candidates += 126;
    selected += m.positions.size();
    EXPECT_EQ(m.corrupted[0], pep::kCls);
    EXPECT_EQ(m.corrupted.back(), pep::kSep);
    for (std::size_t k = 0; k < m.positions.size(); ++k) {
      const auto p = m.positions[k];
      EXPECT_EQ(m.targets[k], ids[p]);
      if (m.corrupted[p] == pep::kMask) ++masked;
      else if (m.corrupted[p] == ids[p]) ++kept;
      else {
        ++random;
        EXPECT_GE(m.corrupted[p], static_cast<pep::TokenId>(pep::kNumSpecial));
      }
    }
  }
  const double n = static_cast<double>(selected);
  EXPECT_GE(candidates, 100000u);
  EXPECT_NEAR(n / static_cast<double>(candidates), 0.15, 0.005);
  EXPECT_NEAR(masked / n, 0.8, 0.02);
  EXPECT_NEAR(random / n, 0.1, 0.02);
  EXPECT_NEAR(kept / n, 0.1, 0.02);
}

TEST(Masking, DeterministicAndSkipsSpecialOnly) {
  const std::vector<pep::TokenId> ids = {pep::kCls, 10, 11, 12, pep::kSep};
  const auto a = pep::mask_tokens(ids, 0.5, 7, 30), b = pep::mask_tokens(ids, 0.5, 7, 30);
  EXPECT_EQ(a.corrupted, b.corrupted);
  EXPECT_EQ(a.positions, b.positions);
  const auto s = pep::mask_tokens(std::vector<pep::TokenId>{pep::kCls, pep::kSep}, 0.15, 1, 30);
  EXPECT_TRUE(s.skipped);
  EXPECT_TRUE(s.positions.empty());
  const auto f = pep::mask_tokens(ids, 0.99, 3, 30, true);
  for (auto p : f.positions) EXPECT_EQ(f.corrupted[p], pep::kMask);
}
