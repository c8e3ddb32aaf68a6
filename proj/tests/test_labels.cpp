#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "pep/labels.hpp"

using pep::PepTask;

TEST(Labels, LabelRows) {
  const auto L = pep::derive_all(oracle::nine_posts());
  for (const auto& r : oracle::label_rows()) {
    EXPECT_EQ(L.rop(r.a, r.b), r.rop) << r.a << "," << r.b;
    EXPECT_EQ(L.brp(r.a, r.b), r.brp) << r.a << "," << r.b;
    EXPECT_EQ(L.pap(r.a, r.b), r.pap) << r.a << "," << r.b;
  }
}

TEST(Labels, SingleNodeHasNoSupervision) {
  pep::ClaimConversation c;
  c.posts.push_back({"only", std::nullopt});
  const auto L = pep::derive_all(c);
  EXPECT_EQ(L.n(), 1u);
  EXPECT_EQ(L.mask.count_true(), 0u);
  EXPECT_EQ(L.rop.count_true() + L.brp.count_true() + L.pap.count_true(), 0u);
}

TEST(Labels, ChainIsOneThread) {
  pep::ClaimConversation c;
  c.posts = {{"a", std::nullopt}, {"b", 0}, {"c", 1}};
  const auto brp = pep::derive_branch_labels(c);
  EXPECT_TRUE(brp(0, 1) && brp(0, 2) && brp(1, 2));
}

TEST(Labels, StarParentPairs) {
  pep::ClaimConversation c;
  c.posts = {{"r", std::nullopt}, {"a", 0}, {"b", 0}, {"c", 0}};
  const auto pap = pep::derive_parent_labels(c);
  for (std::size_t i = 1; i < 4; ++i) {
    EXPECT_TRUE(pap(0, i));
    for (std::size_t j = 1; j < 4; ++j) EXPECT_FALSE(pap(i, j));
  }
}

TEST(Labels, RandomTreesMatchParentChainOracle) {
  std::mt19937_64 rng(2024);
  for (int t = 0; t < 300; ++t) {
    const auto tree = oracle::random_tree(1 + rng() % 64, (t % 3) * 0.4, rng);
    const auto p = oracle::parents_of(tree);
    const auto L = pep::derive_all(tree);
    for (std::size_t i = 0; i < tree.size(); ++i)
      for (std::size_t j = 0; j < tree.size(); ++j) {
        ASSERT_EQ(L.rop(i, j), oracle::root_label(i, j));
        ASSERT_EQ(L.brp(i, j), oracle::branch_label(p, i, j));
        ASSERT_EQ(L.pap(i, j), oracle::parent_label(p, i, j));
        ASSERT_EQ(L.mask(i, j), i != j);
      }
  }
}

TEST(Labels, ContainmentAndClosedFormCounts) {
  std::mt19937_64 rng(77);
  for (int t = 0; t < 500; ++t) {
    const auto tree = oracle::random_tree(1 + rng() % 64, 0.5, rng);
    const auto p = oracle::parents_of(tree);
    const auto L = pep::derive_all(tree);
    const std::size_t n = tree.size();
    std::size_t depth_sum = 0;
    for (std::size_t v = 0; v < n; ++v) depth_sum += oracle::hop_depth(p, v);
    EXPECT_EQ(L.rop.count_true(), 2 * (n - 1));
    EXPECT_EQ(L.pap.count_true(), 2 * (n - 1));
    EXPECT_EQ(L.brp.count_true(), 2 * depth_sum);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        ASSERT_TRUE(!L.rop(i, j) || L.brp(i, j));
        ASSERT_TRUE(!L.pap(i, j) || L.brp(i, j));
        ASSERT_EQ(L.rop(i, j), L.rop(j, i));
        ASSERT_EQ(L.brp(i, j), L.brp(j, i));
        ASSERT_EQ(L.pap(i, j), L.pap(j, i));
      }
    for (std::size_t j = 1; j < n; ++j)
      ASSERT_TRUE(!L.pap(0, j) || L.rop(0, j));
  }
}

TEST(Labels, InvariantUnderTopologicalRelabeling) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 100; ++t) {
    const auto tree = oracle::random_tree(2 + rng() % 40, 0.3, rng);
    const std::size_t n = tree.size();
    // Random topological order: repeatedly pick a random available node.
    std::vector<std::size_t> order{0}, avail;
    std::vector<bool> placed(n, false);
    placed[0] = true;
    auto refresh = [&] {
      avail.clear();
      for (std::size_t v = 1; v < n; ++v)
        if (!placed[v] && placed[*tree.posts[v].parent]) avail.push_back(v);
    };
    for (refresh(); !avail.empty(); refresh()) {
      const std::size_t v = avail[rng() % avail.size()];
      placed[v] = true;
      order.push_back(v);
    }
    std::vector<std::size_t> pos(n);
    for (std::size_t i = 0; i < n; ++i) pos[order[i]] = i;
    pep::ClaimConversation re;
    for (std::size_t v : order) {
      pep::Post post = tree.posts[v];
      if (post.parent) post.parent = pos[*post.parent];
      re.posts.push_back(post);
    }
    const auto A = pep::derive_all(tree), B = pep::derive_all(re);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        for (auto task : {PepTask::kRoot, PepTask::kBranch, PepTask::kParent})
          ASSERT_EQ(A.for_task(task)(order[i], order[j]), B.for_task(task)(i, j));
  }
}

TEST(Labels, SparseExport) {
  auto fig = oracle::nine_posts();
  std::ostringstream os;
  pep::write_sparse_labels(os, fig, pep::derive_all(fig));
  const std::string out = os.str();
  EXPECT_EQ(std::count(out.begin(), out.end(), '\n'), 36);
  EXPECT_NE(out.find("nine_posts 0 1 1 1 1\n"), std::string::npos);
  EXPECT_NE(out.find("nine_posts 1 4 0 1 0\n"), std::string::npos);
  EXPECT_NE(out.find("nine_posts 4 7 0 0 0\n"), std::string::npos);
}

TEST(Labels, BatchDerivationMatchesSingle) {
  std::mt19937_64 rng(8);
  std::vector<pep::ClaimConversation> trees;
  for (int i = 0; i < 20; ++i) trees.push_back(oracle::random_tree(1 + rng() % 30, 0.2, rng));
  const auto all = pep::derive_all(std::span<const pep::ClaimConversation>(trees));
  for (std::size_t i = 0; i < trees.size(); ++i) EXPECT_EQ(all[i], pep::derive_all(trees[i]));
}
