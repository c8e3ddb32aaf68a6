#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <algorithm>
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "pep/conversation.hpp"

using pep::ClaimConversation;
using pep::ConversationError;
using pep::ConversationErrorKind;

namespace {

ClaimConversation make(std::initializer_list<int> parents) {
  ClaimConversation c;
  c.id = "x";
  std::size_t i = 0;
  for (int p : parents) {
    pep::Post post;
    post.text = "t" + std::to_string(i++);
    if (p >= 0) post.parent = static_cast<std::size_t>(p);
    c.posts.push_back(post);
  }
  return c;
}

ConversationErrorKind kind_of(const ClaimConversation& c) {
  try {
    pep::validate(c);
  } catch (const ConversationError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error";
  return ConversationErrorKind::kMalformed;
}

}  // namespace

TEST(Conversation, ValidationErrors) {
  EXPECT_EQ(kind_of(make({})), ConversationErrorKind::kEmpty);
  EXPECT_EQ(kind_of(make({0, 0})), ConversationErrorKind::kMissingRoot);
  EXPECT_EQ(kind_of(make({-1, -1})), ConversationErrorKind::kMultipleRoots);
  EXPECT_EQ(kind_of(make({-1, 5})), ConversationErrorKind::kDanglingParent);
  EXPECT_EQ(kind_of(make({-1, 2, 1})), ConversationErrorKind::kCycle);
  auto c = make({-1, 0});
  c.posts[1].text = "";
  EXPECT_EQ(kind_of(c), ConversationErrorKind::kEmptyText);
}

TEST(Conversation, TopologicalOrderIsKept) {
  const auto fig = oracle::nine_posts();
  EXPECT_TRUE(pep::is_canonical(fig));
  EXPECT_EQ(pep::canonical_order(fig), fig);
}

TEST(Conversation, NonTopologicalOrderBecomesBreadthFirst) {
  // root at index 2; 0 -> 2, 1 -> 0, 3 -> 2
  auto c = make({2, 0, -1, 2});
  const auto out = pep::canonical_order(c);
  ASSERT_TRUE(pep::is_canonical(out));
  EXPECT_EQ(out.posts[0].text, "t2");
  EXPECT_EQ(out.posts[1].text, "t0");
  EXPECT_EQ(out.posts[2].text, "t3");
  EXPECT_EQ(out.posts[3].text, "t1");
  EXPECT_EQ(out.posts[3].parent, std::optional<std::size_t>(1));
  EXPECT_EQ(pep::canonical_permutation(c), (std::vector<std::size_t>{2, 0, 3, 1}));
}

TEST(Conversation, ShuffledTreesCanonicalizeConsistently) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const auto tree = oracle::random_tree(1 + rng() % 30, 0.3, rng);
    std::vector<std::size_t> perm(tree.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::size_t> pos(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) pos[perm[i]] = i;
    ClaimConversation shuffled;
    shuffled.id = tree.id;
    for (std::size_t i : perm) {
      pep::Post p = tree.posts[i];
      if (p.parent) p.parent = pos[*p.parent];
      shuffled.posts.push_back(p);
    }
    const auto out = pep::canonical_order(shuffled);
    ASSERT_TRUE(pep::is_canonical(out));
    // Parent texts survive the reordering.
    for (std::size_t i = 1; i < out.size(); ++i) {
      const auto& text = out.posts[i].text;
      const std::size_t orig = static_cast<std::size_t>(std::stoul(text.substr(1)));
      EXPECT_EQ(out.posts[*out.posts[i].parent].text, tree.posts[*tree.posts[orig].parent].text);
    }
  }
}

TEST(Conversation, RecordRoundTrip) {
  auto c = oracle::nine_posts();
  c.label = "rumor";
  c.posts[3].text = "quote \" and \\ and ünïcode 😂";
  const auto back = pep::parse_conversation(pep::to_record(c));
  EXPECT_EQ(back, c);
}

TEST(Conversation, ParserIgnoresUnknownFields) {
  const auto c = pep::parse_conversation(
      R"({"id":"a","time":5,"posts":[{"text":"r","parent":null,"user":{"n":1}},{"text":"c","parent":0}]})");
  EXPECT_EQ(c.size(), 2u);
  EXPECT_FALSE(c.label.has_value());
}

TEST(Conversation, MalformedRecord) {
  EXPECT_THROW(pep::parse_conversation("{not json"), ConversationError);
  EXPECT_THROW(pep::parse_conversation(R"({"id":"a"})"), ConversationError);
}

TEST(Conversation, LoaderReportsBadLinesAndKeepsGoodOnes) {
  const auto path = std::filesystem::temp_directory_path() / "pep_conv_loader.jsonl";
  {
    std::ofstream os(path);
    os << R"({"id":"a","posts":[{"text":"r","parent":null}]})" << "\n\n";
    os << R"({"id":"b","posts":[{"text":"r","parent":3}]})" << "\n";
    os << R"({"id":"c","posts":[{"text":"r","parent":null},{"text":"x","parent":0}]})" << "\n";
  }
  const auto res = pep::load_conversations(path.string());
  EXPECT_EQ(res.dataset.conversations.size(), 2u);
  ASSERT_EQ(res.errors.size(), 1u);
  EXPECT_NE(res.errors[0].find("line 3"), std::string::npos);
  EXPECT_THROW(pep::load_conversations_strict(path.string()), std::runtime_error);
  std::filesystem::remove(path);
}

TEST(Conversation, FixtureFileMatchesNinePostTree) {
  const auto data = pep::load_conversations_strict(std::string(PEP_TEST_DATA) + "/nine_posts.jsonl");
  ASSERT_EQ(data.conversations.size(), 1u);
  EXPECT_EQ(oracle::parents_of(data.conversations[0]), oracle::parents_of(oracle::nine_posts()));
}

TEST(Conversation, DepthsAndStats) {
  const auto fig = oracle::nine_posts();
  EXPECT_EQ(pep::depths(fig), (std::vector<std::size_t>{0, 1, 2, 3, 3, 1, 2, 2, 1}));
  pep::ConversationDataset ds;
  ds.conversations = {fig, make({-1})};
  const auto s = pep::tree_stats(ds);
  EXPECT_EQ(s.claims, 2u);
  EXPECT_EQ(s.total_posts, 10u);
  EXPECT_DOUBLE_EQ(s.mean_posts, 5.0);
  EXPECT_EQ(s.max_depth, 3u);
  EXPECT_EQ(s.tree_depth_histogram.at(3), 1u);
  EXPECT_EQ(s.tree_depth_histogram.at(0), 1u);
  EXPECT_EQ(s.post_depth_histogram.at(2), 3u);
  EXPECT_THROW(pep::tree_stats(pep::ConversationDataset{}), std::invalid_argument);
}

TEST(Conversation, SubsampleKeepsRootAndConnectivity) {
  std::mt19937_64 rng(5);
  const auto tree = oracle::random_tree(300, 0.2, rng);
  const auto small = pep::subsample_tree(tree, 40, 9);
  ASSERT_EQ(small.size(), 40u);
  EXPECT_TRUE(pep::is_canonical(small));
  EXPECT_EQ(small.posts[0].text, tree.posts[0].text);
  EXPECT_EQ(pep::subsample_tree(tree, 40, 9), small);
  EXPECT_EQ(pep::subsample_tree(small, 128, 1), small);
}
