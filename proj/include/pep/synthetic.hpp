#pragma once

// Seeded synthetic conversations for tests and the directional experiments.
//
// Post text is drawn from a fixed lexicon: every branch of a tree (a child of
// the root and its descendants) gets its own topic pool, every depth level
// has a pool of synonyms, the source post uses claim words, and filler words
// are shared by everything.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "pep/conversation.hpp"
#include "pep/downstream.hpp"

namespace pep::synth {

/// Root with a uniform number of branches; each branch is a reply chain of
/// uniform length, with an occasional side reply next to a chain post.
struct TreeShape {
  std::size_t min_branches = 2, max_branches = 4;
  std::size_t min_chain = 2, max_chain = 5;
  double side_rate = 0.15;
};

enum class Shape {
  kBranches,  // 2-4 branches, chains of 2-5
  kDeep,      // 2-3 long chains of 3-6
  kShallow,   // 4-8 direct replies, chains of 1-2
};

TreeShape shape_of(Shape shape);

struct TextOptions {
  std::size_t topics = 8;
  std::size_t words_per_topic = 6;
  std::size_t depth_levels = 6;     // deeper posts reuse the last level
  std::size_t depth_synonyms = 4;
  std::size_t filler_words = 40;
  double topic_word_rate = 1.0;     // chance a reply carries its branch topic
  double depth_word_rate = 1.0;     // chance a reply carries a depth word
  std::size_t topic_words = 2;
  std::size_t min_filler = 1, max_filler = 3;
};

/// The words of the fixed lexicon (independent of any seed).
struct Lexicon {
  std::vector<std::vector<std::string>> topics;
  std::vector<std::vector<std::string>> depths;
  std::vector<std::string> claim;
  std::vector<std::string> filler;
  static Lexicon make(const TextOptions& options);
};

/// One conversation of the given shape. Posts are in canonical order.
ClaimConversation make_conversation(const TreeShape& shape, const TextOptions& text,
                                    std::uint64_t seed, std::string id);
ClaimConversation make_conversation(Shape shape, const TextOptions& text, std::uint64_t seed,
                                    std::string id);

/// `count` conversations of one shape.
ConversationDataset make_dataset(Shape shape, std::size_t count, const TextOptions& text,
                                 std::uint64_t seed);

/// Labeled claims: class "deep" or "shallow" by reply pattern, alternating so
/// the classes are balanced.
ConversationDataset make_interaction_claims(std::size_t count, const TextOptions& text,
                                            std::uint64_t seed,
                                            const TreeShape& deep = shape_of(Shape::kDeep),
                                            const TreeShape& shallow = shape_of(Shape::kShallow));

/// Unlabeled mix of all shapes.
ConversationDataset make_pretraining_mix(std::size_t count, const TextOptions& text,
                                         std::uint64_t seed);

/// Every post text of a dataset, in order.
std::vector<std::string> post_texts(const ConversationDataset& data);

/// Random recursive tree of n posts (parent of i uniform in [0, i)), texts
/// "post <i>".
ClaimConversation random_tree(std::size_t n, std::uint64_t seed);

/// Random tree with the given depth bias: with probability `chain_bias` a new
/// post replies to the most recent post, otherwise to a uniform earlier post.
ClaimConversation random_tree_biased(std::size_t n, double chain_bias, std::uint64_t seed);

/// Graphs whose label is the depth parity (1 odd, 0 even) of the single
/// feature-marked node, which sits at depth 1 or 2. Feature 0 marks the root,
/// feature 1 the marked node, the rest is Gaussian noise.
std::vector<GraphExample> depth_parity_graphs(std::size_t count, std::size_t feature_dim,
                                              std::uint64_t seed);

}  // namespace pep::synth
