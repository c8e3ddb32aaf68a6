#pragma once

// Claim conversations: a source post plus replies linked by parent indices,
// held as rooted propagation trees in canonical order.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace pep {

struct Post {
  std::string text;
  std::optional<std::size_t> parent;  // empty only for the source post

  bool operator==(const Post&) const = default;
};

struct ClaimConversation {
  std::string id;
  std::vector<Post> posts;
  std::optional<std::string> label;

  std::size_t size() const { return posts.size(); }
  bool operator==(const ClaimConversation&) const = default;
};

struct ConversationDataset {
  std::vector<ClaimConversation> conversations;
  bool labeled = false;
};

enum class ConversationErrorKind {
  kMalformed,
  kEmpty,
  kMissingRoot,
  kMultipleRoots,
  kDanglingParent,
  kCycle,
  kEmptyText,
  kLabelMismatch,
};

std::string_view to_string(ConversationErrorKind kind);

class ConversationError : public std::runtime_error {
 public:
  ConversationError(ConversationErrorKind kind, std::string record_id,
                    const std::string& detail);

  ConversationErrorKind kind() const { return kind_; }
  const std::string& record_id() const { return record_id_; }

 private:
  ConversationErrorKind kind_;
  std::string record_id_;
};

/// Throws ConversationError if the posts do not form a single rooted tree with
/// non-blank text. Order is not checked.
void validate(const ClaimConversation& conv);

/// True when the root sits at index 0 and parent(i) < i for every i >= 1.
bool is_canonical(const ClaimConversation& conv);

/// Validates and returns the conversation in canonical order. An order that is
/// already topological (root first, parents before children) is kept as is;
/// otherwise posts are laid out breadth-first from the root with siblings in
/// their original relative order, and parent indices are rewritten.
ClaimConversation canonical_order(ClaimConversation conv);

/// Parses one JSON record {"id", "label"?, "posts": [{"text", "parent"}]} and
/// returns it validated and canonically ordered. Unknown fields (timestamps,
/// user metadata) are ignored.
ClaimConversation parse_conversation(std::string_view record);

/// Serializes a conversation back into the single-line record format.
std::string to_record(const ClaimConversation& conv);

/// Depth of every post (root = 0). Requires canonical order.
std::vector<std::size_t> depths(const ClaimConversation& conv);

/// Permutation applied by canonical_order: result[new_index] = old_index.
std::vector<std::size_t> canonical_permutation(const ClaimConversation& conv);

struct LoadResult {
  ConversationDataset dataset;
  std::vector<std::string> errors;  // "line N: <record id>: <reason>"
};

/// Reads one record per line. Invalid records are skipped and reported; blank
/// lines are ignored. The dataset is labeled iff every record has a label; a
/// mix of labeled and unlabeled records is reported as an error on the first
/// offending line.
LoadResult load_conversations(const std::string& path);

/// Throws std::runtime_error carrying the whole validation report when any
/// record is rejected.
ConversationDataset load_conversations_strict(const std::string& path);

void save_conversations(const ConversationDataset& dataset, const std::string& path);

struct TreeStats {
  std::size_t claims = 0;
  std::size_t total_posts = 0;
  double mean_posts = 0.0;
  std::size_t max_posts = 0;
  std::size_t max_depth = 0;
  std::map<std::size_t, std::size_t> tree_depth_histogram;  // max depth -> trees
  std::map<std::size_t, std::size_t> post_depth_histogram;  // depth -> posts
};

/// Throws std::invalid_argument on an empty dataset.
TreeStats tree_stats(const ConversationDataset& dataset);

/// Keeps the root plus a uniformly grown random connected subtree of at most
/// `cap` posts. Trees within the cap are returned unchanged.
ClaimConversation subsample_tree(const ClaimConversation& conv, std::size_t cap,
                                 std::uint64_t seed);

inline constexpr std::size_t kDefaultTreeCap = 128;

}  // namespace pep
