#pragma once

// Subword vocabulary (frequency-greedy pair merges), longest-match encoding,
// and corpus length statistics.

#include <array>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace pep {

using TokenId = std::int32_t;

enum Special : TokenId {
  kUnk = 0,
  kSep = 1,
  kPad = 2,
  kCls = 3,
  kMask = 4,
  kUser = 5,
  kUrl = 6,
};
inline constexpr std::size_t kNumSpecial = 7;
inline constexpr std::array<std::string_view, kNumSpecial> kSpecialTokens{
    "[UNK]", "[SEP]", "[PAD]", "[CLS]", "[MASK]", "<@user>", "<url>"};

inline constexpr std::size_t kMaxPositions = 128;
inline constexpr std::size_t kMaxVocabulary = 52000;
/// Marks a subword that continues the previous one inside a word.
inline constexpr std::string_view kContinuation = "##";

class Vocabulary {
 public:
  /// A vocabulary holding only the seven special tokens at ids 0..6.
  Vocabulary();

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::optional<TokenId> find(std::string_view token) const;
  static bool is_special(TokenId id) { return id >= 0 && id < static_cast<TokenId>(kNumSpecial); }

  /// Appends a token and returns its id; an existing token keeps its id.
  TokenId add(std::string_view token);

  /// One token per line, line number = id.
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);
  static Vocabulary from_tokens(std::span<const std::string> tokens);

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

/// [CLS] body... [SEP], at most kMaxPositions ids, no padding.
struct TokenSequence {
  std::vector<TokenId> ids;
  bool operator==(const TokenSequence&) const = default;
};

/// Trains a subword vocabulary on normalized+tokenized posts. All characters
/// seen are included (in word-initial and continuation form); then the most
/// frequent adjacent symbol pair is merged repeatedly, ties broken by the
/// lexicographically smallest (left, right), until `target_size` tokens exist
/// or nothing is left to merge. Throws on an empty corpus, target_size <= 7,
/// or an alphabet that does not fit under `max_size`.
Vocabulary build_vocab(std::span<const std::string> posts, std::size_t target_size,
                       std::size_t max_size = kMaxVocabulary);

/// Greedy longest-match segmentation of one word. Characters with no match
/// become [UNK].
std::vector<TokenId> segment_word(std::string_view word, const Vocabulary& vocab);

/// [CLS] + subwords + [SEP], dropping tail subwords beyond `max_positions`.
TokenSequence encode(std::span<const std::string> words, const Vocabulary& vocab,
                     std::size_t max_positions = kMaxPositions);
/// normalize -> tokenize -> encode.
TokenSequence encode_text(std::string_view raw, const Vocabulary& vocab,
                          std::size_t max_positions = kMaxPositions);

/// Rejoins continuation subwords into words; specials other than [UNK] and
/// the mention/link tokens are dropped.
std::vector<std::string> decode(const TokenSequence& seq, const Vocabulary& vocab);

/// Histogram of subword counts per post ([CLS]/[SEP] excluded, no truncation).
struct LengthStats {
  static constexpr std::size_t kExactLimit = 1024;  // exact counts below this length
  static constexpr std::size_t kBucketWidth = 10;
  static constexpr std::size_t kBuckets = 20;  // last bucket collects >= 190

  std::size_t posts = 0;
  std::size_t under_20 = 0;
  std::size_t over_100 = 0;  // strictly more than 100 tokens
  std::size_t max_length = 0;
  std::array<std::size_t, kBuckets> buckets{};
  std::vector<std::size_t> exact = std::vector<std::size_t>(kExactLimit + 1, 0);

  void add(std::size_t length);
  double fraction_under_20() const;
  double fraction_over_100() const;
  /// Smallest length L with at least q of the posts at length <= L; lengths past
  /// kExactLimit report kExactLimit.
  std::size_t quantile(double q) const;
};

LengthStats length_stats(std::span<const std::string> posts, const Vocabulary& vocab);
/// Streams one post per line; throws when the stream holds no posts.
LengthStats length_stats(std::istream& posts, const Vocabulary& vocab);

}  // namespace pep
