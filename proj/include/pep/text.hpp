#pragma once

// Social-media text normalization and tweet-aware word tokenization.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace pep::text {

inline constexpr std::string_view kUserToken = "<@user>";
inline constexpr std::string_view kUrlToken = "<url>";

/// Mention and link patterns. A mention is "@" followed by ASCII word
/// characters, not preceded by a word character or '<'. A link starts at a
/// word boundary with one of `url_prefixes` (case-insensitive) and runs to the
/// next whitespace.
struct NormalizeRules {
  bool fold_fonts = true;
  bool replace_mentions = true;
  bool replace_urls = true;
  std::vector<std::string> url_prefixes = {
      "http://", "https://", "ftp://",   "www.",    "t.co/",  "bit.ly/",
      "goo.gl/", "tinyurl.com/", "ow.ly/", "buff.ly/", "dlvr.it/", "ift.tt/",
      "fb.me/",  "youtu.be/", "amzn.to/"};
};

const NormalizeRules& default_rules();

/// Folds stylized fonts, collapses whitespace runs to single spaces (trimmed),
/// and rewrites links to <url> and mentions to <@user>. Malformed UTF-8 bytes
/// become U+FFFD. Idempotent.
std::string normalize(std::string_view raw, const NormalizeRules& rules = default_rules());

/// Splits normalized text into word tokens: hashtags and mentions stay whole,
/// <@user> and <url> are atomic, each emoji becomes its ":alias:" token,
/// apostrophes and hyphens inside words are kept, punctuation is split off
/// (runs of '.' stay together).
std::vector<std::string> tokenize(std::string_view normalized);

/// ":alias:" for an emoji code point, if it is in the alias table.
std::optional<std::string_view> emoji_alias(char32_t cp);
std::size_t emoji_table_size();

}  // namespace pep::text
