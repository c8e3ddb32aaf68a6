#include "pep/text.hpp"

#include <algorithm>
#include <charconv>
#include <unordered_map>

#include "pep/unicode.hpp"

namespace pep::text {

namespace detail {
std::string_view emoji_alias_table();
}

namespace {

using unicode::is_ascii_word_char;
using unicode::is_space;
using unicode::is_word_char;

const std::unordered_map<char32_t, std::string_view>& emoji_map() {
  static const auto table = [] {
    std::unordered_map<char32_t, std::string_view> m;
    const std::string_view src = detail::emoji_alias_table();
    std::size_t pos = 0;
    while (pos < src.size()) {
      std::size_t end = src.find('\n', pos);
      if (end == std::string_view::npos) end = src.size();
      const std::string_view line = src.substr(pos, end - pos);
      pos = end + 1;
      if (line.empty() || line.front() == '#') continue;
      const std::size_t tab = line.find('\t');
      if (tab == std::string_view::npos) continue;
      unsigned cp = 0;
      std::from_chars(line.data(), line.data() + tab, cp, 16);
      m.emplace(static_cast<char32_t>(cp), line.substr(tab + 1));
    }
    return m;
  }();
  return table;
}

bool is_digit(char32_t c) { return c >= U'0' && c <= U'9'; }

char32_t ascii_lower(char32_t c) { return (c >= U'A' && c <= U'Z') ? c + 32 : c; }

bool starts_with_ci(const std::u32string& s, std::size_t at, std::string_view prefix) {
  if (s.size() - at < prefix.size()) return false;
  for (std::size_t k = 0; k < prefix.size(); ++k)
    if (ascii_lower(s[at + k]) != static_cast<char32_t>(prefix[k])) return false;
  return true;
}

bool starts_with(const std::u32string& s, std::size_t at, std::string_view lit) {
  if (s.size() - at < lit.size()) return false;
  for (std::size_t k = 0; k < lit.size(); ++k)
    if (s[at + k] != static_cast<char32_t>(lit[k])) return false;
  return true;
}

void append_ascii(std::u32string& out, std::string_view lit) {
  for (char c : lit) out.push_back(static_cast<char32_t>(c));
}

// Zero-width joiners, variation selectors and the keycap mark only modify the
// preceding emoji.
bool is_emoji_modifier(char32_t cp) {
  return cp == 0x200D || cp == 0xFE0E || cp == 0xFE0F || cp == 0x20E3;
}

}  // namespace

const NormalizeRules& default_rules() {
  static const NormalizeRules rules;
  return rules;
}

std::optional<std::string_view> emoji_alias(char32_t cp) {
  const auto& m = emoji_map();
  const auto it = m.find(cp);
  if (it == m.end()) return std::nullopt;
  return it->second;
}

std::size_t emoji_table_size() { return emoji_map().size(); }

std::string normalize(std::string_view raw, const NormalizeRules& rules) {
  std::u32string cps = unicode::decode_utf8(raw);
  if (rules.fold_fonts) cps = unicode::fold_compat(cps);

  // Whitespace runs -> one space, trimmed.
  std::u32string spaced;
  spaced.reserve(cps.size());
  for (char32_t cp : cps) {
    if (is_space(cp)) {
      if (!spaced.empty() && spaced.back() != U' ') spaced.push_back(U' ');
    } else {
      spaced.push_back(cp);
    }
  }
  if (!spaced.empty() && spaced.back() == U' ') spaced.pop_back();

  // Boundaries are judged against what has already been emitted, so a second
  // pass sees exactly the same boundaries.
  std::u32string out;
  out.reserve(spaced.size());
  std::size_t i = 0;
  while (i < spaced.size()) {
    const char32_t prev = out.empty() ? U' ' : out.back();
    if (rules.replace_urls && !is_word_char(prev)) {
      const bool hit = std::any_of(rules.url_prefixes.begin(), rules.url_prefixes.end(),
                                   [&](const std::string& p) { return starts_with_ci(spaced, i, p); });
      if (hit) {
        append_ascii(out, kUrlToken);
        while (i < spaced.size() && spaced[i] != U' ') ++i;
        continue;
      }
    }
    if (rules.replace_mentions && spaced[i] == U'@' && !is_word_char(prev) && prev != U'<' &&
        i + 1 < spaced.size() && is_ascii_word_char(spaced[i + 1])) {
      append_ascii(out, kUserToken);
      ++i;
      while (i < spaced.size() && is_ascii_word_char(spaced[i])) ++i;
      continue;
    }
    out.push_back(spaced[i++]);
  }
  return unicode::encode_utf8(out);
}

std::vector<std::string> tokenize(std::string_view normalized) {
  const std::u32string s = unicode::decode_utf8(normalized);
  std::vector<std::string> tokens;
  const std::size_t n = s.size();
  auto emit = [&](std::size_t from, std::size_t to) {
    tokens.push_back(unicode::encode_utf8(std::u32string_view(s).substr(from, to - from)));
  };
  // Apostrophes and hyphens join word characters; '.' and ',' join digits.
  auto joins = [&](std::size_t k) {
    if (k + 1 >= n || k == 0) return false;
    const char32_t c = s[k];
    if (c == U'\'' || c == 0x2019 || c == U'-')
      return is_word_char(s[k - 1]) && is_word_char(s[k + 1]);
    if (c == U'.' || c == U',')
      return is_digit(s[k - 1]) && is_digit(s[k + 1]);
    return false;
  };

  std::size_t i = 0;
  while (i < n) {
    const char32_t c = s[i];
    if (is_space(c) || is_emoji_modifier(c)) {
      ++i;
      continue;
    }
    if (starts_with(s, i, kUserToken)) {
      tokens.emplace_back(kUserToken);
      i += kUserToken.size();
      continue;
    }
    if (starts_with(s, i, kUrlToken)) {
      tokens.emplace_back(kUrlToken);
      i += kUrlToken.size();
      continue;
    }
    if ((c == U'#' || c == U'@') && i + 1 < n && is_word_char(s[i + 1])) {
      std::size_t j = i + 1;
      while (j < n && is_word_char(s[j])) ++j;
      emit(i, j);
      i = j;
      continue;
    }
    if (const auto alias = emoji_alias(c)) {
      tokens.emplace_back(*alias);
      ++i;
      continue;
    }
    if (is_word_char(c)) {
      std::size_t j = i + 1;
      while (j < n && (is_word_char(s[j]) || joins(j))) ++j;
      emit(i, j);
      i = j;
      continue;
    }
    if (c == U'.') {
      std::size_t j = i + 1;
      while (j < n && s[j] == U'.') ++j;
      emit(i, j);
      i = j;
      continue;
    }
    emit(i, i + 1);
    ++i;
  }
  return tokens;
}

}  // namespace pep::text
