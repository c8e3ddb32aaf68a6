#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace pep::unicode {

inline constexpr char32_t kReplacement = 0xFFFD;

/// Decodes UTF-8; every byte that does not start a well-formed sequence
/// becomes U+FFFD.
std::u32string decode_utf8(std::string_view s);
void append_utf8(std::string& out, char32_t cp);
std::string encode_utf8(std::u32string_view s);

/// Byte offset of the first malformed sequence, if any.
std::optional<std::size_t> find_invalid_utf8(std::string_view s);

/// Compatibility folding of stylized letterforms: mathematical alphanumerics,
/// fullwidth forms, letterlike symbols, circled and squared letters, super- and
/// subscripts, ligatures and the compatibility spaces. Appends the folded form
/// of `cp` to `out`; code points outside those blocks are appended unchanged.
void fold_compat(char32_t cp, std::u32string& out);
std::u32string fold_compat(std::u32string_view s);

bool is_space(char32_t cp);

/// Letters, digits and underscore, plus non-ASCII code points that are not
/// punctuation, symbols, spaces or emoji.
bool is_word_char(char32_t cp);
bool is_ascii_word_char(char32_t cp);

}  // namespace pep::unicode
