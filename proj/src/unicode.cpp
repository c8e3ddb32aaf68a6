#include "pep/unicode.hpp"

#include <algorithm>
#include <array>

namespace pep::unicode {

namespace {

std::size_t sequence_length(unsigned char b) {
  if (b < 0x80) return 1;
  if (b >= 0xC2 && b <= 0xDF) return 2;
  if (b >= 0xE0 && b <= 0xEF) return 3;
  if (b >= 0xF0 && b <= 0xF4) return 4;
  return 0;
}

// Decodes one sequence at s[i]; returns the byte length or 0 when malformed.
std::size_t decode_one(std::string_view s, std::size_t i, char32_t& cp) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  const std::size_t len = sequence_length(b0);
  if (len == 0 || i + len > s.size()) return 0;
  if (len == 1) {
    cp = b0;
    return 1;
  }
  char32_t v = b0 & (0x7F >> len);
  for (std::size_t k = 1; k < len; ++k) {
    const auto b = static_cast<unsigned char>(s[i + k]);
    if ((b & 0xC0) != 0x80) return 0;
    v = (v << 6) | (b & 0x3F);
  }
  // Overlong forms, surrogates and values past U+10FFFF.
  if ((len == 3 && v < 0x800) || (len == 4 && (v < 0x10000 || v > 0x10FFFF)) ||
      (v >= 0xD800 && v <= 0xDFFF))
    return 0;
  cp = v;
  return len;
}

struct LetterlikeFold {
  char32_t cp;
  std::u32string_view to;
};

// Letterlike Symbols block entries with a compatibility decomposition.
constexpr std::array<LetterlikeFold, 49> kLetterlike{{
    {0x2102, U"C"},      {0x2103, U"°C"}, {0x2105, U"c/o"},    {0x2106, U"c/u"},
    {0x2107, U"Ɛ"}, {0x2109, U"°F"}, {0x210A, U"g"},      {0x210B, U"H"},
    {0x210C, U"H"},      {0x210D, U"H"},       {0x210E, U"h"},      {0x210F, U"ħ"},
    {0x2110, U"I"},      {0x2111, U"I"},       {0x2112, U"L"},      {0x2113, U"l"},
    {0x2115, U"N"},      {0x2116, U"No"},      {0x2119, U"P"},      {0x211A, U"Q"},
    {0x211B, U"R"},      {0x211C, U"R"},       {0x211D, U"R"},      {0x2120, U"SM"},
    {0x2121, U"TEL"},    {0x2122, U"TM"},      {0x2124, U"Z"},      {0x2126, U"Ω"},
    {0x2128, U"Z"},      {0x212A, U"K"},       {0x212B, U"Å"}, {0x212C, U"B"},
    {0x212D, U"C"},      {0x212F, U"e"},       {0x2130, U"E"},      {0x2131, U"F"},
    {0x2133, U"M"},      {0x2134, U"o"},       {0x2135, U"א"}, {0x2136, U"ב"},
    {0x2137, U"ג"}, {0x2138, U"ד"},  {0x2139, U"i"},      {0x213B, U"FAX"},
    {0x213C, U"π"}, {0x213D, U"γ"},  {0x213E, U"Γ"}, {0x213F, U"Π"},
    {0x2140, U"∑"},
}};

// Super/subscript block 2070..208E; 0 marks unassigned or undecomposed slots.
constexpr std::array<char32_t, 31> kScripts{
    U'0', U'i', 0,    0,    U'4', U'5', U'6', U'7', U'8', U'9', U'+',
    0x2212, U'=', U'(', U')', U'n', U'0', U'1', U'2', U'3', U'4', U'5',
    U'6', U'7', U'8', U'9', U'+', 0x2212, U'=', U'(', U')'};

constexpr std::array<std::u32string_view, 7> kLigatures{U"ff", U"fi",  U"fl", U"ffi",
                                                        U"ffl", U"st", U"st"};

// One mathematical Greek alphabet (58 slots) folded to the base letters.
char32_t math_greek(unsigned i) {
  if (i < 25) return i == 17 ? 0x0398 : 0x0391 + i;
  if (i == 25) return 0x2207;
  if (i < 51) return 0x03B1 + (i - 26);
  constexpr std::array<char32_t, 7> tail{0x2202, 0x03B5, 0x03B8, 0x03BA,
                                         0x03C6, 0x03C1, 0x03C0};
  return tail[i - 51];
}

void append_number(std::u32string& out, unsigned v) {
  if (v >= 10) out.push_back(U'0' + v / 10);
  out.push_back(U'0' + v % 10);
}

}  // namespace

std::u32string decode_utf8(std::string_view s) {
  std::u32string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size();) {
    char32_t cp = 0;
    const std::size_t len = decode_one(s, i, cp);
    if (len == 0) {
      out.push_back(kReplacement);
      ++i;
    } else {
      out.push_back(cp);
      i += len;
    }
  }
  return out;
}

std::optional<std::size_t> find_invalid_utf8(std::string_view s) {
  for (std::size_t i = 0; i < s.size();) {
    char32_t cp = 0;
    const std::size_t len = decode_one(s, i, cp);
    if (len == 0) return i;
    i += len;
  }
  return std::nullopt;
}

void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

std::string encode_utf8(std::u32string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char32_t cp : s) append_utf8(out, cp);
  return out;
}

void fold_compat(char32_t cp, std::u32string& out) {
  if (cp < 0xA0) {
    out.push_back(cp);
    return;
  }
  if (cp == 0xA0 || (cp >= 0x2000 && cp <= 0x200A) || cp == 0x202F || cp == 0x205F ||
      cp == 0x3000) {
    out.push_back(U' ');
    return;
  }
  if (cp == 0xB2 || cp == 0xB3) {
    out.push_back(U'2' + (cp - 0xB2));
    return;
  }
  if (cp == 0xB9) {
    out.push_back(U'1');
    return;
  }
  if (cp >= 0xFF01 && cp <= 0xFF5E) {
    out.push_back(cp - 0xFF01 + 0x21);
    return;
  }
  if (cp >= 0x2070 && cp <= 0x208E) {
    const char32_t to = kScripts[cp - 0x2070];
    out.push_back(to ? to : cp);
    return;
  }
  if (cp >= 0x2102 && cp <= 0x2140) {
    const auto it = std::find_if(kLetterlike.begin(), kLetterlike.end(),
                                 [cp](const LetterlikeFold& f) { return f.cp == cp; });
    if (it != kLetterlike.end())
      out.append(it->to);
    else
      out.push_back(cp);
    return;
  }
  if (cp >= 0x2145 && cp <= 0x2149) {
    constexpr std::u32string_view dd = U"Ddeij";
    out.push_back(dd[cp - 0x2145]);
    return;
  }
  if (cp >= 0x2460 && cp <= 0x2473) {
    append_number(out, cp - 0x2460 + 1);
    return;
  }
  if (cp >= 0x24B6 && cp <= 0x24CF) {
    out.push_back(U'A' + (cp - 0x24B6));
    return;
  }
  if (cp >= 0x24D0 && cp <= 0x24E9) {
    out.push_back(U'a' + (cp - 0x24D0));
    return;
  }
  if (cp == 0x24EA) {
    out.push_back(U'0');
    return;
  }
  if (cp >= 0xFB00 && cp <= 0xFB06) {
    out.append(kLigatures[cp - 0xFB00]);
    return;
  }
  if (cp >= 0x1D400 && cp <= 0x1D6A3) {
    const unsigned i = (cp - 0x1D400) % 52;
    out.push_back(i < 26 ? U'A' + i : U'a' + (i - 26));
    return;
  }
  if (cp == 0x1D6A4 || cp == 0x1D6A5) {
    out.push_back(cp == 0x1D6A4 ? 0x0131 : 0x0237);
    return;
  }
  if (cp >= 0x1D6A8 && cp <= 0x1D7C9) {
    out.push_back(math_greek((cp - 0x1D6A8) % 58));
    return;
  }
  if (cp == 0x1D7CA || cp == 0x1D7CB) {
    out.push_back(cp == 0x1D7CA ? 0x03DC : 0x03DD);
    return;
  }
  if (cp >= 0x1D7CE && cp <= 0x1D7FF) {
    out.push_back(U'0' + (cp - 0x1D7CE) % 10);
    return;
  }
  if (cp >= 0x1F130 && cp <= 0x1F149) {
    out.push_back(U'A' + (cp - 0x1F130));
    return;
  }
  out.push_back(cp);
}

std::u32string fold_compat(std::u32string_view s) {
  std::u32string out;
  out.reserve(s.size());
  for (char32_t cp : s) fold_compat(cp, out);
  return out;
}

bool is_space(char32_t cp) {
  return cp == U' ' || (cp >= 0x09 && cp <= 0x0D) || cp == 0x85 || cp == 0xA0 ||
         cp == 0x1680 || (cp >= 0x2000 && cp <= 0x200A) || cp == 0x2028 || cp == 0x2029 ||
         cp == 0x202F || cp == 0x205F || cp == 0x3000;
}

bool is_ascii_word_char(char32_t cp) {
  return (cp >= U'a' && cp <= U'z') || (cp >= U'A' && cp <= U'Z') ||
         (cp >= U'0' && cp <= U'9') || cp == U'_';
}

bool is_word_char(char32_t cp) {
  if (cp < 0x80) return is_ascii_word_char(cp);
  if (cp < 0xC0) return cp == 0xAA || cp == 0xB5 || cp == 0xBA;  // Latin-1 punctuation
  if (cp == 0xD7 || cp == 0xF7) return false;
  if (is_space(cp)) return false;
  if (cp >= 0x2000 && cp <= 0x2BFF) return false;  // punctuation, arrows, math, dingbats
  if (cp >= 0x3000 && cp <= 0x303F) return false;  // CJK punctuation
  if (cp >= 0xFE00 && cp <= 0xFE0F) return false;  // variation selectors
  if (cp >= 0xFFF0 && cp <= 0xFFFF) return false;  // specials, U+FFFD
  if (cp >= 0x1F000 && cp <= 0x1FAFF) return false;  // emoji and pictographs
  if (cp >= 0xE0000) return false;                   // tags
  return true;
}

}  // namespace pep::unicode
