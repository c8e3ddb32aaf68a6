#include "pep/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <stdexcept>

#include "pep/text.hpp"
#include "pep/unicode.hpp"

namespace pep {

Vocabulary::Vocabulary() {
  for (auto s : kSpecialTokens) add(s);
}

std::optional<TokenId> Vocabulary::find(std::string_view token) const {
  const auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

TokenId Vocabulary::add(std::string_view token) {
  std::string key(token);
  if (const auto it = index_.find(key); it != index_.end()) return it->second;
  const auto id = static_cast<TokenId>(tokens_.size());
  index_.emplace(key, id);
  tokens_.push_back(std::move(key));
  return id;
}

Vocabulary Vocabulary::from_tokens(std::span<const std::string> tokens) {
  if (tokens.size() < kNumSpecial)
    throw std::invalid_argument("vocabulary: fewer entries than special tokens");
  for (std::size_t i = 0; i < kNumSpecial; ++i)
    if (tokens[i] != kSpecialTokens[i])
      throw std::invalid_argument("vocabulary: id " + std::to_string(i) + " must be " +
                                  std::string(kSpecialTokens[i]));
  if (tokens.size() > kMaxVocabulary)
    throw std::invalid_argument("vocabulary: more than " + std::to_string(kMaxVocabulary) +
                                " tokens");
  Vocabulary v;
  for (std::size_t i = kNumSpecial; i < tokens.size(); ++i) {
    if (tokens[i].empty()) throw std::invalid_argument("vocabulary: empty token at id " + std::to_string(i));
    if (v.find(tokens[i]))
      throw std::invalid_argument("vocabulary: duplicate token '" + tokens[i] + "'");
    v.add(tokens[i]);
  }
  return v;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write vocabulary: " + path);
  for (const auto& t : tokens_) out << t << '\n';
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open vocabulary: " + path);
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) tokens.push_back(line);
  return from_tokens(tokens);
}

namespace {

std::string strip_continuation(const std::string& s) {
  return s.starts_with(kContinuation) ? s.substr(kContinuation.size()) : s;
}

bool is_special_word(std::string_view w) { return w == text::kUserToken || w == text::kUrlToken; }

}  // namespace

Vocabulary build_vocab(std::span<const std::string> posts, std::size_t target_size,
                       std::size_t max_size) {
  if (posts.empty()) throw std::invalid_argument("build_vocab: empty corpus");
  if (target_size <= kNumSpecial)
    throw std::invalid_argument("build_vocab: target size must exceed the 7 special tokens");
  max_size = std::min(max_size, kMaxVocabulary);

  std::vector<std::vector<std::string>> tokenized(posts.size());
  const auto count = static_cast<std::ptrdiff_t>(posts.size());
#pragma omp parallel for schedule(dynamic, 64)
  for (std::ptrdiff_t i = 0; i < count; ++i) tokenized[i] = text::tokenize(text::normalize(posts[i]));

  std::map<std::string, std::size_t> word_freq;
  for (const auto& words : tokenized)
    for (const auto& w : words)
      if (!is_special_word(w)) ++word_freq[w];

  // Symbols are interned; a word is a sequence of symbol ids.
  std::vector<std::string> sym_str;
  std::unordered_map<std::string, int> sym_id;
  auto intern = [&](const std::string& s) {
    const auto [it, inserted] = sym_id.emplace(s, static_cast<int>(sym_str.size()));
    if (inserted) sym_str.push_back(s);
    return it->second;
  };

  struct Word {
    std::vector<int> syms;
    std::size_t freq;
  };
  std::vector<Word> words;
  words.reserve(word_freq.size());
  std::vector<std::string> alphabet;
  for (const auto& [w, f] : word_freq) {
    const std::u32string cps = unicode::decode_utf8(w);
    Word word{{}, f};
    for (std::size_t k = 0; k < cps.size(); ++k) {
      std::string sym = k == 0 ? std::string() : std::string(kContinuation);
      unicode::append_utf8(sym, cps[k]);
      if (!sym_id.contains(sym)) alphabet.push_back(sym);
      word.syms.push_back(intern(sym));
    }
    words.push_back(std::move(word));
  }
  std::sort(alphabet.begin(), alphabet.end());

  Vocabulary vocab;
  for (const auto& a : alphabet) vocab.add(a);
  if (vocab.size() > max_size)
    throw std::invalid_argument("build_vocab: " + std::to_string(vocab.size()) +
                                " characters do not fit under the vocabulary maximum");

  std::unordered_map<std::uint64_t, std::size_t> pair_count;
  auto key = [](int l, int r) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(l)) << 32) |
           static_cast<std::uint32_t>(r);
  };
  const std::size_t goal = std::min(target_size, max_size);
  while (vocab.size() < goal) {
    pair_count.clear();
    for (const auto& w : words)
      for (std::size_t k = 0; k + 1 < w.syms.size(); ++k) pair_count[key(w.syms[k], w.syms[k + 1])] += w.freq;
    if (pair_count.empty()) break;

    std::uint64_t best = 0;
    std::size_t best_count = 0;
    for (const auto& [k, c] : pair_count) {
      if (c < best_count) continue;
      if (c == best_count) {
        const auto& bl = sym_str[best >> 32];
        const auto& br = sym_str[best & 0xFFFFFFFFu];
        const auto& kl = sym_str[k >> 32];
        const auto& kr = sym_str[k & 0xFFFFFFFFu];
        if (std::tie(kl, kr) >= std::tie(bl, br)) continue;
      }
      best = k;
      best_count = c;
    }
    const int left = static_cast<int>(best >> 32);
    const int right = static_cast<int>(best & 0xFFFFFFFFu);
    const int merged = intern(sym_str[left] + strip_continuation(sym_str[right]));
    vocab.add(sym_str[merged]);

    for (auto& w : words) {
      auto& s = w.syms;
      std::size_t out = 0;
      for (std::size_t k = 0; k < s.size(); ++k) {
        if (k + 1 < s.size() && s[k] == left && s[k + 1] == right) {
          s[out++] = merged;
          ++k;
        } else {
          s[out++] = s[k];
        }
      }
      s.resize(out);
    }
  }
  return vocab;
}

std::vector<TokenId> segment_word(std::string_view word, const Vocabulary& vocab) {
  if (word == text::kUserToken) return {kUser};
  if (word == text::kUrlToken) return {kUrl};
  const std::u32string cps = unicode::decode_utf8(word);
  std::vector<TokenId> ids;
  std::size_t pos = 0;
  std::string candidate;
  while (pos < cps.size()) {
    bool matched = false;
    for (std::size_t end = cps.size(); end > pos; --end) {
      candidate.assign(pos == 0 ? "" : kContinuation);
      for (std::size_t k = pos; k < end; ++k) unicode::append_utf8(candidate, cps[k]);
      if (const auto id = vocab.find(candidate)) {
        ids.push_back(*id);
        pos = end;
        matched = true;
        break;
      }
    }
    if (!matched) return {kUnk};
  }
  return ids;
}

TokenSequence encode(std::span<const std::string> words, const Vocabulary& vocab,
                     std::size_t max_positions) {
  if (max_positions < 2) throw std::invalid_argument("encode: max_positions must be >= 2");
  TokenSequence seq;
  seq.ids.push_back(kCls);
  const std::size_t body_limit = max_positions - 1;
  for (const auto& w : words) {
    for (TokenId id : segment_word(w, vocab)) {
      if (seq.ids.size() >= body_limit) break;
      seq.ids.push_back(id);
    }
    if (seq.ids.size() >= body_limit) break;
  }
  seq.ids.push_back(kSep);
  return seq;
}

TokenSequence encode_text(std::string_view raw, const Vocabulary& vocab,
                          std::size_t max_positions) {
  return encode(text::tokenize(text::normalize(raw)), vocab, max_positions);
}

std::vector<std::string> decode(const TokenSequence& seq, const Vocabulary& vocab) {
  std::vector<std::string> words;
  for (TokenId id : seq.ids) {
    if (id == kCls || id == kSep || id == kPad || id == kMask) continue;
    const std::string& tok = vocab.token(id);
    if (!Vocabulary::is_special(id) && tok.starts_with(kContinuation) && !words.empty())
      words.back() += tok.substr(kContinuation.size());
    else
      words.push_back(tok);
  }
  return words;
}

void LengthStats::add(std::size_t length) {
  ++posts;
  if (length < 20) ++under_20;
  if (length > 100) ++over_100;
  max_length = std::max(max_length, length);
  ++buckets[std::min(length / kBucketWidth, kBuckets - 1)];
  ++exact[std::min(length, kExactLimit)];
}

double LengthStats::fraction_under_20() const {
  return posts ? static_cast<double>(under_20) / static_cast<double>(posts) : 0.0;
}

double LengthStats::fraction_over_100() const {
  return posts ? static_cast<double>(over_100) / static_cast<double>(posts) : 0.0;
}

std::size_t LengthStats::quantile(double q) const {
  if (posts == 0) throw std::logic_error("quantile of empty statistics");
  const double need = q * static_cast<double>(posts);
  std::size_t seen = 0;
  for (std::size_t len = 0; len <= kExactLimit; ++len) {
    seen += exact[len];
    if (static_cast<double>(seen) >= need && seen > 0) return len;
  }
  return kExactLimit;
}

namespace {
std::size_t body_length(std::string_view post, const Vocabulary& vocab) {
  std::size_t n = 0;
  for (const auto& w : text::tokenize(text::normalize(post))) n += segment_word(w, vocab).size();
  return n;
}
}  // namespace

LengthStats length_stats(std::span<const std::string> posts, const Vocabulary& vocab) {
  if (posts.empty()) throw std::invalid_argument("length_stats: empty corpus");
  LengthStats stats;
  for (const auto& p : posts) stats.add(body_length(p, vocab));
  return stats;
}

LengthStats length_stats(std::istream& posts, const Vocabulary& vocab) {
  LengthStats stats;
  std::string line;
  while (std::getline(posts, line)) stats.add(body_length(line, vocab));
  if (stats.posts == 0) throw std::invalid_argument("length_stats: empty corpus");
  return stats;
}

}  // namespace pep
