#include "pep/synthetic.hpp"

#include <algorithm>
#include <random>
#include <set>

#include "pep/random.hpp"

namespace pep::synth {

namespace {

constexpr std::uint64_t kLexiconSeed = 0x5EED1E71C0ull;

std::size_t uniform(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng() % (hi - lo + 1));
}

bool chance(std::mt19937_64& rng, double p) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p;
}

template <class T>
const T& pick(std::mt19937_64& rng, const std::vector<T>& v) {
  return v[static_cast<std::size_t>(rng() % v.size())];
}

struct Builder {
  std::mt19937_64& rng;
  const Lexicon& lex;
  const TextOptions& opt;
  std::vector<Post> posts;
  std::vector<std::size_t> depth;
  std::vector<std::size_t> topic;  // branch topic; unused for the root

  std::string text_for(std::size_t d, std::size_t t) {
    std::vector<std::string> words;
    if (d == 0) {
      words.push_back(pick(rng, lex.claim));
      words.push_back(pick(rng, lex.claim));
    } else {
      if (chance(rng, opt.topic_word_rate))
        for (std::size_t i = 0; i < opt.topic_words; ++i) words.push_back(pick(rng, lex.topics[t]));
      if (chance(rng, opt.depth_word_rate))
        words.push_back(pick(rng, lex.depths[std::min(d, opt.depth_levels) - 1]));
    }
    const std::size_t fill = uniform(rng, opt.min_filler, opt.max_filler);
    for (std::size_t i = 0; i < fill; ++i) words.push_back(pick(rng, lex.filler));
    for (std::size_t i = words.size(); i > 1; --i) std::swap(words[i - 1], words[rng() % i]);
    std::string s;
    for (const auto& w : words) s += (s.empty() ? "" : " ") + w;
    return s;
  }

  std::size_t add(std::optional<std::size_t> parent, std::size_t t) {
    const std::size_t d = parent ? depth[*parent] + 1 : 0;
    posts.push_back({text_for(d, t), parent});
    depth.push_back(d);
    topic.push_back(t);
    return posts.size() - 1;
  }
};

std::vector<std::size_t> distinct_topics(std::mt19937_64& rng, std::size_t topics,
                                         std::size_t count) {
  std::vector<std::size_t> all(topics);
  for (std::size_t i = 0; i < topics; ++i) all[i] = i;
  for (std::size_t i = topics; i > 1; --i) std::swap(all[i - 1], all[rng() % i]);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(all[i % topics]);
  return out;
}

// Appends a chain of `length` replies under `from`; `side_rate` adds a leaf
// reply next to a chain post.
void grow_chain(Builder& b, std::size_t from, std::size_t length, std::size_t t,
                double side_rate) {
  std::size_t at = from;
  for (std::size_t k = 0; k < length; ++k) {
    at = b.add(at, t);
    if (k + 1 < length && chance(b.rng, side_rate)) b.add(at, t);
  }
}

}  // namespace

Lexicon Lexicon::make(const TextOptions& o) {
  static const char* const kOnsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p",
                                        "r", "s", "t", "v", "z", "sh", "ch"};
  static const char* const kVowels[] = {"a", "e", "i", "o", "u", "ai", "ou"};
  std::mt19937_64 rng(kLexiconSeed);
  std::set<std::string> used;
  auto word = [&] {
    for (;;) {
      std::string w;
      for (int s = 0; s < 3; ++s) {
        w += kOnsets[rng() % std::size(kOnsets)];
        w += kVowels[rng() % std::size(kVowels)];
      }
      if (used.insert(w).second) return w;
    }
  };
  auto pool = [&](std::size_t n) {
    std::vector<std::string> v;
    for (std::size_t i = 0; i < n; ++i) v.push_back(word());
    return v;
  };
  Lexicon lex;
  for (std::size_t t = 0; t < o.topics; ++t) lex.topics.push_back(pool(o.words_per_topic));
  for (std::size_t d = 0; d < o.depth_levels; ++d) lex.depths.push_back(pool(o.depth_synonyms));
  lex.claim = pool(6);
  lex.filler = pool(o.filler_words);
  return lex;
}

TreeShape shape_of(Shape shape) {
  switch (shape) {
    case Shape::kBranches: return {2, 4, 2, 5, 0.15};
    case Shape::kDeep: return {2, 3, 3, 6, 0.1};
    case Shape::kShallow: return {4, 8, 1, 2, 0.1};
  }
  return {};
}

ClaimConversation make_conversation(const TreeShape& shape, const TextOptions& text,
                                    std::uint64_t seed, std::string id) {
  if (text.topics == 0 || text.depth_levels == 0 || text.depth_synonyms == 0 ||
      text.filler_words == 0 || text.words_per_topic == 0 || text.max_filler < text.min_filler)
    throw std::invalid_argument("synthetic text options: empty pool");
  if (shape.min_branches == 0 || shape.min_branches > shape.max_branches ||
      shape.min_chain == 0 || shape.min_chain > shape.max_chain)
    throw std::invalid_argument("synthetic tree shape: empty range");
  const Lexicon lex = Lexicon::make(text);
  std::mt19937_64 rng(seed);
  Builder b{rng, lex, text, {}, {}, {}};
  const std::size_t root = b.add(std::nullopt, 0);
  const std::size_t branches = uniform(rng, shape.min_branches, shape.max_branches);
  const auto topics = distinct_topics(rng, text.topics, branches);
  for (std::size_t i = 0; i < branches; ++i)
    grow_chain(b, root, uniform(rng, shape.min_chain, shape.max_chain), topics[i],
               shape.side_rate);
  return {std::move(id), std::move(b.posts), std::nullopt};
}

ClaimConversation make_conversation(Shape shape, const TextOptions& text, std::uint64_t seed,
                                    std::string id) {
  return make_conversation(shape_of(shape), text, seed, std::move(id));
}

ConversationDataset make_dataset(Shape shape, std::size_t count, const TextOptions& text,
                                 std::uint64_t seed) {
  ConversationDataset out;
  for (std::size_t i = 0; i < count; ++i)
    out.conversations.push_back(
        make_conversation(shape, text, mix_seed({seed, i}), "c" + std::to_string(i)));
  return out;
}

ConversationDataset make_interaction_claims(std::size_t count, const TextOptions& text,
                                            std::uint64_t seed, const TreeShape& deep,
                                            const TreeShape& shallow) {
  ConversationDataset out;
  out.labeled = true;
  for (std::size_t i = 0; i < count; ++i) {
    auto conv = make_conversation(i % 2 == 0 ? deep : shallow, text, mix_seed({seed, i}),
                                  "claim" + std::to_string(i));
    conv.label = i % 2 == 0 ? "deep" : "shallow";
    out.conversations.push_back(std::move(conv));
  }
  return out;
}

ConversationDataset make_pretraining_mix(std::size_t count, const TextOptions& text,
                                         std::uint64_t seed) {
  static constexpr Shape kShapes[] = {Shape::kBranches, Shape::kDeep, Shape::kShallow};
  ConversationDataset out;
  for (std::size_t i = 0; i < count; ++i)
    out.conversations.push_back(make_conversation(kShapes[i % 3], text, mix_seed({seed, i}),
                                                  "u" + std::to_string(i)));
  return out;
}

std::vector<std::string> post_texts(const ConversationDataset& data) {
  std::vector<std::string> out;
  for (const auto& c : data.conversations)
    for (const auto& p : c.posts) out.push_back(p.text);
  return out;
}

ClaimConversation random_tree(std::size_t n, std::uint64_t seed) {
  return random_tree_biased(n, 0.0, seed);
}

ClaimConversation random_tree_biased(std::size_t n, double chain_bias, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("random_tree: n must be >= 1");
  std::mt19937_64 rng(seed);
  ClaimConversation conv;
  conv.id = "t" + std::to_string(seed % 1000000);
  conv.posts.push_back({"post 0", std::nullopt});
  for (std::size_t i = 1; i < n; ++i) {
    const std::size_t parent = chance(rng, chain_bias) ? i - 1 : rng() % i;
    conv.posts.push_back({"post " + std::to_string(i), parent});
  }
  return conv;
}

std::vector<GraphExample> depth_parity_graphs(std::size_t count, std::size_t feature_dim,
                                              std::uint64_t seed) {
  if (feature_dim < 2) throw std::invalid_argument("depth_parity_graphs: need >= 2 features");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.3);
  std::vector<GraphExample> out;
  for (std::size_t g = 0; g < count; ++g) {
    const std::size_t depth1 = uniform(rng, 2, 4);
    GraphExample ex;
    ex.parent.push_back(std::nullopt);
    for (std::size_t i = 0; i < depth1; ++i) ex.parent.push_back(0);
    const std::size_t depth2 = uniform(rng, 1, 4);
    for (std::size_t i = 0; i < depth2; ++i) ex.parent.push_back(1 + rng() % depth1);
    const std::size_t n = ex.parent.size();
    const int parity = static_cast<int>(g % 2);  // 1: marked node at depth 1
    const std::size_t marked =
        parity ? 1 + rng() % depth1 : 1 + depth1 + rng() % depth2;
    ex.features = Matrix(n, feature_dim);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 2; j < feature_dim; ++j) ex.features(i, j) = noise(rng);
    ex.features(0, 0) = 1.0;
    ex.features(marked, 1) = 1.0;
    ex.label = parity;
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace pep::synth
