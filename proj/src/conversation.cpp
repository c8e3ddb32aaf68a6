#include "pep/conversation.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <random>
#include <sstream>

#include "json.hpp"

namespace pep {

using nlohmann::json;

std::string_view to_string(ConversationErrorKind kind) {
  switch (kind) {
    case ConversationErrorKind::kMalformed: return "malformed record";
    case ConversationErrorKind::kEmpty: return "no posts";
    case ConversationErrorKind::kMissingRoot: return "missing root";
    case ConversationErrorKind::kMultipleRoots: return "multiple roots";
    case ConversationErrorKind::kDanglingParent: return "dangling parent index";
    case ConversationErrorKind::kCycle: return "cycle";
    case ConversationErrorKind::kEmptyText: return "empty text";
    case ConversationErrorKind::kLabelMismatch: return "label mismatch";
  }
  return "unknown";
}

ConversationError::ConversationError(ConversationErrorKind kind, std::string record_id,
                                     const std::string& detail)
    : std::runtime_error("record '" + record_id + "': " + std::string(to_string(kind)) +
                         (detail.empty() ? "" : " (" + detail + ")")),
      kind_(kind),
      record_id_(std::move(record_id)) {}

namespace {

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
  });
}

std::size_t find_root(const ClaimConversation& conv) {
  std::optional<std::size_t> root;
  for (std::size_t i = 0; i < conv.posts.size(); ++i) {
    if (conv.posts[i].parent) continue;
    if (root)
      throw ConversationError(ConversationErrorKind::kMultipleRoots, conv.id,
                              "posts " + std::to_string(*root) + " and " + std::to_string(i));
    root = i;
  }
  if (!root) throw ConversationError(ConversationErrorKind::kMissingRoot, conv.id, "");
  return *root;
}

std::vector<std::vector<std::size_t>> children_of(const ClaimConversation& conv) {
  std::vector<std::vector<std::size_t>> kids(conv.posts.size());
  for (std::size_t i = 0; i < conv.posts.size(); ++i)
    if (conv.posts[i].parent) kids[*conv.posts[i].parent].push_back(i);
  return kids;
}

}  // namespace

void validate(const ClaimConversation& conv) {
  const std::size_t n = conv.posts.size();
  if (n == 0) throw ConversationError(ConversationErrorKind::kEmpty, conv.id, "");
  for (std::size_t i = 0; i < n; ++i) {
    if (is_blank(conv.posts[i].text))
      throw ConversationError(ConversationErrorKind::kEmptyText, conv.id,
                              "post " + std::to_string(i));
    const auto& p = conv.posts[i].parent;
    if (p && *p >= n)
      throw ConversationError(ConversationErrorKind::kDanglingParent, conv.id,
                              "post " + std::to_string(i) + " -> " + std::to_string(*p));
  }
  const std::size_t root = find_root(conv);

  // With one root and one parent per post, anything unreachable from the root
  // sits on a cycle.
  const auto kids = children_of(conv);
  std::vector<char> seen(n, 0);
  std::vector<std::size_t> stack{root};
  seen[root] = 1;
  std::size_t reached = 1;
  while (!stack.empty()) {
    const std::size_t v = stack.back();
    stack.pop_back();
    for (std::size_t c : kids[v]) {
      if (!seen[c]) {
        seen[c] = 1;
        ++reached;
        stack.push_back(c);
      }
    }
  }
  if (reached != n) {
    const auto it = std::find(seen.begin(), seen.end(), 0);
    throw ConversationError(ConversationErrorKind::kCycle, conv.id,
                            "post " + std::to_string(it - seen.begin()) +
                                " does not reach the root");
  }
}

bool is_canonical(const ClaimConversation& conv) {
  if (conv.posts.empty() || conv.posts[0].parent) return false;
  for (std::size_t i = 1; i < conv.posts.size(); ++i) {
    const auto& p = conv.posts[i].parent;
    if (!p || *p >= i) return false;
  }
  return true;
}

std::vector<std::size_t> canonical_permutation(const ClaimConversation& conv) {
  validate(conv);
  const std::size_t n = conv.posts.size();
  std::vector<std::size_t> order(n);
  if (is_canonical(conv)) {
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    return order;
  }
  const auto kids = children_of(conv);  // already in original position order
  std::deque<std::size_t> queue{find_root(conv)};
  std::size_t k = 0;
  while (!queue.empty()) {
    const std::size_t v = queue.front();
    queue.pop_front();
    order[k++] = v;
    for (std::size_t c : kids[v]) queue.push_back(c);
  }
  return order;
}

ClaimConversation canonical_order(ClaimConversation conv) {
  const auto order = canonical_permutation(conv);
  const std::size_t n = order.size();
  bool identity = true;
  for (std::size_t i = 0; i < n && identity; ++i) identity = order[i] == i;
  if (identity) return conv;

  std::vector<std::size_t> new_index(n);
  for (std::size_t i = 0; i < n; ++i) new_index[order[i]] = i;
  std::vector<Post> posts;
  posts.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Post p = std::move(conv.posts[order[i]]);
    if (p.parent) p.parent = new_index[*p.parent];
    posts.push_back(std::move(p));
  }
  conv.posts = std::move(posts);
  return conv;
}

ClaimConversation parse_conversation(std::string_view record) {
  json j;
  try {
    j = json::parse(record);
  } catch (const json::parse_error& e) {
    throw ConversationError(ConversationErrorKind::kMalformed, "?", e.what());
  }
  std::string id = "?";
  try {
    if (!j.is_object()) throw std::invalid_argument("record is not an object");
    if (!j.contains("id") || !j["id"].is_string())
      throw std::invalid_argument("missing string field 'id'");
    id = j["id"].get<std::string>();
    if (!j.contains("posts") || !j["posts"].is_array())
      throw std::invalid_argument("missing array field 'posts'");
  } catch (const std::invalid_argument& e) {
    throw ConversationError(ConversationErrorKind::kMalformed, id, e.what());
  }

  ClaimConversation conv;
  conv.id = id;
  if (j.contains("label") && !j["label"].is_null()) {
    if (!j["label"].is_string())
      throw ConversationError(ConversationErrorKind::kMalformed, id, "'label' must be a string");
    conv.label = j["label"].get<std::string>();
  }
  const auto& posts = j["posts"];
  for (std::size_t i = 0; i < posts.size(); ++i) {
    const auto& p = posts[i];
    const std::string where = "post " + std::to_string(i);
    if (!p.is_object() || !p.contains("text") || !p["text"].is_string())
      throw ConversationError(ConversationErrorKind::kMalformed, id, where + " lacks 'text'");
    Post post;
    post.text = p["text"].get<std::string>();
    if (p.contains("parent") && !p["parent"].is_null()) {
      const auto& par = p["parent"];
      if (!par.is_number_integer())
        throw ConversationError(ConversationErrorKind::kMalformed, id,
                                where + " has a non-integer parent");
      const auto v = par.get<std::int64_t>();
      if (v < 0)
        throw ConversationError(ConversationErrorKind::kDanglingParent, id,
                                where + " -> " + std::to_string(v));
      post.parent = static_cast<std::size_t>(v);
    }
    conv.posts.push_back(std::move(post));
  }
  return canonical_order(std::move(conv));
}

std::string to_record(const ClaimConversation& conv) {
  json j;
  j["id"] = conv.id;
  if (conv.label) j["label"] = *conv.label;
  json posts = json::array();
  for (const auto& p : conv.posts) {
    json jp;
    jp["text"] = p.text;
    jp["parent"] = p.parent ? json(*p.parent) : json(nullptr);
    posts.push_back(std::move(jp));
  }
  j["posts"] = std::move(posts);
  return j.dump();
}

std::vector<std::size_t> depths(const ClaimConversation& conv) {
  std::vector<std::size_t> d(conv.posts.size(), 0);
  for (std::size_t i = 1; i < conv.posts.size(); ++i) d[i] = d[*conv.posts[i].parent] + 1;
  return d;
}

LoadResult load_conversations(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open conversation file: " + path);
  LoadResult result;
  std::optional<bool> labeled;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (is_blank(line)) continue;
    try {
      auto conv = parse_conversation(line);
      const bool has_label = conv.label.has_value();
      if (labeled && *labeled != has_label)
        throw ConversationError(ConversationErrorKind::kLabelMismatch, conv.id,
                                has_label ? "labeled record in an unlabeled file"
                                          : "unlabeled record in a labeled file");
      labeled = has_label;
      result.dataset.conversations.push_back(std::move(conv));
    } catch (const ConversationError& e) {
      result.errors.push_back("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  result.dataset.labeled = labeled.value_or(false);
  return result;
}

ConversationDataset load_conversations_strict(const std::string& path) {
  auto result = load_conversations(path);
  if (!result.errors.empty()) {
    std::string report;
    for (const auto& e : result.errors) report += e + "\n";
    throw std::runtime_error(report);
  }
  return std::move(result.dataset);
}

void save_conversations(const ConversationDataset& dataset, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write conversation file: " + path);
  for (const auto& c : dataset.conversations) out << to_record(c) << '\n';
}

TreeStats tree_stats(const ConversationDataset& dataset) {
  if (dataset.conversations.empty()) throw std::invalid_argument("tree_stats: empty dataset");
  TreeStats s;
  for (const auto& c : dataset.conversations) {
    ++s.claims;
    s.total_posts += c.size();
    s.max_posts = std::max(s.max_posts, c.size());
    const auto d = depths(c);
    std::size_t tree_depth = 0;
    for (std::size_t v : d) {
      ++s.post_depth_histogram[v];
      tree_depth = std::max(tree_depth, v);
    }
    ++s.tree_depth_histogram[tree_depth];
    s.max_depth = std::max(s.max_depth, tree_depth);
  }
  s.mean_posts = static_cast<double>(s.total_posts) / static_cast<double>(s.claims);
  return s;
}

ClaimConversation subsample_tree(const ClaimConversation& conv, std::size_t cap,
                                 std::uint64_t seed) {
  if (cap == 0) throw std::invalid_argument("subsample_tree: cap must be >= 1");
  if (conv.size() <= cap) return conv;
  const auto kids = children_of(conv);
  std::mt19937_64 rng(seed);
  std::vector<char> keep(conv.size(), 0);
  keep[0] = 1;
  std::vector<std::size_t> frontier(kids[0].begin(), kids[0].end());
  for (std::size_t kept = 1; kept < cap && !frontier.empty(); ++kept) {
    std::uniform_int_distribution<std::size_t> pick(0, frontier.size() - 1);
    const std::size_t at = pick(rng);
    const std::size_t v = frontier[at];
    frontier[at] = frontier.back();
    frontier.pop_back();
    keep[v] = 1;
    frontier.insert(frontier.end(), kids[v].begin(), kids[v].end());
  }
  // Canonical order is topological, so the kept subset stays topological.
  ClaimConversation out;
  out.id = conv.id;
  out.label = conv.label;
  std::vector<std::size_t> remap(conv.size(), 0);
  for (std::size_t i = 0; i < conv.size(); ++i) {
    if (!keep[i]) continue;
    remap[i] = out.posts.size();
    Post p = conv.posts[i];
    if (p.parent) p.parent = remap[*p.parent];
    out.posts.push_back(std::move(p));
  }
  return out;
}

}  // namespace pep
