#include "pep/labels.hpp"

#include <algorithm>
#include <stdexcept>

namespace pep {

std::string_view to_string(PepTask task) {
  switch (task) {
    case PepTask::kRoot: return "rop";
    case PepTask::kBranch: return "brp";
    case PepTask::kParent: return "pap";
  }
  return "?";
}

void RelationMatrix::set(std::size_t i, std::size_t j, bool v) {
  if (i == j) throw std::invalid_argument("RelationMatrix: diagonal is not supervised");
  bits_[i * n_ + j] = v;
  bits_[j * n_ + i] = v;
}

std::size_t RelationMatrix::count_true() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

const RelationMatrix& LabelMatrices::for_task(PepTask task) const {
  switch (task) {
    case PepTask::kRoot: return rop;
    case PepTask::kBranch: return brp;
    case PepTask::kParent: return pap;
  }
  throw std::invalid_argument("unknown task");
}

RelationMatrix derive_root_labels(const ClaimConversation& tree) {
  RelationMatrix m(tree.size());
  for (std::size_t j = 1; j < tree.size(); ++j) m.set(0, j, true);
  return m;
}

RelationMatrix derive_branch_labels(const ClaimConversation& tree) {
  const std::size_t n = tree.size();
  // ancestors[j * n + i] == 1 iff i is a proper ancestor of j. Parents precede
  // children, so each row extends its parent's row.
  std::vector<std::uint8_t> ancestors(n * n, 0);
  RelationMatrix m(n);
  for (std::size_t j = 1; j < n; ++j) {
    const std::size_t p = *tree.posts[j].parent;
    std::copy_n(ancestors.begin() + static_cast<std::ptrdiff_t>(p * n), n,
                ancestors.begin() + static_cast<std::ptrdiff_t>(j * n));
    ancestors[j * n + p] = 1;
    for (std::size_t i = 0; i < j; ++i)
      if (ancestors[j * n + i]) m.set(i, j, true);
  }
  return m;
}

RelationMatrix derive_parent_labels(const ClaimConversation& tree) {
  RelationMatrix m(tree.size());
  for (std::size_t j = 1; j < tree.size(); ++j) m.set(*tree.posts[j].parent, j, true);
  return m;
}

RelationMatrix supervision_mask(std::size_t n) {
  RelationMatrix m(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) m.set(i, j, true);
  return m;
}

LabelMatrices derive_all(const ClaimConversation& tree) {
  if (!is_canonical(tree))
    throw std::invalid_argument("derive_all: conversation '" + tree.id + "' is not canonical");
  return {derive_root_labels(tree), derive_branch_labels(tree), derive_parent_labels(tree),
          supervision_mask(tree.size())};
}

std::vector<LabelMatrices> derive_all(std::span<const ClaimConversation> trees) {
  for (const auto& t : trees)
    if (!is_canonical(t))
      throw std::invalid_argument("derive_all: conversation '" + t.id + "' is not canonical");
  std::vector<LabelMatrices> out(trees.size());
  const auto count = static_cast<std::ptrdiff_t>(trees.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t t = 0; t < count; ++t) out[t] = derive_all(trees[t]);
  return out;
}

void write_sparse_labels(std::ostream& out, const ClaimConversation& tree,
                         const LabelMatrices& labels) {
  const std::size_t n = labels.n();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      out << tree.id << ' ' << i << ' ' << j << ' ' << labels.rop(i, j) << ' '
          << labels.brp(i, j) << ' ' << labels.pap(i, j) << '\n';
}

}  // namespace pep
