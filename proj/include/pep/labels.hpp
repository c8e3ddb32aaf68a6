#pragma once

// Root / branch / parent relation labels derived from a propagation tree.

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <span>
#include <string_view>
#include <vector>

#include "pep/conversation.hpp"

namespace pep {

enum class PepTask : int { kRoot = 0, kBranch = 1, kParent = 2 };
inline constexpr PepTask kAllTasks[] = {PepTask::kRoot, PepTask::kBranch, PepTask::kParent};
std::string_view to_string(PepTask task);

/// Symmetric boolean n x n matrix. The diagonal is always false and is never
/// supervised.
class RelationMatrix {
 public:
  RelationMatrix() = default;
  explicit RelationMatrix(std::size_t n) : n_(n), bits_(n * n, 0) {}

  std::size_t n() const { return n_; }
  bool operator()(std::size_t i, std::size_t j) const { return bits_[i * n_ + j] != 0; }
  void set(std::size_t i, std::size_t j, bool v);  // sets (i,j) and (j,i); i != j
  std::size_t count_true() const;

  bool operator==(const RelationMatrix&) const = default;

 private:
  std::size_t n_ = 0;
  std::vector<std::uint8_t> bits_;
};

struct LabelMatrices {
  RelationMatrix rop;
  RelationMatrix brp;
  RelationMatrix pap;
  RelationMatrix mask;  // true on every supervised (off-diagonal) entry

  std::size_t n() const { return mask.n(); }
  const RelationMatrix& for_task(PepTask task) const;
  bool operator==(const LabelMatrices&) const = default;
};

// All derivations expect a canonically ordered conversation.
RelationMatrix derive_root_labels(const ClaimConversation& tree);
RelationMatrix derive_branch_labels(const ClaimConversation& tree);
RelationMatrix derive_parent_labels(const ClaimConversation& tree);
RelationMatrix supervision_mask(std::size_t n);
LabelMatrices derive_all(const ClaimConversation& tree);

/// Per-tree derivation over a whole collection, parallel across trees.
std::vector<LabelMatrices> derive_all(std::span<const ClaimConversation> trees);

/// Sparse export: one line per supervised unordered pair i < j,
/// "tree_id i j rop brp pap" with 0/1 flags.
void write_sparse_labels(std::ostream& out, const ClaimConversation& tree,
                         const LabelMatrices& labels);

}  // namespace pep
