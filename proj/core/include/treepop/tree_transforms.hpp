#pragma once

#include <set>
#include <vector>

#include "treepop/tree.hpp"

namespace treepop {

/// Replace sibling leaves `members` under `parent` by a single leaf `merged`.
struct SiblingMerge {
  NodeId parent;
  std::vector<NodeId> members;
  NodeId merged;
};

/// Merges each sibling subset into one leaf. Counts add (absent when no member
/// is observed); survey x values add within the shared survey; prior
/// concentrations and fixed probabilities add. The merged leaf takes the
/// position of the first member. Throws DataError on invalid subsets or when
/// members come from surveys of different sizes.
EvidenceTree aggregate_siblings(const EvidenceTree& tree, const std::vector<SiblingMerge>& merges);

/// Concentration each child gets when a survey-informed group loses its data.
inline constexpr double kDegradedConcentration = 1.0;

/// Removes observed counts at `nodes`. Survey-informed groups containing any
/// of them degrade to a uniform DirichletPrior. Throws DataError when a named
/// node carries no data.
EvidenceTree delete_node_data(const EvidenceTree& tree, const std::set<NodeId>& nodes);

/// Swaps in `group` for the branch group with the same parent. Throws
/// DataError when no such group exists or the result is invalid.
EvidenceTree replace_branch_group(const EvidenceTree& tree, const BranchGroupSpec& group);

}  // namespace treepop
