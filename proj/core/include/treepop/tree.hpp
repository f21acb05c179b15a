#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "treepop/node_id.hpp"

namespace treepop {

enum class NodeRole { root, internal, leaf, uncertainty_leaf };

std::string_view to_string(NodeRole role);
std::optional<NodeRole> parse_node_role(std::string_view text);

struct NodeRecord {
  NodeId id;
  NodeRole role = NodeRole::leaf;
  std::optional<std::int64_t> observed_count;
  std::string description;

  friend bool operator==(const NodeRecord&, const NodeRecord&) = default;
};

struct Edge {
  NodeId parent;
  NodeId child;

  friend bool operator==(const Edge&, const Edge&) = default;
};

/// Successes `x` out of a survey of size `n`.
struct SurveyCount {
  std::int64_t x = 0;
  std::int64_t n = 0;

  friend bool operator==(const SurveyCount&, const SurveyCount&) = default;
};

/// One survey of size `total` informs every child: Dirichlet(x_i + 1).
struct DirichletSurvey {
  std::vector<std::int64_t> counts;
  std::int64_t total = 0;

  friend bool operator==(const DirichletSurvey&, const DirichletSurvey&) = default;
};

/// Children informed by separate surveys, Beta(x + 1, n - x + 1) each.
/// Empty entries mark children without an informing survey.
struct BetaSurveyPerChild {
  std::vector<std::optional<SurveyCount>> per_child;

  friend bool operator==(const BetaSurveyPerChild&, const BetaSurveyPerChild&) = default;
};

struct DirichletPrior {
  std::vector<double> concentration;

  friend bool operator==(const DirichletPrior&, const DirichletPrior&) = default;
};

struct FixedProbabilities {
  std::vector<double> probabilities;

  friend bool operator==(const FixedProbabilities&, const FixedProbabilities&) = default;
};

using BranchSpec = std::variant<DirichletSurvey, BetaSurveyPerChild, DirichletPrior, FixedProbabilities>;

std::string_view spec_kind_name(const BranchSpec& spec);

/// Distribution of one parent's outgoing branch probabilities. Probability
/// vectors everywhere follow the order of `children`.
struct BranchGroupSpec {
  NodeId parent;
  std::vector<NodeId> children;
  BranchSpec spec;

  /// False only for children left uninformed inside a BetaSurveyPerChild group.
  bool child_is_sampleable(std::size_t position) const;
  std::optional<std::size_t> position_of(const NodeId& child) const;

  friend bool operator==(const BranchGroupSpec&, const BranchGroupSpec&) = default;
};

/// Directed rooted tree of population nodes. Immutable after construction;
/// the constructor indexes but does not validate (see validate_tree).
class EvidenceTree {
 public:
  EvidenceTree() = default;
  EvidenceTree(std::string name, std::vector<NodeRecord> nodes, std::vector<Edge> edges,
               std::vector<BranchGroupSpec> branch_groups);

  const std::string& name() const { return name_; }
  const std::vector<NodeRecord>& nodes() const { return nodes_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<BranchGroupSpec>& branch_groups() const { return branch_groups_; }

  const NodeRecord* find(const NodeId& id) const;
  /// Throws DataError for unknown ids.
  const NodeRecord& node(const NodeId& id) const;
  bool contains(const NodeId& id) const { return find(id) != nullptr; }

  std::optional<NodeId> parent_of(const NodeId& id) const;
  /// Children in edge declaration order.
  std::vector<NodeId> children_of(const NodeId& id) const;
  const BranchGroupSpec* group_for(const NodeId& parent) const;
  std::optional<std::size_t> group_index(const NodeId& parent) const;

  /// The unique root; throws DataError when there is not exactly one.
  NodeId root() const;

  /// Root-to-node edge sequence; throws DataError on cycles or dangling parents.
  std::vector<Edge> path_from_root(const NodeId& id) const;

  friend bool operator==(const EvidenceTree& a, const EvidenceTree& b) {
    return a.name_ == b.name_ && a.nodes_ == b.nodes_ && a.edges_ == b.edges_ &&
           a.branch_groups_ == b.branch_groups_;
  }

 private:
  std::string name_;
  std::vector<NodeRecord> nodes_;
  std::vector<Edge> edges_;
  std::vector<BranchGroupSpec> branch_groups_;

  std::unordered_map<NodeId, std::size_t> node_index_;
  std::unordered_map<NodeId, NodeId> parent_;
  std::unordered_map<NodeId, std::size_t> group_index_;
};

struct Violation {
  std::string kind;     ///< short stable key, e.g. "multiple roots"
  std::string context;  ///< node/edge detail

  friend bool operator==(const Violation&, const Violation&) = default;
};

std::vector<Violation> validate_tree(const EvidenceTree& tree);

/// Throws DataError listing every violation when the tree is invalid.
void require_valid(const EvidenceTree& tree);

struct PathDescriptor {
  NodeId leaf;
  std::vector<Edge> edges;  ///< root to leaf

  friend bool operator==(const PathDescriptor&, const PathDescriptor&) = default;
};

/// Leaves with an observed count whose every edge can be sampled, in node
/// declaration order.
std::vector<PathDescriptor> informed_leaves(const EvidenceTree& tree);

}  // namespace treepop
