#include "treepop/tree.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_set>

#include <fmt/format.h>

#include "treepop/error.hpp"

namespace treepop {

std::string_view to_string(NodeRole role) {
  switch (role) {
    case NodeRole::root: return "root";
    case NodeRole::internal: return "internal";
    case NodeRole::leaf: return "leaf";
    case NodeRole::uncertainty_leaf: return "uncertainty-leaf";
  }
  return "?";
}

std::optional<NodeRole> parse_node_role(std::string_view text) {
  if (text == "root") return NodeRole::root;
  if (text == "internal") return NodeRole::internal;
  if (text == "leaf") return NodeRole::leaf;
  if (text == "uncertainty-leaf") return NodeRole::uncertainty_leaf;
  return std::nullopt;
}

std::string_view spec_kind_name(const BranchSpec& spec) {
  struct Visitor {
    std::string_view operator()(const DirichletSurvey&) const { return "dirichlet_survey"; }
    std::string_view operator()(const BetaSurveyPerChild&) const { return "beta_surveys"; }
    std::string_view operator()(const DirichletPrior&) const { return "dirichlet_prior"; }
    std::string_view operator()(const FixedProbabilities&) const { return "fixed"; }
  };
  return std::visit(Visitor{}, spec);
}

bool BranchGroupSpec::child_is_sampleable(std::size_t position) const {
  if (const auto* beta = std::get_if<BetaSurveyPerChild>(&spec)) {
    return position < beta->per_child.size() && beta->per_child[position].has_value();
  }
  return position < children.size();
}

std::optional<std::size_t> BranchGroupSpec::position_of(const NodeId& child) const {
  auto it = std::find(children.begin(), children.end(), child);
  if (it == children.end()) return std::nullopt;
  return static_cast<std::size_t>(it - children.begin());
}

EvidenceTree::EvidenceTree(std::string name, std::vector<NodeRecord> nodes, std::vector<Edge> edges,
                           std::vector<BranchGroupSpec> branch_groups)
    : name_{std::move(name)},
      nodes_{std::move(nodes)},
      edges_{std::move(edges)},
      branch_groups_{std::move(branch_groups)} {
  // First occurrence wins; duplicates are reported by validate_tree.
  for (std::size_t i = 0; i < nodes_.size(); ++i) node_index_.try_emplace(nodes_[i].id, i);
  for (const auto& e : edges_) parent_.try_emplace(e.child, e.parent);
  for (std::size_t i = 0; i < branch_groups_.size(); ++i) group_index_.try_emplace(branch_groups_[i].parent, i);
}

const NodeRecord* EvidenceTree::find(const NodeId& id) const {
  auto it = node_index_.find(id);
  return it == node_index_.end() ? nullptr : &nodes_[it->second];
}

const NodeRecord& EvidenceTree::node(const NodeId& id) const {
  if (const auto* n = find(id)) return *n;
  throw DataError(fmt::format("unknown node '{}'", id.str()));
}

std::optional<NodeId> EvidenceTree::parent_of(const NodeId& id) const {
  auto it = parent_.find(id);
  if (it == parent_.end()) return std::nullopt;
  return it->second;
}

std::vector<NodeId> EvidenceTree::children_of(const NodeId& id) const {
  std::vector<NodeId> out;
  for (const auto& e : edges_) {
    if (e.parent == id) out.push_back(e.child);
  }
  return out;
}

const BranchGroupSpec* EvidenceTree::group_for(const NodeId& parent) const {
  auto it = group_index_.find(parent);
  return it == group_index_.end() ? nullptr : &branch_groups_[it->second];
}

std::optional<std::size_t> EvidenceTree::group_index(const NodeId& parent) const {
  auto it = group_index_.find(parent);
  if (it == group_index_.end()) return std::nullopt;
  return it->second;
}

NodeId EvidenceTree::root() const {
  std::optional<NodeId> found;
  for (const auto& n : nodes_) {
    if (n.role != NodeRole::root) continue;
    if (found) throw DataError("tree has multiple roots");
    found = n.id;
  }
  if (!found) throw DataError("tree has no root");
  return *found;
}

std::vector<Edge> EvidenceTree::path_from_root(const NodeId& id) const {
  std::vector<Edge> path;
  NodeId current = id;
  std::unordered_set<NodeId> seen{current};
  while (auto p = parent_of(current)) {
    if (!seen.insert(*p).second) throw DataError(fmt::format("cycle through node '{}'", p->str()));
    path.push_back(Edge{*p, current});
    current = *p;
  }
  if (node(current).role != NodeRole::root) {
    throw DataError(fmt::format("node '{}' is not connected to the root", id.str()));
  }
  std::reverse(path.begin(), path.end());
  return path;
}

namespace {

std::size_t spec_size(const BranchSpec& spec) {
  struct Visitor {
    std::size_t operator()(const DirichletSurvey& s) const { return s.counts.size(); }
    std::size_t operator()(const BetaSurveyPerChild& s) const { return s.per_child.size(); }
    std::size_t operator()(const DirichletPrior& s) const { return s.concentration.size(); }
    std::size_t operator()(const FixedProbabilities& s) const { return s.probabilities.size(); }
  };
  return std::visit(Visitor{}, spec);
}

void check_spec_values(const BranchGroupSpec& g, std::vector<Violation>& out) {
  const auto where = fmt::format("group '{}'", g.parent.str());
  if (const auto* s = std::get_if<DirichletSurvey>(&g.spec)) {
    std::int64_t sum = 0;
    for (auto x : s->counts) {
      if (x < 0) out.push_back({"negative survey count", where});
      sum += x;
    }
    if (s->total < 0) out.push_back({"negative survey total", where});
    if (sum > s->total) {
      out.push_back({"survey counts exceed total", fmt::format("{}: sum {} > n {}", where, sum, s->total)});
    }
  } else if (const auto* s = std::get_if<BetaSurveyPerChild>(&g.spec)) {
    bool any = false;
    for (std::size_t i = 0; i < s->per_child.size(); ++i) {
      if (!s->per_child[i]) continue;
      any = true;
      const auto& c = *s->per_child[i];
      if (c.x < 0 || c.n < 0 || c.x > c.n) {
        out.push_back({"survey count exceeds size", fmt::format("{} child {}: x {} n {}", where,
                                                                 g.children.at(i).str(), c.x, c.n)});
      }
    }
    if (!any) out.push_back({"no informed child", where});
  } else if (const auto* s = std::get_if<DirichletPrior>(&g.spec)) {
    for (double a : s->concentration) {
      if (!(a > 0.0) || !std::isfinite(a)) out.push_back({"nonpositive concentration", where});
    }
  } else if (const auto* s = std::get_if<FixedProbabilities>(&g.spec)) {
    double sum = 0.0;
    for (double p : s->probabilities) {
      if (!(p >= 0.0)) out.push_back({"negative probability", where});
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-12) {
      out.push_back({"probabilities do not sum to one", fmt::format("{}: sum {}", where, sum)});
    }
  }
}

}  // namespace

std::vector<Violation> validate_tree(const EvidenceTree& tree) {
  std::vector<Violation> out;

  std::unordered_set<NodeId> ids;
  std::vector<NodeId> roots;
  for (const auto& n : tree.nodes()) {
    if (n.id.empty()) out.push_back({"empty node id", "node with empty label"});
    if (!ids.insert(n.id).second) out.push_back({"duplicate node", n.id.str()});
    if (n.role == NodeRole::root) roots.push_back(n.id);
    if (n.observed_count) {
      if (*n.observed_count < 0) out.push_back({"negative count", n.id.str()});
      if (n.role == NodeRole::uncertainty_leaf) {
        out.push_back({"count on uncertainty leaf", n.id.str()});
      } else if (n.role != NodeRole::leaf) {
        out.push_back({"count on non-leaf", n.id.str()});
      }
    }
  }
  if (roots.empty()) out.push_back({"no root", tree.name()});
  if (roots.size() > 1) {
    std::string list;
    for (const auto& r : roots) list += (list.empty() ? "" : ",") + r.str();
    out.push_back({"multiple roots", list});
  }

  std::unordered_map<NodeId, int> parent_count;
  for (const auto& e : tree.edges()) {
    const auto ctx = fmt::format("{} -> {}", e.parent.str(), e.child.str());
    if (!tree.contains(e.parent) || !tree.contains(e.child)) {
      out.push_back({"unknown node in edge", ctx});
      continue;
    }
    if (e.parent == e.child) out.push_back({"self loop", ctx});
    if (++parent_count[e.child] == 2) out.push_back({"multiple parents", e.child.str()});
    if (tree.node(e.child).role == NodeRole::root) out.push_back({"root has parent", ctx});
    const auto prole = tree.node(e.parent).role;
    if (prole == NodeRole::leaf || prole == NodeRole::uncertainty_leaf) {
      out.push_back({"leaf has children", e.parent.str()});
    }
  }

  for (const auto& n : tree.nodes()) {
    if (n.role == NodeRole::root) continue;
    if (parent_count.find(n.id) == parent_count.end()) {
      out.push_back({"orphan node", n.id.str()});
      continue;
    }
    // Walk up; a walk that revisits a node or ends away from the root is broken.
    std::unordered_set<NodeId> seen{n.id};
    NodeId cur = n.id;
    bool reached_root = false;
    while (auto p = tree.parent_of(cur)) {
      if (!tree.contains(*p) || !seen.insert(*p).second) break;
      cur = *p;
      if (tree.node(cur).role == NodeRole::root) {
        reached_root = true;
        break;
      }
    }
    if (!reached_root) out.push_back({"unreachable node", n.id.str()});
  }

  std::unordered_set<NodeId> grouped;
  for (const auto& g : tree.branch_groups()) {
    const auto where = fmt::format("group '{}'", g.parent.str());
    if (!tree.contains(g.parent)) {
      out.push_back({"unknown group parent", where});
      continue;
    }
    if (!grouped.insert(g.parent).second) out.push_back({"duplicate branch group", where});
    auto actual = tree.children_of(g.parent);
    if (actual.empty()) {
      out.push_back({"group on childless node", where});
      continue;
    }
    std::multiset<NodeId> want(actual.begin(), actual.end());
    std::multiset<NodeId> have(g.children.begin(), g.children.end());
    if (want != have) out.push_back({"children mismatch", where});
    if (spec_size(g.spec) != g.children.size()) {
      out.push_back({"spec dimension mismatch",
                     fmt::format("{}: {} children, {} values", where, g.children.size(), spec_size(g.spec))});
      continue;
    }
    check_spec_values(g, out);
  }

  for (const auto& n : tree.nodes()) {
    const bool has_children = !tree.children_of(n.id).empty();
    if (n.role == NodeRole::internal && !has_children) out.push_back({"internal without children", n.id.str()});
    if (has_children && grouped.find(n.id) == grouped.end()) out.push_back({"missing branch group", n.id.str()});
  }
  return out;
}

void require_valid(const EvidenceTree& tree) {
  auto violations = validate_tree(tree);
  if (violations.empty()) return;
  std::string msg = fmt::format("invalid tree '{}':", tree.name());
  for (const auto& v : violations) msg += fmt::format(" [{}: {}]", v.kind, v.context);
  throw DataError(msg);
}

std::vector<PathDescriptor> informed_leaves(const EvidenceTree& tree) {
  require_valid(tree);
  std::vector<PathDescriptor> out;
  for (const auto& n : tree.nodes()) {
    if (n.role != NodeRole::leaf || !n.observed_count) continue;
    auto path = tree.path_from_root(n.id);
    bool sampleable = !path.empty();
    for (const auto& e : path) {
      const auto* g = tree.group_for(e.parent);
      auto pos = g ? g->position_of(e.child) : std::nullopt;
      if (!pos || !g->child_is_sampleable(*pos)) {
        sampleable = false;
        break;
      }
    }
    if (sampleable) out.push_back(PathDescriptor{n.id, std::move(path)});
  }
  return out;
}

}  // namespace treepop
