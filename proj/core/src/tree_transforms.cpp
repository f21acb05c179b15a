#include "treepop/tree_transforms.hpp"

#include <algorithm>
#include <unordered_set>

#include <fmt/format.h>

#include "treepop/error.hpp"

namespace treepop {

namespace {

// Sums the spec entries at `positions` into the first of them and drops the rest.
BranchSpec merge_spec(const BranchSpec& spec, const std::vector<std::size_t>& positions, const NodeId& parent) {
  const std::size_t keep = positions.front();
  auto is_dropped = [&](std::size_t i) {
    return i != keep && std::find(positions.begin(), positions.end(), i) != positions.end();
  };
  auto fold = [&](const auto& values, auto add) {
    std::decay_t<decltype(values)> out;
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (is_dropped(i)) continue;
      out.push_back(values[i]);
      if (i == keep) {
        for (std::size_t p : positions) {
          if (p != keep) out.back() = add(out.back(), values[p]);
        }
      }
    }
    return out;
  };
  auto plus = [](auto a, auto b) { return a + b; };

  if (const auto* s = std::get_if<DirichletSurvey>(&spec)) {
    return DirichletSurvey{fold(s->counts, plus), s->total};
  }
  if (const auto* s = std::get_if<DirichletPrior>(&spec)) {
    return DirichletPrior{fold(s->concentration, plus)};
  }
  if (const auto* s = std::get_if<FixedProbabilities>(&spec)) {
    return FixedProbabilities{fold(s->probabilities, plus)};
  }
  const auto& beta = std::get<BetaSurveyPerChild>(spec);
  auto merge_survey = [&](const std::optional<SurveyCount>& a, const std::optional<SurveyCount>& b) {
    if (!a && !b) return std::optional<SurveyCount>{};
    if (!a || !b || a->n != b->n) {
      throw DataError(fmt::format("cannot aggregate across sources in group '{}'", parent.str()));
    }
    return std::optional<SurveyCount>{SurveyCount{a->x + b->x, a->n}};
  };
  return BetaSurveyPerChild{fold(beta.per_child, merge_survey)};
}

}  // namespace

EvidenceTree aggregate_siblings(const EvidenceTree& tree, const std::vector<SiblingMerge>& merges) {
  require_valid(tree);
  auto nodes = tree.nodes();
  auto edges = tree.edges();
  auto groups = tree.branch_groups();

  std::unordered_set<NodeId> consumed;
  for (const auto& m : merges) {
    if (m.members.empty()) throw DataError(fmt::format("empty merge under '{}'", m.parent.str()));
    auto gi = tree.group_index(m.parent);
    if (!gi) throw DataError(fmt::format("'{}' has no branch group", m.parent.str()));
    for (const auto& id : m.members) {
      const auto& n = tree.node(id);
      if (tree.parent_of(id) != m.parent) {
        throw DataError(fmt::format("'{}' is not a child of '{}'", id.str(), m.parent.str()));
      }
      if (n.role != NodeRole::leaf) throw DataError(fmt::format("'{}' is not a leaf", id.str()));
      if (!consumed.insert(id).second) throw DataError(fmt::format("'{}' merged twice", id.str()));
    }
    const bool relabels_member =
        std::find(m.members.begin(), m.members.end(), m.merged) != m.members.end();
    if (!relabels_member && tree.contains(m.merged)) {
      throw DataError(fmt::format("merged label '{}' already in use", m.merged.str()));
    }

    std::optional<std::int64_t> count;
    std::string description;
    for (const auto& id : m.members) {
      const auto& n = tree.node(id);
      if (n.observed_count) count = count.value_or(0) + *n.observed_count;
      if (!n.description.empty()) description += (description.empty() ? "" : " + ") + n.description;
    }

    // Node list: merged leaf replaces the first member in declaration order.
    bool placed = false;
    std::vector<NodeRecord> next_nodes;
    for (auto& n : nodes) {
      if (std::find(m.members.begin(), m.members.end(), n.id) == m.members.end()) {
        next_nodes.push_back(std::move(n));
      } else if (!placed) {
        next_nodes.push_back(NodeRecord{m.merged, NodeRole::leaf, count, description});
        placed = true;
      }
    }
    nodes = std::move(next_nodes);

    placed = false;
    std::vector<Edge> next_edges;
    for (auto& e : edges) {
      if (std::find(m.members.begin(), m.members.end(), e.child) == m.members.end()) {
        next_edges.push_back(std::move(e));
      } else if (!placed) {
        next_edges.push_back(Edge{m.parent, m.merged});
        placed = true;
      }
    }
    edges = std::move(next_edges);

    auto& g = groups[*gi];
    std::vector<std::size_t> positions;
    for (std::size_t i = 0; i < g.children.size(); ++i) {
      if (std::find(m.members.begin(), m.members.end(), g.children[i]) != m.members.end()) positions.push_back(i);
    }
    g.spec = merge_spec(g.spec, positions, m.parent);
    std::vector<NodeId> children;
    for (std::size_t i = 0; i < g.children.size(); ++i) {
      if (i == positions.front()) {
        children.push_back(m.merged);
      } else if (std::find(positions.begin(), positions.end(), i) == positions.end()) {
        children.push_back(g.children[i]);
      }
    }
    g.children = std::move(children);
  }

  EvidenceTree out(tree.name(), std::move(nodes), std::move(edges), std::move(groups));
  require_valid(out);
  return out;
}

EvidenceTree delete_node_data(const EvidenceTree& tree, const std::set<NodeId>& targets) {
  auto nodes = tree.nodes();
  auto groups = tree.branch_groups();
  for (const auto& id : targets) {
    const auto& n = tree.node(id);
    if (!n.observed_count) throw DataError(fmt::format("no data to delete at '{}'", id.str()));
  }
  for (auto& n : nodes) {
    if (targets.count(n.id)) n.observed_count.reset();
  }
  for (auto& g : groups) {
    const bool survey = std::holds_alternative<DirichletSurvey>(g.spec) ||
                        std::holds_alternative<BetaSurveyPerChild>(g.spec);
    const bool touched = std::any_of(g.children.begin(), g.children.end(),
                                     [&](const NodeId& c) { return targets.count(c) > 0; });
    if (survey && touched) {
      g.spec = DirichletPrior{std::vector<double>(g.children.size(), kDegradedConcentration)};
    }
  }
  return EvidenceTree(tree.name(), std::move(nodes), tree.edges(), std::move(groups));
}

EvidenceTree replace_branch_group(const EvidenceTree& tree, const BranchGroupSpec& group) {
  auto gi = tree.group_index(group.parent);
  if (!gi) throw DataError(fmt::format("'{}' has no branch group", group.parent.str()));
  auto groups = tree.branch_groups();
  groups[*gi] = group;
  EvidenceTree out(tree.name(), tree.nodes(), tree.edges(), std::move(groups));
  require_valid(out);
  return out;
}

}  // namespace treepop
