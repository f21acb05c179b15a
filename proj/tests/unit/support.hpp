#pragma once

#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "treepop/tree.hpp"
#include "treepop/tree_spec.hpp"

namespace treepop::test {

inline std::filesystem::path data_path(const std::string& name) {
  return std::filesystem::path(TREEPOP_TEST_DATA_DIR) / name;
}

inline const TreeSpec& full_spec() {
  static const TreeSpec spec = load_tree_spec(data_path("full_opioid.tree"));
  return spec;
}

inline const TreeSpec& simple_spec() {
  static const TreeSpec spec = load_tree_spec(data_path("simple_opioid.tree"));
  return spec;
}

inline const TreeSpec& bayes_spec() {
  static const TreeSpec spec = load_tree_spec(data_path("full_opioid_bayes.tree"));
  return spec;
}

inline EvidenceTree tree_from_yaml(const std::string& yaml) { return parse_tree_spec(yaml).tree; }

inline std::vector<std::string> labels(const std::vector<PathDescriptor>& paths) {
  std::vector<std::string> out;
  for (const auto& p : paths) out.push_back(p.leaf.str());
  return out;
}

inline double mean_of(const std::vector<double>& x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

inline double variance_of(const std::vector<double>& x) {
  const double m = mean_of(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size() - 1);
}

/// Standard error of the mean from non-overlapping batch means.
inline double batch_standard_error(const std::vector<double>& x, std::size_t batches = 50) {
  const std::size_t len = x.size() / batches;
  std::vector<double> means;
  for (std::size_t b = 0; b < batches; ++b) {
    double s = 0.0;
    for (std::size_t i = b * len; i < (b + 1) * len; ++i) s += x[i];
    means.push_back(s / static_cast<double>(len));
  }
  return std::sqrt(variance_of(means) / static_cast<double>(batches));
}

/// Random valid tree: node i > 0 hangs under a random earlier internal
/// node, leaves carry counts with probability `observed`, and groups mix
/// surveys, priors and fixed probabilities.
inline EvidenceTree random_tree(std::mt19937_64& gen, int size, double observed = 0.8) {
  std::vector<int> parent(static_cast<std::size_t>(size), -1);
  std::vector<std::vector<int>> kids(static_cast<std::size_t>(size));
  for (int i = 1; i < size; ++i) {
    // Attach to a node that already has a child or to a fresh parent, so
    // every internal node ends up with at least two children.
    std::uniform_int_distribution<int> pick(0, i - 1);
    int p = pick(gen);
    parent[static_cast<std::size_t>(i)] = p;
    kids[static_cast<std::size_t>(p)].push_back(i);
  }
  for (int i = 0; i < size; ++i) {
    if (kids[static_cast<std::size_t>(i)].size() == 1) {
      // Give single children a sibling leaf.
      parent.push_back(i);
      kids.emplace_back();
      kids[static_cast<std::size_t>(i)].push_back(static_cast<int>(parent.size()) - 1);
    }
  }
  auto label = [](int i) { return NodeId(fmt::format("N{}", i)); };
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::int64_t> count(0, 5000);

  std::vector<NodeRecord> nodes;
  std::vector<Edge> edges;
  std::vector<BranchGroupSpec> groups;
  for (std::size_t i = 0; i < parent.size(); ++i) {
    NodeRecord n;
    n.id = label(static_cast<int>(i));
    n.role = parent[i] < 0 ? NodeRole::root : (kids[i].empty() ? NodeRole::leaf : NodeRole::internal);
    if (n.role == NodeRole::leaf && unit(gen) < observed) n.observed_count = count(gen) + 1;
    nodes.push_back(n);
    if (parent[i] >= 0) edges.push_back(Edge{label(parent[i]), n.id});
  }
  for (std::size_t i = 0; i < parent.size(); ++i) {
    if (kids[i].empty()) continue;
    BranchGroupSpec g;
    g.parent = label(static_cast<int>(i));
    for (int c : kids[i]) g.children.push_back(label(c));
    const double kind = unit(gen);
    if (kind < 0.6) {
      DirichletSurvey s;
      for (std::size_t c = 0; c < g.children.size(); ++c) s.counts.push_back(count(gen));
      s.total = std::accumulate(s.counts.begin(), s.counts.end(), std::int64_t{0});
      g.spec = s;
    } else if (kind < 0.9) {
      DirichletPrior d;
      for (std::size_t c = 0; c < g.children.size(); ++c) d.concentration.push_back(0.5 + 10.0 * unit(gen));
      g.spec = d;
    } else {
      FixedProbabilities f;
      double total = 0.0;
      for (std::size_t c = 0; c < g.children.size(); ++c) {
        f.probabilities.push_back(0.1 + unit(gen));
        total += f.probabilities.back();
      }
      for (auto& p : f.probabilities) p /= total;
      g.spec = f;
    }
    groups.push_back(std::move(g));
  }
  return EvidenceTree("random", std::move(nodes), std::move(edges), std::move(groups));
}

}  // namespace treepop::test
