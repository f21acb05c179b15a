#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "treepop/rng.hpp"
#include "treepop/tree.hpp"
#include "treepop/tree_transforms.hpp"

namespace treepop {

struct RootPrior {
  enum class Kind { lognormal, uniform };
  Kind kind = Kind::lognormal;
  double log_mean = 0.0;
  double log_sd = 1.0;
  std::int64_t lower = 1;
  std::int64_t upper = 2;

  static RootPrior lognormal(double log_mean, double log_sd);
  static RootPrior uniform(std::int64_t lower, std::int64_t upper);

  /// Log density (lognormal evaluated at the integer z) or log mass (uniform
  /// on the integers lower..upper). -inf outside the support.
  double log_density(std::int64_t z) const;
  /// Integer starting value: exp(log_mean) or the midpoint of the bounds.
  std::int64_t center() const;
  double mean() const;
  double sd() const;

  /// Throws ModelError when the parameters are unusable.
  void check() const;

  friend bool operator==(const RootPrior&, const RootPrior&) = default;
};

/// Lognormal with median `center` whose mass on (lower, upper) is `mass`.
RootPrior lognormal_from_bounds(double lower, double upper, double center, double mass);

/// Dirichlet prior on one parent's branch probabilities.
struct GroupPrior {
  NodeId parent;
  /// Prefix of reported probability names, e.g. "p" gives p_A, p_B.
  std::string name;
  /// Order of `concentration`. Empty means the group's children in tree
  /// order, followed by the uncertainty leaf when there is one.
  std::vector<NodeId> order;
  std::vector<double> concentration;
  /// Label of the uncertainty leaf attached when the prior has one more
  /// component than the parent has children.
  std::optional<NodeId> uncertainty;

  friend bool operator==(const GroupPrior&, const GroupPrior&) = default;
};

struct BayesPriors {
  RootPrior root;
  std::vector<GroupPrior> groups;

  const GroupPrior* find(const NodeId& parent) const;
  GroupPrior* find_by_name(const std::string& name);

  friend bool operator==(const BayesPriors&, const BayesPriors&) = default;
};

/// Concentrations of merged children add, so the aggregated model keeps the
/// same marginal prior on the merged branch.
BayesPriors aggregate_priors(const BayesPriors& priors, const EvidenceTree& tree,
                             const std::vector<SiblingMerge>& merges);

/// Compiled Dirichlet-multinomial tree. Node indices follow the tree's node
/// order; attached uncertainty leaves come after every declared node, in
/// group order.
struct BayesModel {
  struct Group {
    std::string name;
    std::size_t parent = 0;
    std::vector<std::size_t> children;  ///< concentration order
    std::vector<double> alpha;
    double alpha_sum = 0.0;
    double lgamma_alpha_sum = 0.0;
    double sum_lgamma_alpha = 0.0;
  };

  EvidenceTree tree;  ///< with uncertainty leaves
  RootPrior root_prior;
  std::vector<Group> groups;
  std::vector<NodeId> ids;
  std::vector<std::optional<std::int64_t>> observed;
  std::vector<std::ptrdiff_t> parent;  ///< -1 at the root
  std::vector<std::vector<std::size_t>> children;
  std::vector<std::ptrdiff_t> group_of_parent;  ///< group whose parent is node i, or -1
  std::vector<std::size_t> post_order;
  std::size_t root = 0;
  std::vector<std::size_t> free_latents;
  /// For each free latent, the groups whose terms change when it moves.
  std::vector<std::vector<std::size_t>> affected_groups;

  std::size_t index_of(const NodeId& id) const;
  std::vector<NodeId> free_latent_ids() const;
};

/// Attaches uncertainty leaves and compiles the model. Groups without an
/// explicit prior fall back to a DirichletPrior spec in the tree. Throws
/// ModelError naming the group when a prior's dimension differs from the
/// child count by anything other than 0 or 1.
BayesModel build_model(const EvidenceTree& tree, const BayesPriors& priors);

struct LatentState {
  std::vector<std::int64_t> counts;                 ///< every node
  std::vector<std::vector<double>> branch_probs;    ///< per group, concentration order

  std::int64_t count(const BayesModel& model, const NodeId& id) const;
};

/// Sets every internal count to the sum of its children.
void derive_counts(const BayesModel& model, LatentState& state);

/// Starting point inside the typical set. Free leaves get the share of their
/// observed siblings implied by the prior means; subtrees without data take
/// their total from above and split it by prior means. Branch probabilities
/// start at the prior means.
LatentState initial_state(const BayesModel& model);

/// log p(Z) + sum over groups of Dirichlet log density of the branch
/// probabilities and the multinomial log likelihood of the child counts.
double log_posterior(const BayesModel& model, const LatentState& state);

/// Multinomial term of one group given the branch probabilities.
double group_log_likelihood(const BayesModel& model, std::size_t g, const LatentState& state);

/// Dirichlet-multinomial term of one group, branch probabilities integrated out.
double group_log_marginal(const BayesModel& model, std::size_t g, const std::vector<std::int64_t>& counts);

/// log p(Z) + sum of group_log_marginal: the posterior of the counts alone.
double collapsed_log_posterior(const BayesModel& model, const LatentState& state);

/// Redraws every group's probabilities from Dirichlet(alpha + child counts).
void gibbs_update_branch_probs(const BayesModel& model, LatentState& state, RngStream& rng);

}  // namespace treepop
