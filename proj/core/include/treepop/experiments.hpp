#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "treepop/bayes_model.hpp"
#include "treepop/bayes_sampler.hpp"
#include "treepop/tree.hpp"
#include "treepop/tree_transforms.hpp"
#include "treepop/wmm.hpp"

namespace treepop {

enum class Engine { wmm, bayes };

std::string_view to_string(Engine engine);
std::optional<Engine> parse_engine(std::string_view text);

/// Replacement for one prior or branch distribution. Exactly one member is
/// set: `root` for the root prior, `group` for a WMM branch group, `prior`
/// for a Bayesian group prior (matched by parent; an empty order keeps the
/// existing one).
struct PriorOverride {
  std::optional<RootPrior> root;
  std::optional<BranchGroupSpec> group;
  std::optional<GroupPrior> prior;
};

/// Qualitative claim about a scenario's change relative to its baseline,
/// d = (mean - baseline mean) / baseline mean for `quantity`.
struct Expectation {
  enum class Kind {
    increase,          ///< d > threshold
    decrease,          ///< d < -threshold
    within,            ///< |d| < threshold
    exceeds_shift_of,  ///< |d| > |d of `other`'s same quantity|
  };
  std::string quantity;
  Kind kind = Kind::increase;
  double threshold = 0.0;
  std::string other;

  std::string describe() const;
};

struct Scenario {
  std::string name;
  Engine engine = Engine::wmm;
  EvidenceTree tree;
  std::optional<BayesPriors> priors;
  /// Applied first, then data deletion, then overrides.
  std::vector<SiblingMerge> aggregate;
  std::set<NodeId> delete_nodes;
  std::map<std::string, PriorOverride> overrides;
  WmmConfig wmm;
  ChainConfig bayes;
  std::optional<std::uint64_t> seed;
  /// Scenario whose estimates the deltas refer to; the suite baseline when unset.
  std::optional<std::string> compare_with;
  std::vector<Expectation> expectations;
  /// Reported quantities; empty means the root only.
  std::vector<std::string> quantities;
};

struct PreparedScenario {
  EvidenceTree tree;
  std::optional<BayesPriors> priors;
};

/// Applies aggregation, deletion and overrides. Throws DataError or
/// ModelError when they do not fit the tree.
PreparedScenario prepare_scenario(const Scenario& scenario);

struct SuiteOptions {
  std::uint64_t seed = 1;
  /// Every scenario without an explicit seed uses the suite seed itself.
  bool common_random_numbers = false;
  unsigned workers = 1;
  double max_rhat = 1.05;
  double min_ess = 400.0;
};

/// Explicit seed, else the suite seed under common random numbers, else a
/// hash of the suite seed and the scenario name.
std::uint64_t scenario_seed(const Scenario& scenario, const SuiteOptions& options);

struct QuantityEstimate {
  std::string name;
  double mean = 0.0;
  double lo = 0.0;   ///< 2.5% quantile
  double hi = 0.0;   ///< 97.5% quantile
  double delta = 0.0;  ///< relative change against the baseline, NaN when absent there
};

struct ExpectationOutcome {
  std::string description;
  double observed = 0.0;
  bool passed = false;
};

struct ScenarioResult {
  std::string name;
  Engine engine = Engine::wmm;
  std::uint64_t seed = 0;
  std::string baseline;
  std::string tree_digest;
  EvidenceTree tree;
  std::optional<BayesPriors> priors;
  std::vector<QuantityEstimate> estimates;
  /// Bayes only; NaN for WMM scenarios.
  double max_rhat = 0.0;
  double min_ess = 0.0;
  bool flagged = false;
  std::vector<ExpectationOutcome> expectations;
  std::shared_ptr<const WmmRun> wmm_run;
  std::shared_ptr<const PosteriorSummary> posterior;

  const QuantityEstimate* find(std::string_view quantity) const;
};

struct ScenarioReport {
  std::string baseline;
  std::vector<ScenarioResult> scenarios;

  const ScenarioResult& at(std::string_view name) const;
  bool expectations_passed() const;
  bool any_flagged() const;
};

/// Runs every scenario and compares each with its baseline. Errors from an
/// engine are rethrown with the scenario name prefixed.
ScenarioReport run_suite(const std::vector<Scenario>& scenarios, const std::string& baseline,
                         const SuiteOptions& options = {});

struct BranchAlternate {
  std::string name;
  BranchGroupSpec group;
  /// Expected movement of the root estimate, if any.
  std::optional<Expectation::Kind> direction;
};

/// Re-runs the WMM with each alternate distribution of the group holding
/// `branch`, all on the baseline's random numbers. The baseline is named
/// "baseline". Throws DataError for an unknown branch.
ScenarioReport wmm_branch_sensitivity(const EvidenceTree& tree, const Edge& branch,
                                      const std::vector<BranchAlternate>& alternates, const WmmConfig& config);

}  // namespace treepop
