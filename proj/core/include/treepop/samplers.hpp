#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "treepop/rng.hpp"
#include "treepop/tree.hpp"

namespace treepop {

/// One draw of a sibling group's branch probabilities.
struct BranchSample {
  std::vector<double> probabilities;
  double importance_weight = 1.0;
  /// Proposals consumed by rejection (1 for exact schemes).
  std::int64_t attempts = 1;
};

/// Redraw limit per requested sample for the Beta rejection scheme.
inline constexpr std::int64_t kDefaultMaxAttempts = 1'000'000;

/// Exact Dirichlet draw. Throws ModelError on a nonpositive concentration.
BranchSample sample_dirichlet(std::span<const double> concentration, RngStream& rng);

/// p ~ Beta(x + 1, n - x + 1); returns (p, 1 - p).
BranchSample sample_beta_pair(std::int64_t x, std::int64_t n, RngStream& rng);

/// x_i + 1 per child.
std::vector<double> survey_concentration(const DirichletSurvey& survey);

/// Dispatches on the group's spec kind.
///
/// Fixed groups pass through, Dirichlet kinds draw exactly. A two-child
/// BetaSurveyPerChild group with one informed child is a Beta pair. Larger
/// per-child Beta groups draw each informed child independently; with
/// uninformed children present the residual mass is split evenly among them
/// and draws whose informed mass reaches 1 are rejected. When every child is
/// informed the draw is projected onto the simplex and carries the importance
/// weight prod f_i(normalized_i) / prod f_i(raw_i) of the marginal Beta
/// densities f_i.
BranchSample sample_sibling_group(const BranchGroupSpec& group, RngStream& rng,
                                  std::int64_t max_attempts = kDefaultMaxAttempts);

/// Log density of Beta(a, b) at x.
double beta_log_density(double x, double a, double b);

}  // namespace treepop
