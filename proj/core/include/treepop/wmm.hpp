#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "treepop/samplers.hpp"
#include "treepop/tree.hpp"

namespace treepop {

/// Space in which path estimates are covariance-weighted and combined.
/// `log` fits weights to log estimates and combines geometrically;
/// `linear` fits and combines the raw estimates.
enum class CombineScale { log, linear };

std::string_view to_string(CombineScale scale);
std::optional<CombineScale> parse_combine_scale(std::string_view text);

struct WmmConfig {
  std::int64_t iterations = 10000;
  std::uint64_t seed = 1;
  double interval_mass = 0.95;
  CombineScale scale = CombineScale::log;
  unsigned workers = 1;
  std::int64_t max_attempts = kDefaultMaxAttempts;
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

struct WmmRun {
  std::vector<PathDescriptor> paths;
  Eigen::MatrixXd path_estimates;           ///< iterations x paths, implied root sizes
  std::vector<double> importance_weights;   ///< per iteration
  std::vector<double> weights;              ///< per path, sum to one
  std::vector<double> combined_samples;     ///< per iteration
  CombineScale scale = CombineScale::log;
  double interval_mass = 0.95;

  /// Point estimate: exp(weighted mean of log combined) in log scale, the
  /// weighted mean of combined samples in linear scale.
  double mean = 0.0;
  double arithmetic_mean = 0.0;
  double median = 0.0;
  double sd = 0.0;
  Interval quantile_interval;
  Interval normal_interval;
};

/// leaf_count / prod(edge probabilities). Throws ModelError("degenerate
/// branch") when a probability is not positive.
double backcalculate_path(const PathDescriptor& path, std::int64_t leaf_count,
                          std::span<const double> edge_probabilities);

/// w = S^-1 1 / (1' S^-1 1). Ridge eps * trace(S) / k * I is added, starting
/// at eps = 1e-10 and growing tenfold, whenever S is not safely invertible.
std::vector<double> min_variance_weights(const Eigen::MatrixXd& covariance);

/// Minimum-variance sum-to-one weights from the (importance-weighted)
/// empirical covariance of the columns of `path_estimates`.
std::vector<double> compute_weights(const Eigen::MatrixXd& path_estimates,
                                    std::span<const double> importance = {});

WmmRun run_wmm(const EvidenceTree& tree, const WmmConfig& config);

struct PathWeight {
  NodeId leaf;
  double weight = 0.0;
};

std::vector<PathWeight> path_weight_report(const WmmRun& run, const EvidenceTree& tree);

}  // namespace treepop
