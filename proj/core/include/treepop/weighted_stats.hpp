#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

namespace treepop {

// Sample statistics with optional per-sample importance weights. An empty
// weight span means equal weights; with equal weights every function reduces
// to its textbook unweighted form (n - 1 denominators, R type-7 quantiles).

double weighted_mean(std::span<const double> x, std::span<const double> w = {});

/// Reliability-weighted variance, sum w (x - m)^2 / (W - sum w^2 / W).
double weighted_variance(std::span<const double> x, std::span<const double> w = {});

/// Covariance of the columns of `samples` (rows are draws).
Eigen::MatrixXd weighted_covariance(const Eigen::MatrixXd& samples, std::span<const double> w = {});

/// Type-7 quantile for equal weights; for unequal weights, linear
/// interpolation of the weighted CDF at cumulative-weight midpoints.
double weighted_quantile(std::span<const double> x, double prob, std::span<const double> w = {});

struct Histogram {
  std::vector<double> edges;   ///< bins + 1 ascending edges
  std::vector<double> counts;  ///< summed weights per bin
};

Histogram histogram(std::span<const double> x, int bins, std::span<const double> w = {});

}  // namespace treepop
