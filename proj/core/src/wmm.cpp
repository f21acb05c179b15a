#include "treepop/wmm.hpp"

#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include <Eigen/Cholesky>
#include <boost/math/distributions/normal.hpp>
#include <fmt/format.h>

#include "treepop/error.hpp"
#include "treepop/weighted_stats.hpp"

namespace treepop {

std::string_view to_string(CombineScale scale) {
  return scale == CombineScale::log ? "log" : "linear";
}

std::optional<CombineScale> parse_combine_scale(std::string_view text) {
  if (text == "log") return CombineScale::log;
  if (text == "linear") return CombineScale::linear;
  return std::nullopt;
}

double backcalculate_path(const PathDescriptor& path, std::int64_t leaf_count,
                          std::span<const double> edge_probabilities) {
  if (edge_probabilities.size() != path.edges.size()) {
    throw ModelError(fmt::format("path to '{}' has {} edges but {} probabilities", path.leaf.str(),
                                 path.edges.size(), edge_probabilities.size()));
  }
  if (leaf_count < 0) throw ModelError(fmt::format("negative count at '{}'", path.leaf.str()));
  double product = 1.0;
  for (std::size_t i = 0; i < edge_probabilities.size(); ++i) {
    const double p = edge_probabilities[i];
    if (!(p > 0.0)) {
      throw ModelError(fmt::format("degenerate branch {} -> {} (p = {})", path.edges[i].parent.str(),
                                   path.edges[i].child.str(), p));
    }
    product *= p;
  }
  return static_cast<double>(leaf_count) / product;
}

std::vector<double> min_variance_weights(const Eigen::MatrixXd& covariance) {
  const auto k = covariance.rows();
  if (k == 0 || covariance.cols() != k) throw ModelError("covariance must be square and nonempty");
  if (k == 1) return {1.0};

  const double trace = covariance.trace();
  const double scale = trace > 0.0 ? trace / static_cast<double>(k) : 1.0;
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(k);

  double ridge = 0.0;
  for (int attempt = 0; attempt < 14; ++attempt) {
    Eigen::MatrixXd regularized = covariance;
    regularized.diagonal().array() += ridge * scale;
    Eigen::LLT<Eigen::MatrixXd> llt(regularized);
    if (llt.info() == Eigen::Success && llt.rcond() > 1e-14) {
      const Eigen::VectorXd solved = llt.solve(ones);
      const double denom = ones.dot(solved);
      if (std::isfinite(denom) && denom != 0.0) {
        std::vector<double> w(static_cast<std::size_t>(k));
        for (Eigen::Index i = 0; i < k; ++i) w[static_cast<std::size_t>(i)] = solved(i) / denom;
        return w;
      }
    }
    ridge = ridge == 0.0 ? 1e-10 : ridge * 10.0;
  }
  throw ModelError("path covariance is singular after regularization");
}

std::vector<double> compute_weights(const Eigen::MatrixXd& path_estimates, std::span<const double> importance) {
  if (path_estimates.cols() < 1) throw ModelError("no paths to weight");
  if (path_estimates.rows() < 2) throw ModelError("weights need at least two iterations");
  if (path_estimates.cols() == 1) return {1.0};
  return min_variance_weights(weighted_covariance(path_estimates, importance));
}

namespace {

struct PathPlan {
  std::int64_t count = 0;
  std::vector<std::pair<std::size_t, std::size_t>> steps;  // (group index, child position)
};

}  // namespace

WmmRun run_wmm(const EvidenceTree& tree, const WmmConfig& config) {
  if (config.iterations < 2) throw ModelError("WMM needs at least two iterations");
  if (!(config.interval_mass > 0.0 && config.interval_mass < 1.0)) {
    throw ModelError("interval mass must lie in (0, 1)");
  }

  WmmRun run;
  run.paths = informed_leaves(tree);
  if (run.paths.empty()) throw ModelError(fmt::format("tree '{}' has no informed leaves", tree.name()));
  run.scale = config.scale;
  run.interval_mass = config.interval_mass;

  std::vector<PathPlan> plans;
  for (const auto& path : run.paths) {
    PathPlan plan;
    plan.count = *tree.node(path.leaf).observed_count;
    if (config.scale == CombineScale::log && plan.count == 0) {
      throw ModelError(fmt::format("leaf '{}' has count 0, which has no log-scale estimate", path.leaf.str()));
    }
    for (const auto& e : path.edges) {
      const auto gi = *tree.group_index(e.parent);
      plan.steps.emplace_back(gi, *tree.branch_groups()[gi].position_of(e.child));
    }
    plans.push_back(std::move(plan));
  }

  const auto iterations = config.iterations;
  const auto n_paths = static_cast<Eigen::Index>(plans.size());
  const auto& groups = tree.branch_groups();
  run.path_estimates.resize(iterations, n_paths);
  run.importance_weights.assign(static_cast<std::size_t>(iterations), 1.0);

  // Each (group, iteration) pair owns a stream, so the draws do not depend on
  // how iterations are split across workers.
  std::vector<std::uint64_t> group_seeds;
  for (std::size_t g = 0; g < groups.size(); ++g) group_seeds.push_back(derive_seed(config.seed, g));

  auto work = [&](std::int64_t begin, std::int64_t end) {
    std::vector<BranchSample> draws(groups.size());
    std::vector<double> edge_p;
    for (std::int64_t m = begin; m < end; ++m) {
      double iw = 1.0;
      for (std::size_t g = 0; g < groups.size(); ++g) {
        RngStream rng(group_seeds[g], static_cast<std::uint64_t>(m));
        draws[g] = sample_sibling_group(groups[g], rng, config.max_attempts);
        iw *= draws[g].importance_weight;
      }
      run.importance_weights[static_cast<std::size_t>(m)] = iw;
      for (Eigen::Index i = 0; i < n_paths; ++i) {
        const auto& plan = plans[static_cast<std::size_t>(i)];
        edge_p.clear();
        for (auto [g, pos] : plan.steps) edge_p.push_back(draws[g].probabilities[pos]);
        run.path_estimates(m, i) = backcalculate_path(run.paths[static_cast<std::size_t>(i)], plan.count, edge_p);
      }
    }
  };

  const unsigned workers = std::max(1u, std::min<unsigned>(config.workers, static_cast<unsigned>(iterations)));
  if (workers == 1) {
    work(0, iterations);
  } else {
    std::vector<std::thread> threads;
    std::exception_ptr failure;
    std::mutex failure_mutex;
    for (unsigned t = 0; t < workers; ++t) {
      const auto begin = iterations * t / workers;
      const auto end = iterations * (t + 1) / workers;
      threads.emplace_back([&, begin, end] {
        try {
          work(begin, end);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      });
    }
    for (auto& t : threads) t.join();
    if (failure) std::rethrow_exception(failure);
  }

  const bool all_unit = std::all_of(run.importance_weights.begin(), run.importance_weights.end(),
                                    [](double w) { return w == 1.0; });
  const std::span<const double> iw = all_unit ? std::span<const double>{} : std::span<const double>{run.importance_weights};

  const bool log_scale = config.scale == CombineScale::log;
  const Eigen::MatrixXd fit_space = log_scale ? Eigen::MatrixXd(run.path_estimates.array().log()) : run.path_estimates;
  run.weights = compute_weights(fit_space, iw);

  const Eigen::Map<const Eigen::VectorXd> w(run.weights.data(), n_paths);
  const Eigen::VectorXd combined_fit = fit_space * w;
  std::vector<double> fit_samples(combined_fit.data(), combined_fit.data() + combined_fit.size());
  run.combined_samples.resize(fit_samples.size());
  for (std::size_t m = 0; m < fit_samples.size(); ++m) {
    run.combined_samples[m] = log_scale ? std::exp(fit_samples[m]) : fit_samples[m];
  }

  const double z = boost::math::quantile(boost::math::normal(), 0.5 * (1.0 + config.interval_mass));
  const double root_m = std::sqrt(static_cast<double>(iterations));
  run.arithmetic_mean = weighted_mean(run.combined_samples, iw);
  run.sd = std::sqrt(weighted_variance(run.combined_samples, iw));
  run.median = weighted_quantile(run.combined_samples, 0.5, iw);
  const double tail = 0.5 * (1.0 - config.interval_mass);
  run.quantile_interval = {weighted_quantile(run.combined_samples, tail, iw),
                           weighted_quantile(run.combined_samples, 1.0 - tail, iw)};
  if (log_scale) {
    const double mu = weighted_mean(fit_samples, iw);
    const double sd_log = std::sqrt(weighted_variance(fit_samples, iw));
    run.mean = std::exp(mu);
    run.normal_interval = {std::exp(mu - z * sd_log / root_m), std::exp(mu + z * sd_log / root_m)};
  } else {
    run.mean = run.arithmetic_mean;
    run.normal_interval = {run.mean - z * run.sd / root_m, run.mean + z * run.sd / root_m};
  }
  return run;
}

std::vector<PathWeight> path_weight_report(const WmmRun& run, const EvidenceTree& tree) {
  std::vector<PathWeight> out;
  for (const auto& n : tree.nodes()) {
    for (std::size_t i = 0; i < run.paths.size(); ++i) {
      if (run.paths[i].leaf == n.id) out.push_back({n.id, run.weights.at(i)});
    }
  }
  return out;
}

}  // namespace treepop
