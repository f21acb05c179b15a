#include "treepop/samplers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "treepop/error.hpp"

namespace treepop {

namespace {

// log of a Gamma(shape) variate; small shapes use the boost-by-one identity
// so the draw does not underflow to zero.
double log_gamma_variate(double shape, RngStream& rng) {
  if (shape >= 1.0) return std::log(rng.gamma(shape));
  double u = rng.uniform();
  while (u == 0.0) u = rng.uniform();
  return std::log(rng.gamma(shape + 1.0)) + std::log(u) / shape;
}

}  // namespace

double beta_log_density(double x, double a, double b) {
  if (x < 0.0 || x > 1.0) return -std::numeric_limits<double>::infinity();
  const double log_norm = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b);
  return log_norm + (a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x);
}

BranchSample sample_dirichlet(std::span<const double> concentration, RngStream& rng) {
  if (concentration.empty()) throw ModelError("empty concentration vector");
  for (double a : concentration) {
    if (!(a > 0.0) || !std::isfinite(a)) throw ModelError(fmt::format("nonpositive concentration {}", a));
  }
  BranchSample out;
  out.probabilities.resize(concentration.size());
  const bool small = std::any_of(concentration.begin(), concentration.end(), [](double a) { return a < 1.0; });
  if (!small) {
    double sum = 0.0;
    for (std::size_t i = 0; i < concentration.size(); ++i) {
      out.probabilities[i] = rng.gamma(concentration[i]);
      sum += out.probabilities[i];
    }
    for (double& p : out.probabilities) p /= sum;
    return out;
  }
  std::vector<double> logs(concentration.size());
  for (std::size_t i = 0; i < concentration.size(); ++i) logs[i] = log_gamma_variate(concentration[i], rng);
  const double top = *std::max_element(logs.begin(), logs.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logs.size(); ++i) {
    out.probabilities[i] = std::exp(logs[i] - top);
    sum += out.probabilities[i];
  }
  for (double& p : out.probabilities) p /= sum;
  return out;
}

BranchSample sample_beta_pair(std::int64_t x, std::int64_t n, RngStream& rng) {
  if (x < 0 || n < 0 || x > n) throw ModelError(fmt::format("survey count {} outside [0, {}]", x, n));
  const double p = rng.beta(static_cast<double>(x) + 1.0, static_cast<double>(n - x) + 1.0);
  return BranchSample{{p, 1.0 - p}, 1.0, 1};
}

std::vector<double> survey_concentration(const DirichletSurvey& survey) {
  std::vector<double> alpha;
  alpha.reserve(survey.counts.size());
  for (auto x : survey.counts) alpha.push_back(static_cast<double>(x) + 1.0);
  return alpha;
}

namespace {

BranchSample sample_beta_group(const BranchGroupSpec& group, const BetaSurveyPerChild& spec, RngStream& rng,
                               std::int64_t max_attempts) {
  const std::size_t k = spec.per_child.size();
  std::vector<std::size_t> informed;
  for (std::size_t i = 0; i < k; ++i) {
    if (spec.per_child[i]) informed.push_back(i);
  }
  if (informed.empty()) {
    throw ModelError(fmt::format("group '{}' has no informed child", group.parent.str()));
  }
  for (auto i : informed) {
    const auto& s = *spec.per_child[i];
    if (s.x < 0 || s.n < 0 || s.x > s.n) {
      throw ModelError(fmt::format("group '{}': survey count {} outside [0, {}]", group.parent.str(), s.x, s.n));
    }
  }
  auto shape = [&](std::size_t i) {
    const auto& s = *spec.per_child[i];
    return std::pair{static_cast<double>(s.x) + 1.0, static_cast<double>(s.n - s.x) + 1.0};
  };

  if (k == 2 && informed.size() == 1) {
    const auto& s = *spec.per_child[informed[0]];
    auto pair = sample_beta_pair(s.x, s.n, rng);
    if (informed[0] == 1) std::swap(pair.probabilities[0], pair.probabilities[1]);
    return pair;
  }

  BranchSample out;
  out.probabilities.assign(k, 0.0);

  if (informed.size() == k) {
    double sum = 0.0;
    double log_raw = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      auto [a, b] = shape(i);
      out.probabilities[i] = rng.beta(a, b);
      sum += out.probabilities[i];
      log_raw += beta_log_density(out.probabilities[i], a, b);
    }
    double log_projected = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      out.probabilities[i] /= sum;
      auto [a, b] = shape(i);
      log_projected += beta_log_density(out.probabilities[i], a, b);
    }
    out.importance_weight = std::exp(log_projected - log_raw);
    return out;
  }

  const std::size_t uninformed = k - informed.size();
  for (std::int64_t attempt = 1; attempt <= max_attempts; ++attempt) {
    double mass = 0.0;
    for (auto i : informed) {
      auto [a, b] = shape(i);
      out.probabilities[i] = rng.beta(a, b);
      mass += out.probabilities[i];
    }
    if (mass >= 1.0) continue;
    const double share = (1.0 - mass) / static_cast<double>(uninformed);
    for (std::size_t i = 0; i < k; ++i) {
      if (!spec.per_child[i]) out.probabilities[i] = share;
    }
    out.attempts = attempt;
    return out;
  }
  throw ModelError(fmt::format("incompatible sibling surveys in group '{}': acceptance rate 0/{}",
                               group.parent.str(), max_attempts));
}

}  // namespace

BranchSample sample_sibling_group(const BranchGroupSpec& group, RngStream& rng, std::int64_t max_attempts) {
  struct Visitor {
    const BranchGroupSpec& group;
    RngStream& rng;
    std::int64_t max_attempts;

    BranchSample operator()(const FixedProbabilities& s) const { return BranchSample{s.probabilities, 1.0, 1}; }
    BranchSample operator()(const DirichletPrior& s) const { return sample_dirichlet(s.concentration, rng); }
    BranchSample operator()(const DirichletSurvey& s) const {
      return sample_dirichlet(survey_concentration(s), rng);
    }
    BranchSample operator()(const BetaSurveyPerChild& s) const {
      return sample_beta_group(group, s, rng, max_attempts);
    }
  };
  return std::visit(Visitor{group, rng, max_attempts}, group.spec);
}

}  // namespace treepop
