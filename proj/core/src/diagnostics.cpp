#include "treepop/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "treepop/error.hpp"

namespace treepop {

namespace {

struct Centered {
  std::vector<std::vector<double>> chains;
  std::size_t n = 0;

  // Autocovariance at `lag`, 1/n normalization, averaged over chains.
  double acov(std::size_t lag) const {
    double total = 0.0;
    for (const auto& c : chains) {
      double s = 0.0;
      for (std::size_t i = 0; i + lag < n; ++i) s += c[i] * c[i + lag];
      total += s / static_cast<double>(n);
    }
    return total / static_cast<double>(chains.size());
  }
};

Centered center(std::span<const std::vector<double>> chains) {
  if (chains.empty()) throw ModelError("no chains to diagnose");
  std::size_t n = chains.front().size();
  std::size_t pooled = 0;
  for (const auto& c : chains) {
    n = std::min(n, c.size());
    pooled += c.size();
  }
  if (pooled < kMinDiagnosticSamples || n < 4) {
    throw ModelError(fmt::format("diagnostics need at least {} samples and 4 per chain (got {} over {} chains)",
                                 kMinDiagnosticSamples, pooled, chains.size()));
  }
  Centered out;
  out.n = n;
  for (const auto& c : chains) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += c[i];
    mean /= static_cast<double>(n);
    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = c[i] - mean;
    out.chains.push_back(std::move(d));
  }
  return out;
}

}  // namespace

double effective_sample_size(std::span<const std::vector<double>> chains) {
  const auto c = center(chains);
  const double total = static_cast<double>(c.n * c.chains.size());
  const double var0 = c.acov(0);
  if (!(var0 > 0.0)) return total;

  // tau = -1 + 2 * sum of positive, monotone pair sums rho(2k) + rho(2k+1).
  double tau = -1.0;
  double previous = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; 2 * k + 1 < c.n; ++k) {
    double pair = (c.acov(2 * k) + c.acov(2 * k + 1)) / var0;
    if (pair <= 0.0) break;
    pair = std::min(pair, previous);
    previous = pair;
    tau += 2.0 * pair;
  }
  return total / std::max(tau, 1.0 / std::log10(total));
}

double split_rhat(std::span<const std::vector<double>> chains) {
  if (chains.size() < 2) throw ModelError("split R-hat needs at least two chains");
  std::size_t n = chains.front().size();
  std::size_t pooled = 0;
  for (const auto& c : chains) {
    n = std::min(n, c.size());
    pooled += c.size();
  }
  if (pooled < kMinDiagnosticSamples || n < 4) {
    throw ModelError(fmt::format("split R-hat needs at least {} samples and 4 per chain", kMinDiagnosticSamples));
  }
  const std::size_t half = n / 2;
  std::vector<double> means;
  std::vector<double> vars;
  for (const auto& c : chains) {
    for (std::size_t start : {std::size_t{0}, n - half}) {
      double m = 0.0;
      for (std::size_t i = 0; i < half; ++i) m += c[start + i];
      m /= static_cast<double>(half);
      double v = 0.0;
      for (std::size_t i = 0; i < half; ++i) v += (c[start + i] - m) * (c[start + i] - m);
      means.push_back(m);
      vars.push_back(v / static_cast<double>(half - 1));
    }
  }
  const double k = static_cast<double>(means.size());
  const double h = static_cast<double>(half);
  double grand = 0.0;
  for (double m : means) grand += m;
  grand /= k;
  double between = 0.0;
  for (double m : means) between += (m - grand) * (m - grand);
  between *= h / (k - 1.0);
  double within = 0.0;
  for (double v : vars) within += v;
  within /= k;
  if (!(within > 0.0)) return between > 0.0 ? std::numeric_limits<double>::infinity() : 1.0;
  const double var_plus = (h - 1.0) / h * within + between / h;
  return std::sqrt(var_plus / within);
}

std::vector<double> autocorrelation(std::span<const std::vector<double>> chains, std::size_t max_lag) {
  const auto c = center(chains);
  std::vector<double> out(max_lag + 1, 0.0);
  const double var0 = c.acov(0);
  out[0] = 1.0;
  if (!(var0 > 0.0)) return out;
  for (std::size_t t = 1; t <= max_lag && t < c.n; ++t) out[t] = c.acov(t) / var0;
  return out;
}

}  // namespace treepop
