#include "treepop/weighted_stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "treepop/error.hpp"

namespace treepop {

namespace {

bool equal_weights(std::span<const double> w) {
  return w.empty() || std::all_of(w.begin(), w.end(), [&](double v) { return v == w.front(); });
}

void check_sizes(std::size_t n, std::span<const double> w) {
  if (!w.empty() && w.size() != n) throw ModelError("weight vector length differs from sample length");
}

}  // namespace

double weighted_mean(std::span<const double> x, std::span<const double> w) {
  check_sizes(x.size(), w);
  if (x.empty()) throw ModelError("mean of empty sample");
  if (equal_weights(w)) return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  double sw = 0.0;
  double swx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sw += w[i];
    swx += w[i] * x[i];
  }
  return swx / sw;
}

double weighted_variance(std::span<const double> x, std::span<const double> w) {
  check_sizes(x.size(), w);
  if (x.size() < 2) throw ModelError("variance needs at least two samples");
  const double m = weighted_mean(x, w);
  if (equal_weights(w)) {
    double ss = 0.0;
    for (double v : x) ss += (v - m) * (v - m);
    return ss / static_cast<double>(x.size() - 1);
  }
  double sw = 0.0;
  double sw2 = 0.0;
  double ss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sw += w[i];
    sw2 += w[i] * w[i];
    ss += w[i] * (x[i] - m) * (x[i] - m);
  }
  return ss / (sw - sw2 / sw);
}

Eigen::MatrixXd weighted_covariance(const Eigen::MatrixXd& samples, std::span<const double> w) {
  const auto n = samples.rows();
  check_sizes(static_cast<std::size_t>(n), w);
  if (n < 2) throw ModelError("covariance needs at least two samples");
  if (equal_weights(w)) {
    const Eigen::RowVectorXd mean = samples.colwise().mean();
    const Eigen::MatrixXd centered = samples.rowwise() - mean;
    return (centered.transpose() * centered) / static_cast<double>(n - 1);
  }
  const Eigen::Map<const Eigen::VectorXd> wv(w.data(), n);
  const double sw = wv.sum();
  const double sw2 = wv.squaredNorm();
  const Eigen::RowVectorXd mean = (wv.transpose() * samples) / sw;
  const Eigen::MatrixXd centered = samples.rowwise() - mean;
  return (centered.transpose() * wv.asDiagonal() * centered) / (sw - sw2 / sw);
}

double weighted_quantile(std::span<const double> x, double prob, std::span<const double> w) {
  check_sizes(x.size(), w);
  if (x.empty()) throw ModelError("quantile of empty sample");
  if (prob < 0.0 || prob > 1.0) throw ModelError("quantile probability outside [0, 1]");
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });

  if (equal_weights(w)) {
    const double h = prob * static_cast<double>(x.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, x.size() - 1);
    const double frac = h - static_cast<double>(lo);
    return x[order[lo]] + frac * (x[order[hi]] - x[order[lo]]);
  }

  double total = 0.0;
  for (double v : w) total += v;
  double cum = 0.0;
  double prev_pos = 0.0;
  double prev_x = x[order.front()];
  for (std::size_t k = 0; k < order.size(); ++k) {
    const double wk = w[order[k]];
    const double pos = (cum + 0.5 * wk) / total;
    cum += wk;
    const double xk = x[order[k]];
    if (prob <= pos) {
      if (k == 0 || pos == prev_pos) return xk;
      return prev_x + (prob - prev_pos) / (pos - prev_pos) * (xk - prev_x);
    }
    prev_pos = pos;
    prev_x = xk;
  }
  return x[order.back()];
}

Histogram histogram(std::span<const double> x, int bins, std::span<const double> w) {
  check_sizes(x.size(), w);
  if (bins < 1) throw ModelError("histogram needs at least one bin");
  if (x.empty()) throw ModelError("histogram of empty sample");
  const auto [lo_it, hi_it] = std::minmax_element(x.begin(), x.end());
  double lo = *lo_it;
  double hi = *hi_it;
  if (hi == lo) {
    lo -= 0.5;
    hi += 0.5;
  }
  Histogram h;
  h.edges.resize(static_cast<std::size_t>(bins) + 1);
  for (int i = 0; i <= bins; ++i) h.edges[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / bins;
  h.counts.assign(static_cast<std::size_t>(bins), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    auto b = static_cast<int>((x[i] - lo) / (hi - lo) * bins);
    b = std::clamp(b, 0, bins - 1);
    h.counts[static_cast<std::size_t>(b)] += w.empty() ? 1.0 : w[i];
  }
  return h;
}

}  // namespace treepop
