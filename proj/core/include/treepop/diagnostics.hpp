#pragma once

#include <span>
#include <vector>

namespace treepop {

/// Minimum kept samples, pooled over chains, for any diagnostic.
inline constexpr std::size_t kMinDiagnosticSamples = 100;

using ChainSeries = std::vector<std::vector<double>>;

/// Effective sample size from Geyer's initial positive sequence. Chains are
/// demeaned separately and their autocovariances averaged; chains longer
/// than the shortest are truncated. A constant series has ESS equal to its
/// length.
double effective_sample_size(std::span<const std::vector<double>> chains);

/// Split R-hat: every chain is cut in half and the halves compared with the
/// usual between/within variance ratio. Needs at least two chains.
double split_rhat(std::span<const std::vector<double>> chains);

/// Autocorrelation at lags 0..max_lag from chain-averaged autocovariances.
std::vector<double> autocorrelation(std::span<const std::vector<double>> chains, std::size_t max_lag);

}  // namespace treepop
