#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "treepop/bayes_model.hpp"
#include "treepop/rng.hpp"

namespace treepop {

/// Target of the latent-count Metropolis step. `collapsed` integrates the
/// branch probabilities out of the acceptance ratio; `conditional` holds them
/// at their current Gibbs values.
enum class MhKernel { collapsed, conditional };

std::string_view to_string(MhKernel kernel);
std::optional<MhKernel> parse_mh_kernel(std::string_view text);

struct ChainConfig {
  int chains = 6;
  std::int64_t iterations = 200'000;
  std::int64_t burn_in = 100'000;
  std::int64_t thin = 10;
  std::uint64_t seed = 1;
  /// Random-walk half-widths per free latent; empty selects
  /// max(1, round(0.1 * initial count)).
  std::vector<std::int64_t> step_sizes;
  /// Adapt step sizes in batches during burn-in, then freeze them.
  bool tune = true;
  MhKernel kernel = MhKernel::collapsed;
  unsigned workers = 1;
  std::size_t acf_lag = 50;
  /// Stream id per chain; empty means chain c uses stream c.
  std::vector<std::uint64_t> chain_streams;

  /// Throws ModelError when the settings cannot produce a summary.
  void check() const;
  std::int64_t kept_per_chain() const;
};

/// One sweep over the free latents in model order. Each proposes
/// count + delta with delta uniform on {-h..-1, 1..h}; negative counts are
/// rejected outright. Returns the number of accepted moves per latent.
std::vector<std::int64_t> mh_update_latent_counts(const BayesModel& model, LatentState& state, RngStream& rng,
                                                  std::span<const std::int64_t> step_sizes,
                                                  MhKernel kernel = MhKernel::collapsed);

struct QuantitySummary {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  double q025 = 0.0;
  double median = 0.0;
  double q975 = 0.0;
  double ess = 0.0;
  double rhat = 0.0;
  std::vector<double> acf;
};

struct PosteriorSummary {
  std::vector<QuantitySummary> quantities;
  /// traces[q][c] holds the kept draws of quantity q in chain c.
  std::vector<std::vector<std::vector<double>>> traces;
  std::vector<NodeId> free_latents;
  std::vector<std::vector<double>> acceptance;       ///< [chain][latent], after burn-in
  std::vector<std::vector<std::int64_t>> step_sizes; ///< [chain][latent], frozen values

  const QuantitySummary* find(std::string_view name) const;
  /// Throws ModelError for unknown names.
  const QuantitySummary& at(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;
  double max_rhat() const;
  double min_ess() const;
};

/// Names reported for a model: the root, every node without data, then
/// "<prior name>_<child>" for every branch probability.
std::vector<std::string> reported_quantities(const BayesModel& model);

/// Runs the chains, alternating a latent-count sweep with a conjugate
/// branch-probability draw. Chain c draws its Metropolis moves from stream
/// 2s and its Dirichlet draws from stream 2s + 1 of the seed, s being its
/// stream id. Throws ModelError("invalid initialization") when the starting
/// state has zero posterior density.
PosteriorSummary run_chains(const BayesModel& model, const ChainConfig& config);

}  // namespace treepop
