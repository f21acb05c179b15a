#include "treepop/bayes_sampler.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include <fmt/format.h>

#include "treepop/diagnostics.hpp"
#include "treepop/error.hpp"
#include "treepop/weighted_stats.hpp"

namespace treepop {

std::string_view to_string(MhKernel kernel) {
  return kernel == MhKernel::collapsed ? "collapsed" : "conditional";
}

std::optional<MhKernel> parse_mh_kernel(std::string_view text) {
  if (text == "collapsed") return MhKernel::collapsed;
  if (text == "conditional") return MhKernel::conditional;
  return std::nullopt;
}

void ChainConfig::check() const {
  if (chains < 2) throw ModelError("at least two chains are needed for split R-hat");
  if (iterations < 1) throw ModelError("iterations must be positive");
  if (burn_in < 0 || burn_in >= iterations) throw ModelError("burn-in must lie in [0, iterations)");
  if (thin < 1) throw ModelError("thin must be positive");
  for (auto h : step_sizes) {
    if (h < 1) throw ModelError("step sizes must be positive");
  }
  if (!chain_streams.empty() && chain_streams.size() != static_cast<std::size_t>(chains)) {
    throw ModelError("chain_streams needs one entry per chain");
  }
  if (static_cast<std::size_t>(kept_per_chain() * chains) < kMinDiagnosticSamples) {
    throw ModelError(fmt::format("only {} draws would be kept; diagnostics need {}", kept_per_chain() * chains,
                                 kMinDiagnosticSamples));
  }
}

std::int64_t ChainConfig::kept_per_chain() const {
  return (iterations - burn_in + thin - 1) / thin;
}

namespace {

// Latent-count Metropolis with per-group log terms cached, so a move only
// recomputes the groups above the moved leaf.
class LatentSampler {
 public:
  LatentSampler(const BayesModel& model, LatentState& state, MhKernel kernel)
      : model_(model), state_(state), kernel_(kernel), terms_(model.groups.size()) {
    refresh();
  }

  void refresh() {
    for (std::size_t g = 0; g < terms_.size(); ++g) terms_[g] = term(g);
    root_term_ = model_.root_prior.log_density(state_.counts[model_.root]);
  }

  double log_target() const {
    double out = root_term_;
    for (double t : terms_) out += t;
    return out;
  }

  bool step(std::size_t j, std::int64_t half_width, RngStream& rng) {
    const auto leaf = model_.free_latents[j];
    auto delta = rng.uniform_int(1, half_width);
    if (rng.uniform() < 0.5) delta = -delta;
    if (state_.counts[leaf] + delta < 0) return false;

    shift(leaf, delta);
    const auto& groups = model_.affected_groups[j];
    scratch_.resize(groups.size());
    double diff = 0.0;
    for (std::size_t i = 0; i < groups.size(); ++i) {
      scratch_[i] = term(groups[i]);
      diff += scratch_[i] - terms_[groups[i]];
    }
    const double root_new = model_.root_prior.log_density(state_.counts[model_.root]);
    diff += root_new - root_term_;

    if (std::isfinite(diff) && (diff >= 0.0 || std::log(rng.uniform()) < diff)) {
      for (std::size_t i = 0; i < groups.size(); ++i) terms_[groups[i]] = scratch_[i];
      root_term_ = root_new;
      return true;
    }
    shift(leaf, -delta);
    return false;
  }

 private:
  double term(std::size_t g) const {
    return kernel_ == MhKernel::collapsed ? group_log_marginal(model_, g, state_.counts)
                                          : group_log_likelihood(model_, g, state_);
  }

  void shift(std::size_t leaf, std::int64_t delta) {
    for (auto v = static_cast<std::ptrdiff_t>(leaf); v >= 0; v = model_.parent[static_cast<std::size_t>(v)]) {
      state_.counts[static_cast<std::size_t>(v)] += delta;
    }
  }

  const BayesModel& model_;
  LatentState& state_;
  MhKernel kernel_;
  std::vector<double> terms_;
  double root_term_ = 0.0;
  std::vector<double> scratch_;
};

std::vector<std::int64_t> default_step_sizes(const BayesModel& model, const LatentState& state) {
  std::vector<std::int64_t> out;
  for (auto leaf : model.free_latents) {
    out.push_back(std::max<std::int64_t>(1, std::llround(0.1 * static_cast<double>(state.counts[leaf]))));
  }
  return out;
}

struct ChainResult {
  std::vector<std::vector<double>> draws;  // [quantity][kept]
  std::vector<double> acceptance;
  std::vector<std::int64_t> step_sizes;
};

constexpr std::int64_t kTuneBatch = 100;

ChainResult run_one_chain(const BayesModel& model, const ChainConfig& config, std::uint64_t stream,
                          const std::vector<std::size_t>& node_quantities) {
  RngStream mh_rng(config.seed, 2 * stream);
  RngStream gibbs_rng(config.seed, 2 * stream + 1);
  LatentState state = initial_state(model);
  if (!std::isfinite(log_posterior(model, state)) || !std::isfinite(collapsed_log_posterior(model, state))) {
    throw ModelError("invalid initialization: the starting state has zero posterior density");
  }

  auto steps = config.step_sizes.empty() ? default_step_sizes(model, state) : config.step_sizes;
  if (steps.size() != model.free_latents.size()) {
    throw ModelError(fmt::format("{} step sizes given for {} free latents", steps.size(), model.free_latents.size()));
  }

  const auto n_latent = model.free_latents.size();
  std::size_t n_prob = 0;
  for (const auto& g : model.groups) n_prob += g.children.size();

  ChainResult result;
  result.draws.assign(node_quantities.size() + n_prob, {});
  for (auto& d : result.draws) d.reserve(static_cast<std::size_t>(config.kept_per_chain()));
  std::vector<std::int64_t> batch_accepts(n_latent, 0);
  std::vector<std::int64_t> kept_accepts(n_latent, 0);

  LatentSampler sampler(model, state, config.kernel);
  for (std::int64_t it = 0; it < config.iterations; ++it) {
    for (std::size_t j = 0; j < n_latent; ++j) {
      if (sampler.step(j, steps[j], mh_rng)) {
        ++batch_accepts[j];
        if (it >= config.burn_in) ++kept_accepts[j];
      }
    }
    gibbs_update_branch_probs(model, state, gibbs_rng);
    if (config.kernel == MhKernel::conditional) sampler.refresh();

    if (config.tune && it < config.burn_in && (it + 1) % kTuneBatch == 0) {
      for (std::size_t j = 0; j < n_latent; ++j) {
        const double rate = static_cast<double>(batch_accepts[j]) / kTuneBatch;
        if (rate > 0.5) {
          steps[j] = std::max<std::int64_t>(steps[j] + 1, std::llround(static_cast<double>(steps[j]) * 1.5));
        } else if (rate < 0.2) {
          steps[j] = std::max<std::int64_t>(1, std::llround(static_cast<double>(steps[j]) * 0.6));
        }
        batch_accepts[j] = 0;
      }
    }

    if (it >= config.burn_in && (it - config.burn_in) % config.thin == 0) {
      std::size_t q = 0;
      for (auto v : node_quantities) result.draws[q++].push_back(static_cast<double>(state.counts[v]));
      for (const auto& probs : state.branch_probs) {
        for (double p : probs) result.draws[q++].push_back(p);
      }
    }
  }

  const double post = static_cast<double>(config.iterations - config.burn_in);
  for (auto a : kept_accepts) result.acceptance.push_back(static_cast<double>(a) / post);
  result.step_sizes = std::move(steps);
  return result;
}

std::vector<std::size_t> node_quantity_indices(const BayesModel& model) {
  std::vector<std::size_t> out{model.root};
  for (std::size_t i = 0; i < model.ids.size(); ++i) {
    if (i != model.root && !model.observed[i]) out.push_back(i);
  }
  return out;
}

}  // namespace

std::vector<std::int64_t> mh_update_latent_counts(const BayesModel& model, LatentState& state, RngStream& rng,
                                                  std::span<const std::int64_t> step_sizes, MhKernel kernel) {
  if (step_sizes.size() != model.free_latents.size()) {
    throw ModelError(fmt::format("{} step sizes given for {} free latents", step_sizes.size(),
                                 model.free_latents.size()));
  }
  LatentSampler sampler(model, state, kernel);
  std::vector<std::int64_t> accepted(model.free_latents.size(), 0);
  for (std::size_t j = 0; j < model.free_latents.size(); ++j) {
    if (sampler.step(j, step_sizes[j], rng)) ++accepted[j];
  }
  return accepted;
}

const QuantitySummary* PosteriorSummary::find(std::string_view name) const {
  auto it = std::find_if(quantities.begin(), quantities.end(), [&](const QuantitySummary& q) { return q.name == name; });
  return it == quantities.end() ? nullptr : &*it;
}

const QuantitySummary& PosteriorSummary::at(std::string_view name) const {
  if (const auto* q = find(name)) return *q;
  throw ModelError(fmt::format("no reported quantity '{}'", name));
}

std::size_t PosteriorSummary::index_of(std::string_view name) const {
  return static_cast<std::size_t>(&at(name) - quantities.data());
}

double PosteriorSummary::max_rhat() const {
  double out = 0.0;
  for (const auto& q : quantities) out = std::max(out, q.rhat);
  return out;
}

double PosteriorSummary::min_ess() const {
  double out = std::numeric_limits<double>::infinity();
  for (const auto& q : quantities) out = std::min(out, q.ess);
  return out;
}

std::vector<std::string> reported_quantities(const BayesModel& model) {
  std::vector<std::string> out;
  for (auto v : node_quantity_indices(model)) out.push_back(model.ids[v].str());
  for (const auto& g : model.groups) {
    for (auto c : g.children) out.push_back(g.name + "_" + model.ids[c].str());
  }
  return out;
}

PosteriorSummary run_chains(const BayesModel& model, const ChainConfig& config) {
  config.check();
  const auto node_quantities = node_quantity_indices(model);
  const auto names = reported_quantities(model);
  const auto n_chains = static_cast<std::size_t>(config.chains);

  std::vector<ChainResult> results(n_chains);
  auto stream_of = [&](std::size_t c) {
    return config.chain_streams.empty() ? static_cast<std::uint64_t>(c) : config.chain_streams[c];
  };
  const unsigned workers = std::max(1u, std::min<unsigned>(config.workers, static_cast<unsigned>(n_chains)));
  if (workers == 1) {
    for (std::size_t c = 0; c < n_chains; ++c) results[c] = run_one_chain(model, config, stream_of(c), node_quantities);
  } else {
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> threads;
    for (unsigned t = 0; t < workers; ++t) {
      threads.emplace_back([&, t] {
        for (std::size_t c = t; c < n_chains; c += workers) {
          try {
            results[c] = run_one_chain(model, config, stream_of(c), node_quantities);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
            return;
          }
        }
      });
    }
    for (auto& th : threads) th.join();
    if (failure) std::rethrow_exception(failure);
  }

  PosteriorSummary summary;
  summary.free_latents = model.free_latent_ids();
  for (auto& r : results) {
    summary.acceptance.push_back(r.acceptance);
    summary.step_sizes.push_back(r.step_sizes);
  }
  summary.traces.resize(names.size());
  for (std::size_t q = 0; q < names.size(); ++q) {
    for (auto& r : results) summary.traces[q].push_back(std::move(r.draws[q]));

    std::vector<double> pooled;
    for (const auto& chain : summary.traces[q]) pooled.insert(pooled.end(), chain.begin(), chain.end());
    QuantitySummary s;
    s.name = names[q];
    s.mean = weighted_mean(pooled);
    s.sd = std::sqrt(weighted_variance(pooled));
    s.q025 = weighted_quantile(pooled, 0.025);
    s.median = weighted_quantile(pooled, 0.5);
    s.q975 = weighted_quantile(pooled, 0.975);
    s.ess = effective_sample_size(summary.traces[q]);
    s.rhat = split_rhat(summary.traces[q]);
    s.acf = autocorrelation(summary.traces[q], config.acf_lag);
    summary.quantities.push_back(std::move(s));
  }
  return summary;
}

}  // namespace treepop
