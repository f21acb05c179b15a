#include "treepop/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <thread>

#include <fmt/format.h>

#include "treepop/error.hpp"
#include "treepop/tree_spec.hpp"

namespace treepop {

std::string_view to_string(Engine engine) { return engine == Engine::wmm ? "wmm" : "bayes"; }

std::optional<Engine> parse_engine(std::string_view text) {
  if (text == "wmm") return Engine::wmm;
  if (text == "bayes") return Engine::bayes;
  return std::nullopt;
}

std::string Expectation::describe() const {
  switch (kind) {
    case Kind::increase: return fmt::format("{} increases by more than {:g}", quantity, threshold);
    case Kind::decrease: return fmt::format("{} decreases by more than {:g}", quantity, threshold);
    case Kind::within: return fmt::format("{} changes by less than {:g}", quantity, threshold);
    case Kind::exceeds_shift_of: return fmt::format("{} shifts more than in {}", quantity, other);
  }
  return {};
}

PreparedScenario prepare_scenario(const Scenario& s) {
  PreparedScenario out{s.tree, s.priors};
  if (!s.aggregate.empty()) {
    out.tree = aggregate_siblings(s.tree, s.aggregate);
    if (out.priors) out.priors = aggregate_priors(*out.priors, s.tree, s.aggregate);
  }
  if (!s.delete_nodes.empty()) out.tree = delete_node_data(out.tree, s.delete_nodes);

  for (const auto& [key, o] : s.overrides) {
    const int set = int(o.root.has_value()) + int(o.group.has_value()) + int(o.prior.has_value());
    if (set != 1) throw DataError(fmt::format("override '{}' must set exactly one replacement", key));
    if (o.group) {
      if (s.engine != Engine::wmm) throw DataError(fmt::format("override '{}' is a WMM branch group", key));
      out.tree = replace_branch_group(out.tree, *o.group);
      continue;
    }
    if (s.engine != Engine::bayes) throw DataError(fmt::format("override '{}' is a Bayesian prior", key));
    if (!out.priors) throw DataError(fmt::format("override '{}' needs a tree with priors", key));
    if (o.root) {
      out.priors->root = *o.root;
      continue;
    }
    const auto& repl = *o.prior;
    auto it = std::find_if(out.priors->groups.begin(), out.priors->groups.end(),
                           [&](const GroupPrior& g) { return g.parent == repl.parent; });
    if (it == out.priors->groups.end()) {
      out.priors->groups.push_back(repl);
      continue;
    }
    it->concentration = repl.concentration;
    if (!repl.order.empty()) it->order = repl.order;
    if (repl.uncertainty) it->uncertainty = repl.uncertainty;
  }
  if (s.engine == Engine::bayes && !out.priors) {
    throw DataError(fmt::format("Bayesian scenario '{}' needs a tree with priors", s.name));
  }
  return out;
}

namespace {

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

ScenarioResult execute(const Scenario& s, std::uint64_t seed, const SuiteOptions& options) {
  auto prepared = prepare_scenario(s);
  ScenarioResult r;
  r.name = s.name;
  r.engine = s.engine;
  r.seed = seed;
  r.tree_digest = tree_digest(prepared.tree, s.engine == Engine::bayes ? prepared.priors : std::nullopt);

  const auto root = prepared.tree.root().str();
  std::vector<std::string> wanted = s.quantities.empty() ? std::vector<std::string>{root} : s.quantities;
  if (s.engine == Engine::wmm) {
    auto config = s.wmm;
    config.seed = seed;
    auto run = std::make_shared<WmmRun>(run_wmm(prepared.tree, config));
    if (std::find(wanted.begin(), wanted.end(), root) != wanted.end()) {
      r.estimates.push_back({root, run->mean, run->quantile_interval.lo, run->quantile_interval.hi, 0.0});
    }
    r.max_rhat = std::numeric_limits<double>::quiet_NaN();
    r.min_ess = std::numeric_limits<double>::quiet_NaN();
    r.wmm_run = std::move(run);
  } else {
    auto config = s.bayes;
    config.seed = seed;
    auto model = build_model(prepared.tree, *prepared.priors);
    auto post = std::make_shared<PosteriorSummary>(run_chains(model, config));
    for (const auto& q : wanted) {
      if (const auto* qs = post->find(q)) r.estimates.push_back({q, qs->mean, qs->q025, qs->q975, 0.0});
    }
    r.max_rhat = post->max_rhat();
    r.min_ess = post->min_ess();
    r.flagged = r.max_rhat > options.max_rhat || r.min_ess < options.min_ess;
    r.posterior = std::move(post);
  }
  r.tree = std::move(prepared.tree);
  r.priors = std::move(prepared.priors);
  return r;
}

template <class E>
[[noreturn]] void rethrow_named(const std::string& name, const E& e) {
  throw E(fmt::format("scenario '{}': {}", name, e.what()));
}

double delta_of(const ScenarioResult& r, const std::string& quantity) {
  const auto* q = r.find(quantity);
  return q ? q->delta : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

std::uint64_t scenario_seed(const Scenario& scenario, const SuiteOptions& options) {
  if (scenario.seed) return *scenario.seed;
  if (options.common_random_numbers) return options.seed;
  return derive_seed(options.seed, fnv1a(scenario.name));
}

const QuantityEstimate* ScenarioResult::find(std::string_view quantity) const {
  auto it = std::find_if(estimates.begin(), estimates.end(), [&](const QuantityEstimate& q) { return q.name == quantity; });
  return it == estimates.end() ? nullptr : &*it;
}

const ScenarioResult& ScenarioReport::at(std::string_view name) const {
  auto it = std::find_if(scenarios.begin(), scenarios.end(), [&](const ScenarioResult& r) { return r.name == name; });
  if (it == scenarios.end()) throw DataError(fmt::format("no scenario '{}'", name));
  return *it;
}

bool ScenarioReport::expectations_passed() const {
  return std::all_of(scenarios.begin(), scenarios.end(), [](const ScenarioResult& r) {
    return std::all_of(r.expectations.begin(), r.expectations.end(), [](const auto& e) { return e.passed; });
  });
}

bool ScenarioReport::any_flagged() const {
  return std::any_of(scenarios.begin(), scenarios.end(), [](const ScenarioResult& r) { return r.flagged; });
}

ScenarioReport run_suite(const std::vector<Scenario>& scenarios, const std::string& baseline,
                         const SuiteOptions& options) {
  if (scenarios.empty()) throw DataError("scenario suite is empty");
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < scenarios.size(); ++i) {
    if (!index.emplace(scenarios[i].name, i).second) {
      throw DataError(fmt::format("duplicate scenario name '{}'", scenarios[i].name));
    }
  }
  if (!index.count(baseline)) throw DataError(fmt::format("baseline scenario '{}' is not in the suite", baseline));
  for (const auto& s : scenarios) {
    const auto& ref = s.compare_with.value_or(baseline);
    auto it = index.find(ref);
    if (it == index.end()) throw DataError(fmt::format("scenario '{}' compares with unknown '{}'", s.name, ref));
    if (scenarios[it->second].engine != s.engine) {
      throw DataError(fmt::format("scenario '{}' compares with '{}', which uses another engine", s.name, ref));
    }
    for (const auto& e : s.expectations) {
      if (e.kind == Expectation::Kind::exceeds_shift_of && !index.count(e.other)) {
        throw DataError(fmt::format("scenario '{}' refers to unknown scenario '{}'", s.name, e.other));
      }
    }
  }

  std::vector<ScenarioResult> results(scenarios.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < scenarios.size(); i = next++) {
      const auto& s = scenarios[i];
      try {
        try {
          results[i] = execute(s, scenario_seed(s, options), options);
        } catch (const ParseError& e) {
          rethrow_named(s.name, DataError(e.what()));
        } catch (const DataError& e) {
          rethrow_named(s.name, e);
        } catch (const ModelError& e) {
          rethrow_named(s.name, e);
        }
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };
  const unsigned workers = std::max(1u, std::min<unsigned>(options.workers, static_cast<unsigned>(scenarios.size())));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (unsigned t = 0; t < workers; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  for (std::size_t i = 0; i < scenarios.size(); ++i) {
    auto& r = results[i];
    r.baseline = scenarios[i].compare_with.value_or(baseline);
    const auto& base = results[index.at(r.baseline)];
    for (auto& q : r.estimates) {
      const auto* b = base.find(q.name);
      q.delta = b && b->mean != 0.0 ? (q.mean - b->mean) / b->mean : std::numeric_limits<double>::quiet_NaN();
    }
  }
  for (std::size_t i = 0; i < scenarios.size(); ++i) {
    auto& r = results[i];
    for (const auto& e : scenarios[i].expectations) {
      const double d = delta_of(r, e.quantity);
      ExpectationOutcome out{e.describe(), d, false};
      switch (e.kind) {
        case Expectation::Kind::increase: out.passed = d > e.threshold; break;
        case Expectation::Kind::decrease: out.passed = d < -e.threshold; break;
        case Expectation::Kind::within: out.passed = std::abs(d) < e.threshold; break;
        case Expectation::Kind::exceeds_shift_of:
          out.passed = std::abs(d) > std::abs(delta_of(results[index.at(e.other)], e.quantity));
          break;
      }
      r.expectations.push_back(std::move(out));
    }
  }
  return ScenarioReport{baseline, std::move(results)};
}

ScenarioReport wmm_branch_sensitivity(const EvidenceTree& tree, const Edge& branch,
                                      const std::vector<BranchAlternate>& alternates, const WmmConfig& config) {
  if (tree.parent_of(branch.child) != branch.parent || !tree.group_for(branch.parent)) {
    throw DataError(fmt::format("unknown branch {} -> {}", branch.parent.str(), branch.child.str()));
  }
  std::vector<Scenario> scenarios;
  Scenario base;
  base.name = "baseline";
  base.engine = Engine::wmm;
  base.tree = tree;
  base.wmm = config;
  scenarios.push_back(base);
  for (const auto& alt : alternates) {
    if (alt.group.parent != branch.parent) {
      throw DataError(fmt::format("alternate '{}' is not a group of '{}'", alt.name, branch.parent.str()));
    }
    Scenario s = base;
    s.name = alt.name;
    s.overrides[fmt::format("p_{}{}", branch.parent.str(), branch.child.str())] = PriorOverride{{}, alt.group, {}};
    if (alt.direction) s.expectations.push_back(Expectation{tree.root().str(), *alt.direction, 0.0, {}});
    scenarios.push_back(std::move(s));
  }
  SuiteOptions options;
  options.seed = config.seed;
  options.common_random_numbers = true;
  options.workers = config.workers;
  return run_suite(scenarios, "baseline", options);
}

}  // namespace treepop
