#include <map>
#include <string>

#include <benchmark/benchmark.h>

#include "treepop/bayes_model.hpp"
#include "treepop/bayes_sampler.hpp"
#include "treepop/diagnostics.hpp"
#include "treepop/rng.hpp"
#include "treepop/tree_spec.hpp"
#include "treepop/wmm.hpp"

namespace {

using namespace treepop;

const TreeSpec& spec(const char* name) {
  static std::map<std::string, TreeSpec> cache;
  auto it = cache.find(name);
  if (it == cache.end()) it = cache.emplace(name, load_tree_spec(std::string(TREEPOP_DATA_DIR) + "/" + name)).first;
  return it->second;
}

void BM_WmmFullTree(benchmark::State& state) {
  const auto& tree = spec("full_opioid.tree").tree;
  WmmConfig c;
  c.iterations = state.range(0);
  for (auto _ : state) benchmark::DoNotOptimize(run_wmm(tree, c).mean);
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_WmmFullTree)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

void BM_MhSweep(benchmark::State& state) {
  const auto& s = spec("full_opioid_bayes.tree");
  const auto model = build_model(s.tree, *s.priors);
  auto st = initial_state(model);
  const auto kernel = static_cast<MhKernel>(state.range(0));
  const std::vector<std::int64_t> steps(model.free_latents.size(), 50);
  RngStream rng(1, 0), gibbs(1, 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(mh_update_latent_counts(model, st, rng, steps, kernel));
    gibbs_update_branch_probs(model, st, gibbs);
  }
  state.SetLabel(std::string(to_string(kernel)));
}
BENCHMARK(BM_MhSweep)->Arg(static_cast<int>(MhKernel::collapsed))->Arg(static_cast<int>(MhKernel::conditional));

void BM_EffectiveSampleSize(benchmark::State& state) {
  RngStream rng(3, 0);
  std::vector<std::vector<double>> chains(6, std::vector<double>(static_cast<std::size_t>(state.range(0))));
  for (auto& c : chains) {
    double v = 0.0;
    for (auto& x : c) x = v = 0.8 * v + rng.normal();
  }
  for (auto _ : state) benchmark::DoNotOptimize(effective_sample_size(chains));
}
BENCHMARK(BM_EffectiveSampleSize)->Arg(10000)->Arg(100000);

}  // namespace

BENCHMARK_MAIN();
