#include <algorithm>
#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "support.hpp"
#include "treepop/bayes_model.hpp"
#include "treepop/bayes_sampler.hpp"
#include "treepop/error.hpp"

namespace treepop {
namespace {

BayesModel model_from_yaml(const std::string& yaml) {
  const auto spec = parse_tree_spec(yaml);
  return build_model(spec.tree, *spec.priors);
}

const BayesModel& opioid_model() {
  static const BayesModel model = build_model(test::bayes_spec().tree, *test::bayes_spec().priors);
  return model;
}

// Z ~ U{lower..upper}, one observed leaf A and one latent leaf B.
std::string two_leaf_tree(std::int64_t a_count, std::int64_t lower, std::int64_t upper, double alpha_a,
                          double alpha_b, bool b_observed = false, std::int64_t b_count = 0) {
  return fmt::format(R"(
name: two_leaf
nodes:
  - {{id: Z, role: root}}
  - {{id: A, role: leaf, count: {}}}
  - {{id: B, role: leaf{}}}
edges:
  - {{child: A, parent: Z}}
  - {{child: B, parent: Z}}
branch_groups:
  - {{parent: Z, children: [A, B], dirichlet_prior: [1, 1]}}
priors:
  root:
    uniform: {{lower: {}, upper: {}}}
  groups:
    - {{name: p, parent: Z, order: [A, B], concentration: [{}, {}]}}
)",
                     a_count, b_observed ? fmt::format(", count: {}", b_count) : "", lower, upper, alpha_a,
                     alpha_b);
}

double log_dirichlet_multinomial(std::int64_t a, std::int64_t b, double alpha_a, double alpha_b) {
  const double n = static_cast<double>(a + b);
  return std::lgamma(n + 1) - std::lgamma(a + 1.0) - std::lgamma(b + 1.0) + std::lgamma(alpha_a + alpha_b) -
         std::lgamma(alpha_a + alpha_b + n) + std::lgamma(alpha_a + a) - std::lgamma(alpha_a) +
         std::lgamma(alpha_b + b) - std::lgamma(alpha_b);
}

struct ExactMoments {
  double mean_b = 0.0;
  double mean_pa = 0.0;
  double var_pa = 0.0;
};

/// Posterior over B by enumeration: U{lower..upper} root prior times the
/// Dirichlet-multinomial likelihood of (A, B).
ExactMoments enumerate_two_leaf(std::int64_t a, std::int64_t lower, std::int64_t upper, double alpha_a,
                                double alpha_b) {
  std::vector<double> logw;
  std::vector<std::int64_t> bs;
  for (std::int64_t z = std::max(lower, a); z <= upper; ++z) {
    bs.push_back(z - a);
    logw.push_back(log_dirichlet_multinomial(a, z - a, alpha_a, alpha_b));
  }
  const double top = *std::max_element(logw.begin(), logw.end());
  double norm = 0.0;
  for (auto& w : logw) norm += (w = std::exp(w - top));
  ExactMoments m;
  double second = 0.0;
  for (std::size_t i = 0; i < bs.size(); ++i) {
    const double w = logw[i] / norm;
    const double b = static_cast<double>(bs[i]);
    const double s = alpha_a + alpha_b + static_cast<double>(a) + b;
    const double ea = (alpha_a + static_cast<double>(a)) / s;
    m.mean_b += w * b;
    m.mean_pa += w * ea;
    second += w * ea * (alpha_a + static_cast<double>(a) + 1.0) / (s + 1.0);
  }
  m.var_pa = second - m.mean_pa * m.mean_pa;
  return m;
}

/// Standard error of the pooled mean from per-chain batch means.
double pooled_standard_error(const std::vector<std::vector<double>>& chains) {
  double s = 0.0;
  for (const auto& c : chains) {
    const double se = test::batch_standard_error(c, 40);
    s += se * se;
  }
  return std::sqrt(s) / static_cast<double>(chains.size());
}

TEST(BuildModel, OpioidFreeLatents) {
  std::vector<std::string> got;
  for (const auto& id : opioid_model().free_latent_ids()) got.push_back(id.str());
  std::sort(got.begin(), got.end());
  EXPECT_EQ(got, (std::vector<std::string>{"C", "I", "L", "R", "U"}));
}

TEST(BuildModel, OpioidGroupSizes) {
  std::map<std::string, std::size_t> sizes;
  for (const auto& g : opioid_model().groups) sizes[g.name] = g.alpha.size();
  EXPECT_EQ(sizes, (std::map<std::string, std::size_t>{{"p", 2}, {"q", 2}, {"r", 5}, {"s", 3}, {"t", 6}, {"u", 3}}));
}

TEST(BuildModel, FullyObservedHasNoLatents) {
  const auto m = model_from_yaml(two_leaf_tree(3, 1, 100, 1, 1, true, 7));
  EXPECT_TRUE(m.free_latents.empty());
}

TEST(BuildModel, DimensionMismatchNamesGroup) {
  auto priors = *test::bayes_spec().priors;
  priors.find_by_name("r")->concentration = {1, 1, 1, 1, 1, 1, 1};
  try {
    build_model(test::bayes_spec().tree, priors);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("'r'"), std::string::npos) << msg;
    EXPECT_NE(msg.find("'B'"), std::string::npos) << msg;
  }
}

TEST(LogPosterior, ZeroLatentsFinite) {
  const auto& m = opioid_model();
  auto s = initial_state(m);
  for (auto i : m.free_latents) s.counts[i] = 0;
  derive_counts(m, s);
  EXPECT_TRUE(std::isfinite(log_posterior(m, s)));
  EXPECT_TRUE(std::isfinite(collapsed_log_posterior(m, s)));
}

TEST(LogPosterior, MultinomialTerm) {
  const auto m = model_from_yaml(two_leaf_tree(3, 1, 100, 1, 1, true, 7));
  auto s = initial_state(m);
  s.branch_probs[0] = {0.3, 0.7};
  const double expected = std::log(120.0) + 3 * std::log(0.3) + 7 * std::log(0.7);
  EXPECT_NEAR(group_log_likelihood(m, 0, s), expected, 1e-12);
}

TEST(LogPosterior, UniformRootBound) {
  const auto prior = RootPrior::uniform(34113, 100000);
  EXPECT_EQ(prior.log_density(34000), -std::numeric_limits<double>::infinity());
  EXPECT_NEAR(prior.log_density(34113), -std::log(100000.0 - 34113.0 + 1.0), 1e-12);

  const auto m = model_from_yaml(two_leaf_tree(30000, 34113, 100000, 1, 1));
  auto s = initial_state(m);
  s.counts[m.index_of(NodeId("B"))] = 4000;
  derive_counts(m, s);
  EXPECT_EQ(s.count(m, NodeId("Z")), 34000);
  EXPECT_EQ(log_posterior(m, s), -std::numeric_limits<double>::infinity());
}

TEST(LogPosterior, InvalidInitializationIsReported) {
  // Observed leaves already exceed the largest root value.
  const auto m = model_from_yaml(two_leaf_tree(500, 1, 100, 1, 1));
  ChainConfig c;
  c.chains = 2;
  c.iterations = 400;
  c.burn_in = 100;
  c.thin = 1;
  try {
    run_chains(m, c);
    FAIL() << "expected an error";
  } catch (const ModelError& e) {
    EXPECT_NE(std::string(e.what()).find("invalid initialization"), std::string::npos) << e.what();
  }
}

TEST(RootPrior, BoundsHelperReproducesPreset) {
  const auto prior = lognormal_from_bounds(34113, 76621, 51000, 0.70);
  EXPECT_NEAR(prior.log_mean, std::log(51000.0), 1e-12);
  auto cdf = [&](double x) { return 0.5 * std::erfc(-(std::log(x) - prior.log_mean) / (prior.log_sd * std::sqrt(2.0))); };
  EXPECT_NEAR(cdf(76621) - cdf(34113), 0.70, 1e-8);
  EXPECT_NEAR(prior.log_sd, 0.38, 0.02);
}

TEST(Gibbs, ConjugateUpdate) {
  const auto m = model_from_yaml(two_leaf_tree(3, 1, 100, 1, 1, true, 7));
  auto s = initial_state(m);
  RngStream rng(5, 0);
  double sum = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    gibbs_update_branch_probs(m, s, rng);
    sum += s.branch_probs[0][0];
  }
  EXPECT_NEAR(sum / n, 1.0 / 3.0, 0.01);
}

TEST(Gibbs, NoDataDrawsFromPrior) {
  const auto m = model_from_yaml(two_leaf_tree(0, 0, 10, 10, 15, true, 0));
  auto s = initial_state(m);
  RngStream rng(6, 0);
  double sum = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    gibbs_update_branch_probs(m, s, rng);
    sum += s.branch_probs[0][0];
  }
  // Beta(10, 15): mean 0.4, sd 0.096.
  EXPECT_NEAR(sum / n, 0.4, 3 * 0.096 / std::sqrt(n));
}

TEST(Gibbs, OpioidModelStaysOnSimplex) {
  const auto& m = opioid_model();
  auto s = initial_state(m);
  RngStream rng(7, 0);
  for (int i = 0; i < 200; ++i) {
    gibbs_update_branch_probs(m, s, rng);
    for (const auto& p : s.branch_probs) {
      double total = 0.0;
      for (double v : p) {
        EXPECT_GE(v, 0.0);
        total += v;
      }
      EXPECT_NEAR(total, 1.0, 1e-12);
    }
  }
}

TEST(MetropolisHastings, NegativeProposalRejected) {
  const auto& m = opioid_model();
  auto start = initial_state(m);
  const auto c = m.index_of(NodeId("C"));
  start.counts[c] = 0;
  derive_counts(m, start);
  const std::vector<std::int64_t> steps(m.free_latents.size(), 1);
  const auto pos = static_cast<std::size_t>(
      std::find(m.free_latents.begin(), m.free_latents.end(), c) - m.free_latents.begin());
  int rejected = 0;
  for (std::uint64_t rep = 0; rep < 200; ++rep) {
    auto s = start;
    RngStream rng(8, rep);
    const auto accepted = mh_update_latent_counts(m, s, rng, steps);
    EXPECT_GE(s.counts[c], 0);
    if (accepted[pos] == 0) {
      EXPECT_EQ(s.counts[c], 0);
      ++rejected;
    }
    for (auto v : s.counts) EXPECT_GE(v, 0);
  }
  EXPECT_GT(rejected, 0);
}

class EnumerableTree : public ::testing::TestWithParam<MhKernel> {};

TEST_P(EnumerableTree, ChainMatchesExactPosterior) {
  // Root U{10..50} with A = 10 observed; B is the only latent.
  const auto m = model_from_yaml(two_leaf_tree(10, 10, 50, 2, 3));
  const auto exact = enumerate_two_leaf(10, 10, 50, 2, 3);
  ChainConfig c;
  c.chains = 4;
  c.iterations = 60000;
  c.burn_in = 5000;
  c.thin = 5;
  c.seed = 31;
  c.kernel = GetParam();
  const auto post = run_chains(m, c);

  const auto& b = post.traces[post.index_of("B")];
  const auto& pa = post.traces[post.index_of("p_A")];
  EXPECT_NEAR(post.at("B").mean, exact.mean_b, 3 * pooled_standard_error(b));
  EXPECT_NEAR(post.at("p_A").mean, exact.mean_pa, 3 * pooled_standard_error(pa));

  std::vector<std::vector<double>> sq;
  for (const auto& chain : pa) {
    std::vector<double> v;
    for (double x : chain) v.push_back((x - exact.mean_pa) * (x - exact.mean_pa));
    sq.push_back(std::move(v));
  }
  double second = 0.0;
  std::size_t n = 0;
  for (const auto& chain : sq) {
    for (double x : chain) second += x;
    n += chain.size();
  }
  EXPECT_NEAR(second / static_cast<double>(n), exact.var_pa, 3 * pooled_standard_error(sq));
}

INSTANTIATE_TEST_SUITE_P(Kernels, EnumerableTree, ::testing::Values(MhKernel::collapsed, MhKernel::conditional));

TEST(RunChains, PriorRecovery) {
  const auto m = model_from_yaml(R"(
name: no_data
nodes:
  - {id: Z, role: root}
  - {id: A, role: leaf}
  - {id: B, role: leaf}
edges:
  - {child: A, parent: Z}
  - {child: B, parent: Z}
branch_groups:
  - {parent: Z, children: [A, B], dirichlet_prior: [1, 1]}
priors:
  root:
    lognormal: {log_mean: 6.907755278982137, log_sd: 0.3}
  groups:
    - {name: p, parent: Z, concentration: [1, 1]}
)");
  ChainConfig c;
  c.chains = 4;
  c.iterations = 100000;
  c.burn_in = 10000;
  c.thin = 10;
  c.seed = 4;
  const auto post = run_chains(m, c);

  // Discretized lognormal moments by summation over the integers.
  double w = 0.0, s1 = 0.0, s2 = 0.0;
  for (int z = 1; z < 20000; ++z) {
    const double lz = std::log(static_cast<double>(z));
    const double d = std::exp(-0.5 * std::pow((lz - std::log(1000.0)) / 0.3, 2)) / z;
    w += d;
    s1 += d * z;
    s2 += d * z * static_cast<double>(z);
  }
  const double mean = s1 / w;
  const double sd = std::sqrt(s2 / w - mean * mean);
  EXPECT_NEAR(mean, std::exp(std::log(1000.0) + 0.045), 1.0);

  const auto& z = post.traces[post.index_of("Z")];
  EXPECT_NEAR(post.at("Z").mean, mean, 3 * pooled_standard_error(z));
  std::vector<std::vector<double>> dev;
  for (const auto& chain : z) {
    std::vector<double> v;
    for (double x : chain) v.push_back((x - mean) * (x - mean));
    dev.push_back(std::move(v));
  }
  double second = 0.0;
  std::size_t n = 0;
  for (const auto& chain : dev) {
    for (double x : chain) second += x;
    n += chain.size();
  }
  const double se_var = pooled_standard_error(dev);
  EXPECT_NEAR(second / static_cast<double>(n), sd * sd, 3 * se_var);
}

ChainConfig short_config(std::uint64_t seed) {
  ChainConfig c;
  c.chains = 3;
  c.iterations = 6000;
  c.burn_in = 2000;
  c.thin = 2;
  c.seed = seed;
  return c;
}

TEST(RunChains, KeptSamplesAreConsistent) {
  const auto post = run_chains(opioid_model(), short_config(12));
  auto trace = [&](const char* q) -> const std::vector<std::vector<double>>& {
    return post.traces[post.index_of(q)];
  };
  const double efh = 16922 + 1390 + 473;
  for (std::size_t c = 0; c < trace("Z").size(); ++c) {
    for (std::size_t d = 0; d < trace("Z")[c].size(); ++d) {
      auto v = [&](const char* q) { return trace(q)[c][d]; };
      ASSERT_EQ(v("Z"), v("A") + v("B"));
      ASSERT_EQ(v("A"), v("C") + v("D"));
      ASSERT_EQ(v("D"), 173 + 2279 + v("L"));
      ASSERT_EQ(v("P"), 2270 + 106 + v("U"));
      ASSERT_EQ(v("G"), 11678 + 199 + 1030 + v("P") + 45 + v("R"));
      ASSERT_EQ(v("B"), efh + v("G") + v("I"));
      ASSERT_GE(v("B"), 34113);
    }
  }
}

TEST(RunChains, Deterministic) {
  const auto a = run_chains(opioid_model(), short_config(5));
  const auto b = run_chains(opioid_model(), short_config(5));
  EXPECT_EQ(a.traces, b.traces);
  ASSERT_EQ(a.quantities.size(), b.quantities.size());
  for (std::size_t i = 0; i < a.quantities.size(); ++i) {
    EXPECT_EQ(a.quantities[i].mean, b.quantities[i].mean);
    EXPECT_EQ(a.quantities[i].ess, b.quantities[i].ess);
    EXPECT_EQ(a.quantities[i].rhat, b.quantities[i].rhat);
  }
}

TEST(RunChains, WorkersDoNotChangeResults) {
  auto c = short_config(6);
  const auto a = run_chains(opioid_model(), c);
  c.workers = 3;
  const auto b = run_chains(opioid_model(), c);
  EXPECT_EQ(a.traces, b.traces);
}

TEST(RunChains, ExchangingChainSeedsPermutesTraces) {
  auto c = short_config(9);
  c.chain_streams = {0, 1, 2};
  const auto a = run_chains(opioid_model(), c);
  c.chain_streams = {2, 0, 1};
  const auto b = run_chains(opioid_model(), c);
  for (std::size_t q = 0; q < a.traces.size(); ++q) {
    EXPECT_EQ(a.traces[q][2], b.traces[q][0]);
    EXPECT_EQ(a.traces[q][0], b.traces[q][1]);
    EXPECT_EQ(a.traces[q][1], b.traces[q][2]);
    const auto& x = a.quantities[q];
    const auto& y = b.quantities[q];
    EXPECT_NEAR(x.mean, y.mean, 1e-9 * std::abs(x.mean) + 1e-15);
    EXPECT_NEAR(x.sd, y.sd, 1e-9 * std::abs(x.sd) + 1e-15);
    EXPECT_EQ(x.q025, y.q025);
    EXPECT_EQ(x.median, y.median);
    EXPECT_EQ(x.q975, y.q975);
    EXPECT_NEAR(x.ess, y.ess, 1e-6 * x.ess);
  }
}

TEST(RunChains, ReportedNames) {
  const auto names = reported_quantities(opioid_model());
  for (const char* q : {"Z", "A", "B", "C", "L", "I", "R", "U", "p_A", "q_D", "s_L", "r_I", "t_R", "u_U"}) {
    EXPECT_NE(std::find(names.begin(), names.end(), q), names.end()) << q;
  }
  EXPECT_EQ(names.front(), "Z");
}

TEST(ChainConfig, RejectsUnusableSettings) {
  ChainConfig c;
  c.chains = 1;
  EXPECT_THROW(c.check(), ModelError);
  c = ChainConfig{};
  c.iterations = 1000;
  c.burn_in = 990;
  c.thin = 10;
  EXPECT_THROW(c.check(), ModelError);
}

TEST(AggregatePriors, SumsConcentrations) {
  const auto& spec = test::bayes_spec();
  const auto merged = aggregate_priors(*spec.priors, spec.tree,
                                       {{NodeId("B"), {NodeId("E"), NodeId("F"), NodeId("H")}, NodeId("EFH")}});
  const auto* r = merged.find(NodeId("B"));
  ASSERT_NE(r, nullptr);
  std::map<std::string, double> conc;
  for (std::size_t i = 0; i < r->order.size(); ++i) conc[r->order[i].str()] = r->concentration[i];
  EXPECT_EQ(conc, (std::map<std::string, double>{{"EFH", 15.0}, {"G", 5.0}, {"I", 4.0}}));
}

}  // namespace
}  // namespace treepop
