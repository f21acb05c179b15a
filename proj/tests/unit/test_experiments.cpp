#include <gtest/gtest.h>

#include "support.hpp"
#include "treepop/error.hpp"
#include "treepop/experiments.hpp"
#include "treepop/scenario_spec.hpp"

namespace treepop {
namespace {

Scenario wmm_scenario(const std::string& name, std::int64_t iterations = 2000) {
  Scenario s;
  s.name = name;
  s.engine = Engine::wmm;
  s.tree = test::full_spec().tree;
  s.wmm.iterations = iterations;
  return s;
}

Scenario bayes_scenario(const std::string& name) {
  Scenario s;
  s.name = name;
  s.engine = Engine::bayes;
  s.tree = test::bayes_spec().tree;
  s.priors = test::bayes_spec().priors;
  s.bayes.chains = 2;
  s.bayes.iterations = 3000;
  s.bayes.burn_in = 1000;
  s.bayes.thin = 2;
  return s;
}

TEST(RunSuite, EmptyList) { EXPECT_THROW(run_suite({}, "baseline"), DataError); }

TEST(RunSuite, UnknownBaseline) { EXPECT_THROW(run_suite({wmm_scenario("a")}, "b"), DataError); }

TEST(RunSuite, DuplicateNames) {
  EXPECT_THROW(run_suite({wmm_scenario("a"), wmm_scenario("a")}, "a"), DataError);
}

TEST(RunSuite, CrossEngineComparisonRejected) {
  EXPECT_THROW(run_suite({wmm_scenario("a"), bayes_scenario("b")}, "a"), DataError);
}

TEST(RunSuite, UntouchedScenarioReproducesBaseline) {
  SuiteOptions o;
  o.common_random_numbers = true;
  o.seed = 42;
  const auto r = run_suite({wmm_scenario("baseline"), wmm_scenario("copy")}, "baseline", o);
  EXPECT_EQ(r.at("copy").estimates[0].mean, r.at("baseline").estimates[0].mean);
  EXPECT_EQ(r.at("copy").estimates[0].delta, 0.0);
  EXPECT_EQ(r.at("copy").wmm_run->combined_samples, r.at("baseline").wmm_run->combined_samples);

  const auto b = run_suite({bayes_scenario("baseline"), bayes_scenario("copy")}, "baseline", o);
  EXPECT_EQ(b.at("copy").posterior->traces, b.at("baseline").posterior->traces);
}

TEST(RunSuite, DeterministicGivenSeed) {
  SuiteOptions o;
  o.seed = 7;
  auto deleted = wmm_scenario("delete_S");
  deleted.delete_nodes = {NodeId("S")};
  const std::vector<Scenario> suite{wmm_scenario("baseline"), deleted, bayes_scenario("bayes")};
  auto with_self = suite;
  with_self[2].compare_with = "bayes";
  const auto a = run_suite(with_self, "baseline", o);
  o.workers = 3;
  const auto b = run_suite(with_self, "baseline", o);
  for (std::size_t i = 0; i < a.scenarios.size(); ++i) {
    EXPECT_EQ(a.scenarios[i].seed, b.scenarios[i].seed);
    ASSERT_EQ(a.scenarios[i].estimates.size(), b.scenarios[i].estimates.size());
    for (std::size_t q = 0; q < a.scenarios[i].estimates.size(); ++q) {
      EXPECT_EQ(a.scenarios[i].estimates[q].mean, b.scenarios[i].estimates[q].mean);
      EXPECT_EQ(a.scenarios[i].estimates[q].lo, b.scenarios[i].estimates[q].lo);
    }
  }
}

TEST(RunSuite, ExpectationsEvaluated) {
  SuiteOptions o;
  o.common_random_numbers = true;
  auto up = wmm_scenario("p_AD");
  BranchGroupSpec g = *up.tree.group_for(NodeId("A"));
  g.spec = BetaSurveyPerChild{{SurveyCount{2, 10}, std::nullopt}};
  up.overrides["p_AD"] = PriorOverride{{}, g, {}};
  up.expectations = {{"Z", Expectation::Kind::decrease, 0.0, {}},
                     {"Z", Expectation::Kind::increase, 0.0, {}},
                     {"Z", Expectation::Kind::within, 0.001, {}},
                     {"Z", Expectation::Kind::exceeds_shift_of, 0.0, "baseline"}};
  const auto r = run_suite({wmm_scenario("baseline"), up}, "baseline", o);
  const auto& e = r.at("p_AD").expectations;
  ASSERT_EQ(e.size(), 4u);
  EXPECT_TRUE(e[0].passed);
  EXPECT_FALSE(e[1].passed);
  EXPECT_FALSE(e[2].passed);
  EXPECT_TRUE(e[3].passed);
  EXPECT_LT(e[0].observed, 0.0);
  EXPECT_FALSE(r.expectations_passed());
}

TEST(RunSuite, EngineErrorsNameScenario) {
  auto bad = wmm_scenario("broken");
  bad.delete_nodes = {NodeId("C")};
  try {
    run_suite({wmm_scenario("baseline"), bad}, "baseline");
    FAIL() << "expected an error";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("scenario 'broken'"), std::string::npos) << e.what();
  }
}

TEST(ScenarioSeed, Rules) {
  Scenario s;
  s.name = "x";
  SuiteOptions o;
  o.seed = 11;
  const auto derived = scenario_seed(s, o);
  EXPECT_NE(derived, 11u);
  s.name = "y";
  EXPECT_NE(scenario_seed(s, o), derived);
  o.common_random_numbers = true;
  EXPECT_EQ(scenario_seed(s, o), 11u);
  s.seed = 5;
  EXPECT_EQ(scenario_seed(s, o), 5u);
}

TEST(PrepareScenario, OverrideMustMatchEngine) {
  auto s = bayes_scenario("b");
  s.overrides["p_ZA"] = PriorOverride{{}, *s.tree.group_for(NodeId("Z")), {}};
  EXPECT_THROW(prepare_scenario(s), DataError);
  auto w = wmm_scenario("w");
  w.overrides["root"] = PriorOverride{RootPrior::uniform(1, 10), {}, {}};
  EXPECT_THROW(prepare_scenario(w), DataError);
}

TEST(PrepareScenario, AggregationCarriesPriors) {
  auto s = bayes_scenario("agg");
  s.aggregate = {{NodeId("D"), {NodeId("J"), NodeId("K")}, NodeId("JK")}};
  const auto p = prepare_scenario(s);
  EXPECT_TRUE(p.tree.contains(NodeId("JK")));
  EXPECT_EQ(p.tree.node(NodeId("JK")).observed_count, 173 + 2279);
  const auto* g = p.priors->find(NodeId("D"));
  ASSERT_NE(g, nullptr);
  EXPECT_EQ(g->concentration, (std::vector<double>{10.0, 1.0}));
  EXPECT_NO_THROW(build_model(p.tree, *p.priors));
}

TEST(BranchSensitivity, HigherFatalityLowersRoot) {
  WmmConfig c;
  c.iterations = 5000;
  c.seed = 3;
  BranchGroupSpec alt = *test::full_spec().tree.group_for(NodeId("A"));
  alt.spec = BetaSurveyPerChild{{SurveyCount{2, 10}, std::nullopt}};
  const auto r = wmm_branch_sensitivity(test::full_spec().tree, Edge{NodeId("A"), NodeId("D")},
                                        {{"p_AD_2_10", alt, Expectation::Kind::decrease}}, c);
  EXPECT_LT(r.at("p_AD_2_10").estimates[0].delta, 0.0);
  EXPECT_TRUE(r.expectations_passed());
}

TEST(BranchSensitivity, IdenticalAlternateHasZeroDelta) {
  WmmConfig c;
  c.iterations = 2000;
  const auto same = *test::full_spec().tree.group_for(NodeId("Z"));
  const auto r = wmm_branch_sensitivity(test::full_spec().tree, Edge{NodeId("Z"), NodeId("A")}, {{"same", same, {}}}, c);
  EXPECT_EQ(r.at("same").estimates[0].delta, 0.0);
}

TEST(BranchSensitivity, UnknownBranch) {
  const auto g = *test::full_spec().tree.group_for(NodeId("Z"));
  EXPECT_THROW(wmm_branch_sensitivity(test::full_spec().tree, Edge{NodeId("Z"), NodeId("K")}, {{"x", g, {}}},
                                      WmmConfig{}),
               DataError);
}

TEST(SuiteSpec, ShippedSuitesParse) {
  for (const char* f : {"voi_bayes.yaml", "voi_wmm.yaml", "aggregation.yaml", "sensitivity_best_reconstruction.yaml"}) {
    const auto s = load_suite_spec(test::data_path(std::string("suites/") + f));
    EXPECT_FALSE(s.scenarios.empty()) << f;
    EXPECT_TRUE(s.warnings.empty()) << f;
    for (const auto& sc : s.scenarios) EXPECT_NO_THROW(prepare_scenario(sc)) << f << " " << sc.name;
  }
}

TEST(SuiteSpec, MatchedPerturbations) {
  const auto s = load_suite_spec(test::data_path("suites/sensitivity_best_reconstruction.yaml"));
  auto find = [&](const std::string& n) -> const Scenario& {
    for (const auto& sc : s.scenarios) {
      if (sc.name == n) return sc;
    }
    throw std::runtime_error(n);
  };
  // Dirichlet(4, 3) to (3, 4) moves the mean of p_ZA by 1/7; the Bayesian
  // prior keeps total concentration 25 and moves its A mean by the same.
  const auto& p = *find("bayes_p").overrides.at("p").prior;
  EXPECT_NEAR(p.concentration[0] / 25.0 - 10.0 / 25.0, 4.0 / 7.0 - 3.0 / 7.0, 1e-12);
  EXPECT_NEAR(p.concentration[0] + p.concentration[1], 25.0, 1e-12);
  // Beta(2, 10) to (3, 9) moves p_AD by 1/12; q keeps total 11.
  const auto& q = *find("bayes_q").overrides.at("q").prior;
  EXPECT_NEAR(q.concentration[0] / 11.0 - 1.0 / 11.0, 3.0 / 12.0 - 2.0 / 12.0, 1e-12);
  EXPECT_NEAR(q.concentration[0] + q.concentration[1], 11.0, 1e-12);
}

TEST(SuiteSpec, UnknownOverrideKey) {
  const std::string doc = R"(
suite: bad
seed: 1
baseline: a
tree: full_opioid.tree
scenarios:
  - name: a
    overrides:
      p_QX: {fixed: [0.5, 0.5]}
)";
  EXPECT_THROW(parse_suite_spec(doc, test::data_path("")), ParseError);
}

TEST(SuiteSpec, UnknownFieldStrictAndLenient) {
  const std::string doc = R"(
suite: s
seed: 1
baseline: a
tree: full_opioid.tree
scenarios:
  - name: a
    colour: blue
)";
  try {
    parse_suite_spec(doc, test::data_path(""));
    FAIL() << "expected an error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 8);
  }
  const auto lenient = parse_suite_spec(doc, test::data_path(""), {false});
  ASSERT_EQ(lenient.warnings.size(), 1u);
  EXPECT_NE(lenient.warnings[0].find("colour"), std::string::npos);
}

TEST(SuiteSpec, SeedIsRequired) {
  const std::string doc = R"(
suite: s
baseline: a
tree: full_opioid.tree
scenarios:
  - name: a
)";
  EXPECT_THROW(parse_suite_spec(doc, test::data_path("")), ParseError);
}

}  // namespace
}  // namespace treepop
