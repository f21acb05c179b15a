#include "cli.hpp"

#include <algorithm>
#include <filesystem>
#include <numeric>
#include <ostream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "treepop/error.hpp"
#include "treepop/result_bundle.hpp"
#include "treepop/scenario_spec.hpp"
#include "treepop/tree_spec.hpp"

namespace treepop::cli {

namespace fs = std::filesystem;

namespace {

struct CommonFlags {
  bool lenient = false;
  bool samples = false;
  std::int64_t sample_thin = 1;
  int bins = 50;
};

struct WmmArgs {
  std::string tree;
  std::int64_t iterations = 10000;
  std::uint64_t seed = 0;
  std::string out;
  std::string scale = "log";
  double interval_mass = 0.95;
  unsigned workers = 1;
};

struct BayesArgs {
  std::string tree;
  int chains = 6;
  std::int64_t iterations = 200000;
  std::int64_t burn_in = 100000;
  std::int64_t thin = 10;
  std::uint64_t seed = 0;
  std::string out;
  std::string kernel = "collapsed";
  bool no_tune = false;
  unsigned workers = 1;
  std::size_t acf_lag = 50;
  bool strict_convergence = false;
  double max_rhat = 1.05;
  double min_ess = 400.0;
};

struct SuiteArgs {
  std::string path;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> workers;
  bool strict_convergence = false;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool outputs) {
  cmd->add_flag("--lenient", f.lenient, "Downgrade unknown fields to warnings");
  if (!outputs) return;
  cmd->add_flag("--samples", f.samples, "Also write samples.csv");
  cmd->add_option("--sample-thin", f.sample_thin, "Keep every n-th draw in samples.csv")->check(CLI::PositiveNumber);
  cmd->add_option("--bins", f.bins, "Histogram bins")->check(CLI::Range(1, 100000));
}

void print_warnings(const std::vector<std::string>& warnings, std::ostream& err) {
  for (const auto& w : warnings) err << "warning: " << w << '\n';
}

BundleOptions bundle_options(const CommonFlags& f) { return {f.samples, f.sample_thin, f.bins}; }

std::string join(const std::vector<std::int64_t>& v) {
  return fmt::format("{}", fmt::join(v, " "));
}

int run_validate(const std::string& path, const CommonFlags& f, std::ostream& out, std::ostream& err) {
  const auto spec = load_tree_spec(path, {!f.lenient});
  print_warnings(spec.warnings, err);
  const auto leaves = informed_leaves(spec.tree);
  out << fmt::format("{}: {} nodes, {} informed leaves, {}\n", spec.tree.name(), spec.tree.nodes().size(),
                     leaves.size(), spec.priors ? "with priors" : "no priors");
  if (spec.priors) build_model(spec.tree, *spec.priors);
  return kOk;
}

int run_wmm_command(const WmmArgs& a, const CommonFlags& f, std::ostream& out, std::ostream& err) {
  const auto spec = load_tree_spec(a.tree, {!f.lenient});
  print_warnings(spec.warnings, err);
  WmmConfig config;
  config.iterations = a.iterations;
  config.seed = a.seed;
  config.scale = *parse_combine_scale(a.scale);
  config.interval_mass = a.interval_mass;
  config.workers = a.workers;
  const auto run = run_wmm(spec.tree, config);

  RunMetadata meta;
  meta.command = "wmm";
  meta.seed = a.seed;
  meta.tree_name = spec.tree.name();
  meta.tree_digest = tree_digest(spec.tree);
  meta.config = {{"iterations", a.iterations}, {"scale", a.scale}, {"interval_mass", a.interval_mass}};
  meta.results = {{"mean", run.mean},
                  {"arithmetic_mean", run.arithmetic_mean},
                  {"median", run.median},
                  {"sd", run.sd},
                  {"quantile_lo", run.quantile_interval.lo},
                  {"quantile_hi", run.quantile_interval.hi},
                  {"normal_lo", run.normal_interval.lo},
                  {"normal_hi", run.normal_interval.hi}};
  write_wmm_bundle(a.out, run, spec.tree, meta, bundle_options(f));
  out << render_report(a.out);
  return kOk;
}

int run_bayes_command(const BayesArgs& a, const CommonFlags& f, std::ostream& out, std::ostream& err) {
  const auto spec = load_tree_spec(a.tree, {!f.lenient});
  print_warnings(spec.warnings, err);
  if (!spec.priors) throw DataError(fmt::format("'{}' has no priors block", a.tree));
  ChainConfig config;
  config.chains = a.chains;
  config.iterations = a.iterations;
  config.burn_in = a.burn_in;
  config.thin = a.thin;
  config.seed = a.seed;
  config.kernel = *parse_mh_kernel(a.kernel);
  config.tune = !a.no_tune;
  config.workers = a.workers;
  config.acf_lag = a.acf_lag;
  const auto model = build_model(spec.tree, *spec.priors);
  const auto post = run_chains(model, config);

  const bool flagged = post.max_rhat() > a.max_rhat || post.min_ess() < a.min_ess;
  RunMetadata meta;
  meta.command = "bayes";
  meta.seed = a.seed;
  meta.tree_name = spec.tree.name();
  meta.tree_digest = tree_digest(spec.tree, spec.priors);
  meta.config = {{"chains", std::int64_t{a.chains}}, {"iterations", a.iterations}, {"burn_in", a.burn_in},
                 {"thin", a.thin},                   {"kernel", a.kernel},         {"tune", !a.no_tune},
                 {"acf_lag", std::uint64_t{a.acf_lag}}};
  meta.results = {{"max_rhat", post.max_rhat()}, {"min_ess", post.min_ess()}, {"flagged", flagged}};
  for (std::size_t l = 0; l < post.free_latents.size(); ++l) {
    const auto name = post.free_latents[l].str();
    double acc = 0.0;
    std::vector<std::int64_t> steps;
    for (std::size_t c = 0; c < post.acceptance.size(); ++c) {
      acc += post.acceptance[c][l];
      steps.push_back(post.step_sizes[c][l]);
    }
    meta.results.emplace_back("acceptance_" + name, acc / static_cast<double>(post.acceptance.size()));
    meta.results.emplace_back("step_sizes_" + name, join(steps));
  }
  write_bayes_bundle(a.out, post, meta, bundle_options(f));
  out << render_report(a.out);
  if (flagged) {
    err << fmt::format("convergence flag: max R-hat {:.4g}, min ESS {:.4g}\n", post.max_rhat(), post.min_ess());
    if (a.strict_convergence) return kConvergence;
  }
  return kOk;
}

int run_suite_command(const SuiteArgs& a, const CommonFlags& f, std::ostream& out, std::ostream& err) {
  auto suite = load_suite_spec(a.path, {!f.lenient});
  print_warnings(suite.warnings, err);
  if (a.seed) suite.options.seed = *a.seed;
  if (a.workers) suite.options.workers = *a.workers;
  const auto report = run_suite(suite.scenarios, suite.baseline, suite.options);

  RunMetadata meta;
  meta.command = "suite";
  meta.seed = suite.options.seed;
  meta.tree_name = suite.name;
  meta.tree_digest = sha256_hex([&] {
    std::string all;
    for (const auto& s : report.scenarios) all += s.name + ":" + s.tree_digest + "\n";
    return all;
  }());
  meta.config = {{"baseline", suite.baseline},
                 {"common_random_numbers", suite.options.common_random_numbers},
                 {"max_rhat", suite.options.max_rhat},
                 {"min_ess", suite.options.min_ess}};
  meta.results = {{"expectations_passed", report.expectations_passed()}, {"any_flagged", report.any_flagged()}};
  write_suite_bundle(a.out, report, meta, bundle_options(f));
  out << render_report(a.out);
  for (const auto& s : report.scenarios) {
    for (const auto& e : s.expectations) {
      if (!e.passed) err << fmt::format("expectation not met: {}: {}\n", s.name, e.description);
    }
  }
  if (report.any_flagged()) {
    err << "convergence flag raised for at least one scenario\n";
    if (a.strict_convergence) return kConvergence;
  }
  return kOk;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hidden population size estimation on evidence trees", "treepop"};
  app.require_subcommand(1, 1);
  app.set_version_flag("--version", TREEPOP_VERSION);

  CommonFlags common;

  std::string validate_path;
  auto* validate = app.add_subcommand("validate", "Parse and check a tree file");
  validate->add_option("tree", validate_path, "Tree file")->required()->check(CLI::ExistingFile);
  add_common(validate, common, false);

  WmmArgs wmm;
  auto* wmm_cmd = app.add_subcommand("wmm", "Weighted multiplier method");
  wmm_cmd->add_option("tree", wmm.tree, "Tree file")->required()->check(CLI::ExistingFile);
  wmm_cmd->add_option("--iterations", wmm.iterations, "Monte Carlo iterations")->check(CLI::PositiveNumber);
  wmm_cmd->add_option("--seed", wmm.seed, "Random seed")->required();
  wmm_cmd->add_option("--out", wmm.out, "Output directory")->required();
  wmm_cmd->add_option("--scale", wmm.scale, "Scale for weights and combination")
      ->check(CLI::IsMember({"log", "linear"}));
  wmm_cmd->add_option("--interval-mass", wmm.interval_mass, "Central interval mass")->check(CLI::Range(0.0, 1.0));
  wmm_cmd->add_option("--workers", wmm.workers, "Worker threads")->check(CLI::Range(1u, 1024u));
  add_common(wmm_cmd, common, true);

  BayesArgs bayes;
  auto* bayes_cmd = app.add_subcommand("bayes", "Bayesian evidence synthesis");
  bayes_cmd->add_option("tree", bayes.tree, "Tree file with priors")->required()->check(CLI::ExistingFile);
  bayes_cmd->add_option("--chains", bayes.chains, "Chains")->check(CLI::Range(2, 1024));
  bayes_cmd->add_option("--iterations", bayes.iterations, "Iterations per chain")->check(CLI::PositiveNumber);
  bayes_cmd->add_option("--burn-in", bayes.burn_in, "Burn-in iterations")->check(CLI::NonNegativeNumber);
  bayes_cmd->add_option("--thin", bayes.thin, "Thinning interval")->check(CLI::PositiveNumber);
  bayes_cmd->add_option("--seed", bayes.seed, "Random seed")->required();
  bayes_cmd->add_option("--out", bayes.out, "Output directory")->required();
  bayes_cmd->add_option("--kernel", bayes.kernel, "Latent-count acceptance ratio")
      ->check(CLI::IsMember({"collapsed", "conditional"}));
  bayes_cmd->add_flag("--no-tune", bayes.no_tune, "Keep the initial step sizes");
  bayes_cmd->add_option("--workers", bayes.workers, "Worker threads")->check(CLI::Range(1u, 1024u));
  bayes_cmd->add_option("--acf-lag", bayes.acf_lag, "Largest autocorrelation lag");
  bayes_cmd->add_flag("--strict-convergence", bayes.strict_convergence, "Exit 3 when convergence is flagged");
  bayes_cmd->add_option("--max-rhat", bayes.max_rhat, "Largest acceptable split R-hat");
  bayes_cmd->add_option("--min-ess", bayes.min_ess, "Smallest acceptable ESS");
  add_common(bayes_cmd, common, true);

  SuiteArgs suite;
  auto* suite_cmd = app.add_subcommand("suite", "Run a scenario suite");
  suite_cmd->add_option("scenarios", suite.path, "Suite file")->required()->check(CLI::ExistingFile);
  suite_cmd->add_option("--out", suite.out, "Output directory")->required();
  suite_cmd->add_option("--seed", suite.seed, "Replace the suite seed");
  suite_cmd->add_option("--workers", suite.workers, "Scenarios run in parallel")->check(CLI::Range(1u, 1024u));
  suite_cmd->add_flag("--strict-convergence", suite.strict_convergence, "Exit 3 when any scenario is flagged");
  add_common(suite_cmd, common, true);

  std::string bundle;
  auto* report_cmd = app.add_subcommand("report", "Print a result bundle");
  report_cmd->add_option("bundle", bundle, "Bundle directory")->required()->check(CLI::ExistingDirectory);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (validate->parsed()) return run_validate(validate_path, common, out, err);
    if (wmm_cmd->parsed()) return run_wmm_command(wmm, common, out, err);
    if (bayes_cmd->parsed()) return run_bayes_command(bayes, common, out, err);
    if (suite_cmd->parsed()) return run_suite_command(suite, common, out, err);
    out << render_report(bundle);
    return kOk;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  }
}

}  // namespace treepop::cli
