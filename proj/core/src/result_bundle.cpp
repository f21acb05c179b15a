#include "treepop/result_bundle.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "treepop/error.hpp"
#include "treepop/weighted_stats.hpp"

namespace treepop {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

std::string format_number(double v) {
  if (std::isnan(v)) return {};
  return fmt::format("{:.6g}", v);
}

double parse_number(std::string_view text) {
  if (text.empty()) return std::numeric_limits<double>::quiet_NaN();
  try {
    std::size_t used = 0;
    const double v = std::stod(std::string(text), &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  throw DataError(fmt::format("'{}' is not a number", text));
}

namespace {

class CsvWriter {
 public:
  CsvWriter(const fs::path& path, std::span<const std::string_view> header) : out_(path, std::ios::binary) {
    if (!out_) throw DataError(fmt::format("cannot write '{}'", path.string()));
    row(header);
  }

  CsvWriter(const fs::path& path, std::initializer_list<std::string_view> header)
      : CsvWriter(path, std::span<const std::string_view>(header.begin(), header.size())) {}

  template <class Range>
  void row(const Range& fields) {
    bool first = true;
    for (const auto& f : fields) {
      if (!first) out_ << ',';
      out_ << f;
      first = false;
    }
    out_ << '\n';
  }

  void row(std::initializer_list<std::string_view> fields) { row<std::initializer_list<std::string_view>>(fields); }

 private:
  std::ofstream out_;
};

ojson to_json(const MetaValue& v) {
  return std::visit([](const auto& x) { return ojson(x); }, v);
}

void write_metadata(const fs::path& dir, const RunMetadata& meta) {
  ojson doc;
  doc["tool"] = "treepop";
  doc["version"] = TREEPOP_VERSION;
  doc["command"] = meta.command;
  doc["seed"] = meta.seed;
  doc["tree"] = {{"name", meta.tree_name}, {"digest", meta.tree_digest}};
  ojson config = ojson::object();
  for (const auto& [k, v] : meta.config) config[k] = to_json(v);
  doc["config"] = config;
  ojson results = ojson::object();
  for (const auto& [k, v] : meta.results) results[k] = to_json(v);
  doc["results"] = results;
  std::ofstream out(dir / "metadata.json", std::ios::binary);
  if (!out) throw DataError(fmt::format("cannot write '{}'", (dir / "metadata.json").string()));
  out << doc.dump(2) << '\n';
}

void prepare_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError(fmt::format("cannot create '{}': {}", dir.string(), ec.message()));
}

std::vector<std::string> summary_fields(const std::string& name, double mean, double sd, double q025, double median,
                                        double q975, double ess, double rhat) {
  return {name, format_number(mean), format_number(sd), format_number(q025), format_number(median),
          format_number(q975), format_number(ess), format_number(rhat)};
}

constexpr std::array<std::string_view, 8> kSummaryHeader = {"quantity", "mean",  "sd",  "q2.5",
                                                         "median",   "q97.5", "ess", "rhat"};

void write_histogram_rows(CsvWriter& csv, const std::string& name, const Histogram& h) {
  for (std::size_t b = 0; b < h.counts.size(); ++b) {
    csv.row(std::vector<std::string>{name, format_number(h.edges[b]), format_number(h.edges[b + 1]),
                                     format_number(h.counts[b])});
  }
}

}  // namespace

void write_wmm_bundle(const fs::path& dir, const WmmRun& run, const EvidenceTree& tree, const RunMetadata& meta,
                      const BundleOptions& options) {
  prepare_dir(dir);
  write_metadata(dir, meta);
  const auto root = tree.root().str();
  const bool weighted = std::any_of(run.importance_weights.begin(), run.importance_weights.end(),
                                    [](double w) { return w != 1.0; });
  const std::span<const double> iw = weighted ? std::span<const double>(run.importance_weights) : std::span<const double>{};
  const double nan = std::numeric_limits<double>::quiet_NaN();

  {
    CsvWriter csv(dir / "summary.csv", kSummaryHeader);
    const auto& x = run.combined_samples;
    csv.row(summary_fields(root, run.mean, run.sd, weighted_quantile(x, 0.025, iw), run.median,
                           weighted_quantile(x, 0.975, iw), nan, nan));
    for (std::size_t i = 0; i < run.paths.size(); ++i) {
      const Eigen::VectorXd col = run.path_estimates.col(static_cast<Eigen::Index>(i));
      std::span<const double> v(col.data(), static_cast<std::size_t>(col.size()));
      csv.row(summary_fields("path_" + run.paths[i].leaf.str(), weighted_mean(v, iw),
                             std::sqrt(weighted_variance(v, iw)), weighted_quantile(v, 0.025, iw),
                             weighted_quantile(v, 0.5, iw), weighted_quantile(v, 0.975, iw), nan, nan));
    }
  }
  {
    CsvWriter csv(dir / "weights.csv", {"leaf", "weight"});
    for (const auto& w : path_weight_report(run, tree)) {
      csv.row(std::vector<std::string>{w.leaf.str(), format_number(w.weight)});
    }
  }
  {
    CsvWriter csv(dir / "histogram.csv", {"quantity", "lo", "hi", "count"});
    write_histogram_rows(csv, root, histogram(run.combined_samples, options.histogram_bins, iw));
  }
  if (options.samples) {
    CsvWriter csv(dir / "samples.csv", {"iteration", "quantity", "value"});
    const auto step = static_cast<std::size_t>(std::max<std::int64_t>(1, options.sample_thin));
    for (std::size_t m = 0; m < run.combined_samples.size(); m += step) {
      const auto it = std::to_string(m);
      csv.row(std::vector<std::string>{it, root, format_number(run.combined_samples[m])});
      for (std::size_t i = 0; i < run.paths.size(); ++i) {
        csv.row(std::vector<std::string>{it, "path_" + run.paths[i].leaf.str(),
                                         format_number(run.path_estimates(static_cast<Eigen::Index>(m),
                                                                          static_cast<Eigen::Index>(i)))});
      }
    }
  }
}

void write_bayes_bundle(const fs::path& dir, const PosteriorSummary& summary, const RunMetadata& meta,
                        const BundleOptions& options) {
  prepare_dir(dir);
  write_metadata(dir, meta);
  {
    CsvWriter csv(dir / "summary.csv", kSummaryHeader);
    for (const auto& q : summary.quantities) {
      csv.row(summary_fields(q.name, q.mean, q.sd, q.q025, q.median, q.q975, q.ess, q.rhat));
    }
  }
  {
    CsvWriter csv(dir / "acf.csv", {"quantity", "lag", "acf"});
    for (const auto& q : summary.quantities) {
      for (std::size_t lag = 0; lag < q.acf.size(); ++lag) {
        csv.row(std::vector<std::string>{q.name, std::to_string(lag), format_number(q.acf[lag])});
      }
    }
  }
  {
    CsvWriter csv(dir / "histogram.csv", {"quantity", "lo", "hi", "count"});
    for (std::size_t qi = 0; qi < summary.quantities.size(); ++qi) {
      std::vector<double> pooled;
      for (const auto& chain : summary.traces[qi]) pooled.insert(pooled.end(), chain.begin(), chain.end());
      write_histogram_rows(csv, summary.quantities[qi].name, histogram(pooled, options.histogram_bins));
    }
  }
  if (options.samples) {
    CsvWriter csv(dir / "samples.csv", {"chain", "draw", "quantity", "value"});
    const auto step = static_cast<std::size_t>(std::max<std::int64_t>(1, options.sample_thin));
    for (std::size_t c = 0; c < summary.traces.front().size(); ++c) {
      for (std::size_t d = 0; d < summary.traces.front()[c].size(); d += step) {
        for (std::size_t qi = 0; qi < summary.quantities.size(); ++qi) {
          csv.row(std::vector<std::string>{std::to_string(c), std::to_string(d), summary.quantities[qi].name,
                                           format_number(summary.traces[qi][c][d])});
        }
      }
    }
  }
}

void write_suite_bundle(const fs::path& dir, const ScenarioReport& report, const RunMetadata& meta,
                        const BundleOptions& options) {
  prepare_dir(dir);
  write_metadata(dir, meta);
  {
    CsvWriter csv(dir / "scenarios.csv",
                  {"scenario", "engine", "seed", "baseline", "tree_digest", "max_rhat", "min_ess", "flagged"});
    for (const auto& s : report.scenarios) {
      csv.row(std::vector<std::string>{s.name, std::string(to_string(s.engine)), std::to_string(s.seed), s.baseline,
                                       s.tree_digest, format_number(s.max_rhat), format_number(s.min_ess),
                                       s.flagged ? "true" : "false"});
    }
  }
  {
    CsvWriter csv(dir / "report.csv", {"scenario", "quantity", "mean", "q2.5", "q97.5", "delta"});
    for (const auto& s : report.scenarios) {
      for (const auto& q : s.estimates) {
        csv.row(std::vector<std::string>{s.name, q.name, format_number(q.mean), format_number(q.lo),
                                         format_number(q.hi), format_number(q.delta)});
      }
    }
  }
  {
    CsvWriter csv(dir / "expectations.csv", {"scenario", "expectation", "observed", "passed"});
    for (const auto& s : report.scenarios) {
      for (const auto& e : s.expectations) {
        csv.row(std::vector<std::string>{s.name, e.description, format_number(e.observed),
                                         e.passed ? "true" : "false"});
      }
    }
  }
  for (const auto& s : report.scenarios) {
    RunMetadata sub;
    sub.command = std::string(to_string(s.engine));
    sub.seed = s.seed;
    sub.tree_name = s.tree.name();
    sub.tree_digest = s.tree_digest;
    sub.config = {{"scenario", s.name}, {"baseline", s.baseline}};
    if (s.wmm_run) write_wmm_bundle(dir / s.name, *s.wmm_run, s.tree, sub, options);
    if (s.posterior) write_bayes_bundle(dir / s.name, *s.posterior, sub, options);
  }
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot read '{}'", path.string()));
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    rows.push_back(std::move(fields));
  }
  return rows;
}

std::vector<SummaryRow> read_summary_csv(const fs::path& path) {
  const auto rows = read_csv(path);
  if (rows.empty() || rows.front().size() != kSummaryHeader.size()) {
    throw DataError(fmt::format("'{}' is not a summary table", path.string()));
  }
  std::vector<SummaryRow> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() != kSummaryHeader.size()) throw DataError(fmt::format("{}: row {} is malformed", path.string(), i + 1));
    out.push_back(SummaryRow{r[0], parse_number(r[1]), parse_number(r[2]), parse_number(r[3]), parse_number(r[4]),
                             parse_number(r[5]), parse_number(r[6]), parse_number(r[7])});
  }
  return out;
}

std::string render_report(const fs::path& dir) {
  std::string out;
  ojson meta;
  if (std::ifstream in(dir / "metadata.json"); in) {
    try {
      meta = ojson::parse(in);
    } catch (const ojson::parse_error& e) {
      throw DataError(fmt::format("{}: {}", (dir / "metadata.json").string(), e.what()));
    }
    out += fmt::format("{} run, seed {}, tree '{}' ({})\n", meta.value("command", "?"), meta.value("seed", 0ull),
                       meta["tree"].value("name", "?"), meta["tree"].value("digest", "?").substr(0, 12));
  }
  auto num = [](double v) { return std::isnan(v) ? std::string("-") : fmt::format("{:.6g}", v); };

  if (fs::exists(dir / "report.csv")) {
    const auto rows = read_csv(dir / "report.csv");
    out += fmt::format("{:<24} {:<8} {:>12} {:>12} {:>12} {:>9}\n", "scenario", "quantity", "mean", "q2.5", "q97.5",
                       "delta");
    for (std::size_t i = 1; i < rows.size(); ++i) {
      const auto& r = rows[i];
      if (r.size() != 6) throw DataError(fmt::format("report.csv row {} is malformed", i + 1));
      const double delta = parse_number(r[5]);
      out += fmt::format("{:<24} {:<8} {:>12} {:>12} {:>12} {:>9}\n", r[0], r[1], num(parse_number(r[2])),
                         num(parse_number(r[3])), num(parse_number(r[4])),
                         std::isnan(delta) ? std::string("-") : fmt::format("{:+.2f}%", 100.0 * delta));
    }
    if (fs::exists(dir / "expectations.csv")) {
      const auto exp = read_csv(dir / "expectations.csv");
      if (exp.size() > 1) out += "\nexpectations\n";
      for (std::size_t i = 1; i < exp.size(); ++i) {
        const auto& r = exp[i];
        if (r.size() != 4) throw DataError(fmt::format("expectations.csv row {} is malformed", i + 1));
        out += fmt::format("  [{}] {}: {} (observed {})\n", r[3] == "true" ? "pass" : "FAIL", r[0], r[1],
                           num(parse_number(r[2])));
      }
    }
    if (fs::exists(dir / "scenarios.csv")) {
      for (const auto& r : read_csv(dir / "scenarios.csv")) {
        if (r.size() == 8 && r[7] == "true") {
          out += fmt::format("  convergence flag: {} (max R-hat {}, min ESS {})\n", r[0], r[5], r[6]);
        }
      }
    }
    return out;
  }

  if (!fs::exists(dir / "summary.csv")) throw DataError(fmt::format("'{}' holds no result bundle", dir.string()));
  out += fmt::format("{:<10} {:>12} {:>12} {:>12} {:>12} {:>12} {:>9} {:>7}\n", "quantity", "mean", "sd", "q2.5",
                     "median", "q97.5", "ess", "rhat");
  for (const auto& r : read_summary_csv(dir / "summary.csv")) {
    out += fmt::format("{:<10} {:>12} {:>12} {:>12} {:>12} {:>12} {:>9} {:>7}\n", r.quantity, num(r.mean), num(r.sd),
                       num(r.q025), num(r.median), num(r.q975), num(r.ess), num(r.rhat));
  }
  if (fs::exists(dir / "weights.csv")) {
    out += "\npath weights\n";
    const auto rows = read_csv(dir / "weights.csv");
    for (std::size_t i = 1; i < rows.size(); ++i) {
      if (rows[i].size() != 2) throw DataError(fmt::format("weights.csv row {} is malformed", i + 1));
      out += fmt::format("  {:<6} {:>9}\n", rows[i][0], num(parse_number(rows[i][1])));
    }
  }
  return out;
}

}  // namespace treepop
