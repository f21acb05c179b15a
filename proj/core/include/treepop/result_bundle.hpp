#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "treepop/bayes_sampler.hpp"
#include "treepop/experiments.hpp"
#include "treepop/wmm.hpp"

namespace treepop {

using MetaValue = std::variant<std::int64_t, std::uint64_t, double, bool, std::string>;
using MetaFields = std::vector<std::pair<std::string, MetaValue>>;

/// Contents of metadata.json. No timestamps or host details, so equal runs
/// give byte-identical bundles.
struct RunMetadata {
  std::string command;
  std::uint64_t seed = 0;
  std::string tree_name;
  std::string tree_digest;
  MetaFields config;
  MetaFields results;
};

struct BundleOptions {
  /// Write samples.csv.
  bool samples = false;
  /// Keep every n-th draw in samples.csv.
  std::int64_t sample_thin = 1;
  int histogram_bins = 50;
};

/// CSV numbers: 6 significant digits; NaN is written as an empty field.
std::string format_number(double v);
/// Inverse of format_number.
double parse_number(std::string_view text);

/// metadata.json, summary.csv (root and per-path rows), weights.csv,
/// histogram.csv and optionally samples.csv.
void write_wmm_bundle(const std::filesystem::path& dir, const WmmRun& run, const EvidenceTree& tree,
                      const RunMetadata& meta, const BundleOptions& options = {});

/// metadata.json, summary.csv, acf.csv, histogram.csv and optionally
/// samples.csv (chain, draw, quantity, value).
void write_bayes_bundle(const std::filesystem::path& dir, const PosteriorSummary& summary, const RunMetadata& meta,
                        const BundleOptions& options = {});

/// metadata.json, scenarios.csv, report.csv, expectations.csv and one
/// engine bundle per scenario in a subdirectory named after it.
void write_suite_bundle(const std::filesystem::path& dir, const ScenarioReport& report, const RunMetadata& meta,
                        const BundleOptions& options = {});

struct SummaryRow {
  std::string quantity;
  double mean = 0.0;
  double sd = 0.0;
  double q025 = 0.0;
  double median = 0.0;
  double q975 = 0.0;
  double ess = 0.0;
  double rhat = 0.0;
};

std::vector<SummaryRow> read_summary_csv(const std::filesystem::path& path);

/// Rows of a CSV file written by this library, header first.
std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path);

/// Human-readable text for a bundle directory, built from its CSV files.
std::string render_report(const std::filesystem::path& dir);

}  // namespace treepop
