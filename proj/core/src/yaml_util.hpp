#pragma once

// Checked access to yaml-cpp nodes shared by the tree and scenario parsers.

#include <cstdint>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "treepop/bayes_model.hpp"
#include "treepop/error.hpp"
#include "treepop/tree.hpp"

namespace treepop::yaml {

class Reader {
 public:
  explicit Reader(bool strict) : strict_{strict} {}

  [[noreturn]] void fail(const YAML::Node& at, const std::string& message) const;

  /// `node` must be a map whose keys all appear in `allowed`.
  void check_keys(const YAML::Node& node, std::initializer_list<std::string_view> allowed, std::string_view what);
  void expect_map(const YAML::Node& node, std::string_view what) const;
  void expect_sequence(const YAML::Node& node, std::string_view what) const;

  YAML::Node require(const YAML::Node& map, const char* key) const;

  std::int64_t as_int(const YAML::Node& node, std::string_view what) const;
  double as_double(const YAML::Node& node, std::string_view what) const;
  bool as_bool(const YAML::Node& node, std::string_view what) const;
  std::string as_string(const YAML::Node& node, std::string_view what) const;
  NodeId as_id(const YAML::Node& node, std::string_view what) const;
  std::vector<NodeId> as_ids(const YAML::Node& node, std::string_view what) const;
  std::vector<double> as_doubles(const YAML::Node& node, std::string_view what) const;
  std::vector<std::int64_t> as_ints(const YAML::Node& node, std::string_view what) const;

  /// The spec key of a branch-group map (one of dirichlet_survey,
  /// beta_surveys, dirichlet_prior, fixed), resolved against `children`.
  BranchSpec branch_spec(const YAML::Node& group, const std::vector<NodeId>& children);
  bool has_branch_spec(const YAML::Node& group) const;

  RootPrior root_prior(const YAML::Node& node);
  GroupPrior group_prior(const YAML::Node& node);
  BayesPriors priors(const YAML::Node& node);

  std::vector<std::string>& warnings() { return warnings_; }

 private:
  bool strict_;
  std::vector<std::string> warnings_;
};

/// Shortest round-trip text of a double.
std::string number(double v);

void emit_branch_spec(YAML::Emitter& out, const BranchGroupSpec& group);
void emit_root_prior(YAML::Emitter& out, const RootPrior& prior);
void emit_priors(YAML::Emitter& out, const BayesPriors& priors);

}  // namespace treepop::yaml
