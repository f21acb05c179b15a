#include "yaml_util.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace treepop::yaml {

void Reader::fail(const YAML::Node& at, const std::string& message) const {
  const auto mark = at.Mark();
  if (mark.is_null()) throw ParseError(message, 0, 0);
  throw ParseError(message, mark.line + 1, mark.column + 1);
}

void Reader::expect_map(const YAML::Node& node, std::string_view what) const {
  if (!node.IsMap()) fail(node, fmt::format("{} must be a mapping", what));
}

void Reader::expect_sequence(const YAML::Node& node, std::string_view what) const {
  if (!node.IsSequence()) fail(node, fmt::format("{} must be a list", what));
}

void Reader::check_keys(const YAML::Node& node, std::initializer_list<std::string_view> allowed,
                        std::string_view what) {
  expect_map(node, what);
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (std::find(allowed.begin(), allowed.end(), key) != allowed.end()) continue;
    const auto mark = kv.first.Mark();
    const auto message = fmt::format("unknown field '{}' in {}", key, what);
    if (strict_) throw ParseError(message, mark.line + 1, mark.column + 1);
    warnings_.push_back(fmt::format("line {}, column {}: {}", mark.line + 1, mark.column + 1, message));
  }
}

YAML::Node Reader::require(const YAML::Node& map, const char* key) const {
  auto child = map[key];
  if (!child.IsDefined() || child.IsNull()) fail(map, fmt::format("missing field '{}'", key));
  return child;
}

std::int64_t Reader::as_int(const YAML::Node& node, std::string_view what) const {
  if (node.IsScalar()) {
    try {
      return node.as<long long>();
    } catch (const YAML::BadConversion&) {
    }
  }
  fail(node, fmt::format("{} must be an integer", what));
}

double Reader::as_double(const YAML::Node& node, std::string_view what) const {
  if (node.IsScalar()) {
    try {
      const double v = node.as<double>();
      if (std::isfinite(v)) return v;
    } catch (const YAML::BadConversion&) {
    }
  }
  fail(node, fmt::format("{} must be a finite number", what));
}

bool Reader::as_bool(const YAML::Node& node, std::string_view what) const {
  if (node.IsScalar()) {
    try {
      return node.as<bool>();
    } catch (const YAML::BadConversion&) {
    }
  }
  fail(node, fmt::format("{} must be true or false", what));
}

std::string Reader::as_string(const YAML::Node& node, std::string_view what) const {
  if (!node.IsScalar()) fail(node, fmt::format("{} must be a string", what));
  return node.as<std::string>();
}

NodeId Reader::as_id(const YAML::Node& node, std::string_view what) const {
  auto s = as_string(node, what);
  if (s.empty()) fail(node, fmt::format("{} must not be empty", what));
  return NodeId(std::move(s));
}

std::vector<NodeId> Reader::as_ids(const YAML::Node& node, std::string_view what) const {
  expect_sequence(node, what);
  std::vector<NodeId> out;
  for (const auto& item : node) out.push_back(as_id(item, what));
  return out;
}

std::vector<double> Reader::as_doubles(const YAML::Node& node, std::string_view what) const {
  expect_sequence(node, what);
  std::vector<double> out;
  for (const auto& item : node) out.push_back(as_double(item, what));
  return out;
}

std::vector<std::int64_t> Reader::as_ints(const YAML::Node& node, std::string_view what) const {
  expect_sequence(node, what);
  std::vector<std::int64_t> out;
  for (const auto& item : node) out.push_back(as_int(item, what));
  return out;
}

namespace {

constexpr std::string_view kSpecKeys[] = {"dirichlet_survey", "beta_surveys", "dirichlet_prior", "fixed"};

}  // namespace

bool Reader::has_branch_spec(const YAML::Node& group) const {
  return std::any_of(std::begin(kSpecKeys), std::end(kSpecKeys),
                     [&](std::string_view k) { return group[std::string(k)].IsDefined(); });
}

BranchSpec Reader::branch_spec(const YAML::Node& group, const std::vector<NodeId>& children) {
  int found = 0;
  for (auto k : kSpecKeys) found += group[std::string(k)].IsDefined() ? 1 : 0;
  if (found != 1) {
    fail(group, "branch group needs exactly one of dirichlet_survey, beta_surveys, dirichlet_prior, fixed");
  }
  if (auto s = group["dirichlet_survey"]; s.IsDefined()) {
    check_keys(s, {"counts", "total"}, "dirichlet_survey");
    return DirichletSurvey{as_ints(require(s, "counts"), "survey counts"), as_int(require(s, "total"), "survey total")};
  }
  if (auto s = group["beta_surveys"]; s.IsDefined()) {
    expect_sequence(s, "beta_surveys");
    BetaSurveyPerChild spec;
    spec.per_child.assign(children.size(), std::nullopt);
    for (const auto& item : s) {
      check_keys(item, {"child", "x", "n"}, "beta survey");
      const auto child = as_id(require(item, "child"), "survey child");
      auto it = std::find(children.begin(), children.end(), child);
      if (it == children.end()) fail(item, fmt::format("survey child '{}' is not in the group", child.str()));
      auto& slot = spec.per_child[static_cast<std::size_t>(it - children.begin())];
      if (slot) fail(item, fmt::format("child '{}' has two surveys", child.str()));
      slot = SurveyCount{as_int(require(item, "x"), "survey x"), as_int(require(item, "n"), "survey n")};
    }
    return spec;
  }
  if (auto s = group["dirichlet_prior"]; s.IsDefined()) return DirichletPrior{as_doubles(s, "concentration")};
  return FixedProbabilities{as_doubles(group["fixed"], "probabilities")};
}

RootPrior Reader::root_prior(const YAML::Node& node) {
  check_keys(node, {"lognormal", "uniform", "lognormal_bounds"}, "root prior");
  if (node.size() != 1) fail(node, "root prior needs exactly one of lognormal, uniform, lognormal_bounds");
  try {
    if (auto s = node["lognormal"]; s.IsDefined()) {
      check_keys(s, {"log_mean", "median", "log_sd"}, "lognormal prior");
      const bool has_mean = s["log_mean"].IsDefined();
      if (has_mean == s["median"].IsDefined()) fail(s, "lognormal prior needs exactly one of log_mean, median");
      const double mu = has_mean ? as_double(s["log_mean"], "log_mean") : std::log(as_double(s["median"], "median"));
      return RootPrior::lognormal(mu, as_double(require(s, "log_sd"), "log_sd"));
    }
    if (auto s = node["uniform"]; s.IsDefined()) {
      check_keys(s, {"lower", "upper"}, "uniform prior");
      return RootPrior::uniform(as_int(require(s, "lower"), "lower"), as_int(require(s, "upper"), "upper"));
    }
    auto s = node["lognormal_bounds"];
    check_keys(s, {"lower", "upper", "center", "mass"}, "lognormal_bounds prior");
    return lognormal_from_bounds(as_double(require(s, "lower"), "lower"), as_double(require(s, "upper"), "upper"),
                                 as_double(require(s, "center"), "center"), as_double(require(s, "mass"), "mass"));
  } catch (const ParseError&) {
    throw;
  } catch (const ModelError& e) {
    fail(node, e.what());
  }
}

GroupPrior Reader::group_prior(const YAML::Node& node) {
  check_keys(node, {"name", "parent", "order", "concentration", "uncertainty"}, "group prior");
  GroupPrior g;
  g.parent = as_id(require(node, "parent"), "prior parent");
  g.name = node["name"].IsDefined() ? as_string(node["name"], "prior name") : g.parent.str();
  if (node["order"].IsDefined()) g.order = as_ids(node["order"], "prior order");
  g.concentration = as_doubles(require(node, "concentration"), "concentration");
  if (node["uncertainty"].IsDefined()) g.uncertainty = as_id(node["uncertainty"], "uncertainty leaf");
  return g;
}

BayesPriors Reader::priors(const YAML::Node& node) {
  check_keys(node, {"root", "groups"}, "priors");
  BayesPriors out;
  out.root = root_prior(require(node, "root"));
  if (auto groups = node["groups"]; groups.IsDefined()) {
    expect_sequence(groups, "prior groups");
    for (const auto& g : groups) {
      auto prior = group_prior(g);
      for (const auto& existing : out.groups) {
        if (existing.parent == prior.parent) fail(g, fmt::format("two priors for group '{}'", prior.parent.str()));
        if (existing.name == prior.name) fail(g, fmt::format("two priors named '{}'", prior.name));
      }
      out.groups.push_back(std::move(prior));
    }
  }
  return out;
}

std::string number(double v) { return fmt::format("{}", v); }

namespace {

void emit_numbers(YAML::Emitter& out, const auto& values) {
  out << YAML::Flow << YAML::BeginSeq;
  for (auto v : values) {
    if constexpr (std::is_floating_point_v<std::decay_t<decltype(v)>>) {
      out << number(v);
    } else {
      out << v;
    }
  }
  out << YAML::EndSeq;
}

void emit_ids(YAML::Emitter& out, const std::vector<NodeId>& ids) {
  out << YAML::Flow << YAML::BeginSeq;
  for (const auto& id : ids) out << id.str();
  out << YAML::EndSeq;
}

}  // namespace

void emit_branch_spec(YAML::Emitter& out, const BranchGroupSpec& group) {
  if (const auto* s = std::get_if<DirichletSurvey>(&group.spec)) {
    out << YAML::Key << "dirichlet_survey" << YAML::Value << YAML::Flow << YAML::BeginMap;
    out << YAML::Key << "counts" << YAML::Value;
    emit_numbers(out, s->counts);
    out << YAML::Key << "total" << YAML::Value << s->total << YAML::EndMap;
  } else if (const auto* s = std::get_if<BetaSurveyPerChild>(&group.spec)) {
    out << YAML::Key << "beta_surveys" << YAML::Value << YAML::BeginSeq;
    for (std::size_t i = 0; i < s->per_child.size(); ++i) {
      if (!s->per_child[i]) continue;
      out << YAML::Flow << YAML::BeginMap << YAML::Key << "child" << YAML::Value << group.children.at(i).str()
          << YAML::Key << "x" << YAML::Value << s->per_child[i]->x << YAML::Key << "n" << YAML::Value
          << s->per_child[i]->n << YAML::EndMap;
    }
    out << YAML::EndSeq;
  } else if (const auto* s = std::get_if<DirichletPrior>(&group.spec)) {
    out << YAML::Key << "dirichlet_prior" << YAML::Value;
    emit_numbers(out, s->concentration);
  } else {
    out << YAML::Key << "fixed" << YAML::Value;
    emit_numbers(out, std::get<FixedProbabilities>(group.spec).probabilities);
  }
}

void emit_root_prior(YAML::Emitter& out, const RootPrior& prior) {
  out << YAML::BeginMap;
  if (prior.kind == RootPrior::Kind::lognormal) {
    out << YAML::Key << "lognormal" << YAML::Value << YAML::Flow << YAML::BeginMap << YAML::Key << "log_mean"
        << YAML::Value << number(prior.log_mean) << YAML::Key << "log_sd" << YAML::Value << number(prior.log_sd)
        << YAML::EndMap;
  } else {
    out << YAML::Key << "uniform" << YAML::Value << YAML::Flow << YAML::BeginMap << YAML::Key << "lower"
        << YAML::Value << prior.lower << YAML::Key << "upper" << YAML::Value << prior.upper << YAML::EndMap;
  }
  out << YAML::EndMap;
}

void emit_priors(YAML::Emitter& out, const BayesPriors& priors) {
  out << YAML::BeginMap;
  out << YAML::Key << "root" << YAML::Value;
  emit_root_prior(out, priors.root);
  out << YAML::Key << "groups" << YAML::Value << YAML::BeginSeq;
  for (const auto& g : priors.groups) {
    out << YAML::Flow << YAML::BeginMap;
    out << YAML::Key << "name" << YAML::Value << g.name;
    out << YAML::Key << "parent" << YAML::Value << g.parent.str();
    if (!g.order.empty()) {
      out << YAML::Key << "order" << YAML::Value;
      emit_ids(out, g.order);
    }
    out << YAML::Key << "concentration" << YAML::Value;
    emit_numbers(out, g.concentration);
    if (g.uncertainty) out << YAML::Key << "uncertainty" << YAML::Value << g.uncertainty->str();
    out << YAML::EndMap;
  }
  out << YAML::EndSeq << YAML::EndMap;
}

}  // namespace treepop::yaml
