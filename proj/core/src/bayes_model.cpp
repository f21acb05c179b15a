#include "treepop/bayes_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/tools/roots.hpp>
#include <fmt/format.h>

#include "treepop/error.hpp"
#include "treepop/samplers.hpp"

namespace treepop {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

}  // namespace

RootPrior RootPrior::lognormal(double log_mean, double log_sd) {
  RootPrior p;
  p.kind = Kind::lognormal;
  p.log_mean = log_mean;
  p.log_sd = log_sd;
  p.check();
  return p;
}

RootPrior RootPrior::uniform(std::int64_t lower, std::int64_t upper) {
  RootPrior p;
  p.kind = Kind::uniform;
  p.lower = lower;
  p.upper = upper;
  p.check();
  return p;
}

void RootPrior::check() const {
  if (kind == Kind::lognormal) {
    if (!(log_sd > 0.0) || !std::isfinite(log_sd) || !std::isfinite(log_mean)) {
      throw ModelError(fmt::format("lognormal root prior needs a finite log_sd > 0 (got {})", log_sd));
    }
  } else if (!(lower >= 0 && lower < upper)) {
    throw ModelError(fmt::format("uniform root prior needs 0 <= lower < upper (got {}, {})", lower, upper));
  }
}

double RootPrior::log_density(std::int64_t z) const {
  if (kind == Kind::uniform) {
    if (z < lower || z > upper) return kNegInf;
    return -std::log(static_cast<double>(upper - lower + 1));
  }
  if (z <= 0) return kNegInf;
  const double lz = std::log(static_cast<double>(z));
  const double u = (lz - log_mean) / log_sd;
  return -lz - std::log(log_sd) - 0.5 * std::log(2.0 * M_PI) - 0.5 * u * u;
}

std::int64_t RootPrior::center() const {
  if (kind == Kind::uniform) return lower + (upper - lower) / 2;
  return std::max<std::int64_t>(1, std::llround(std::exp(log_mean)));
}

double RootPrior::mean() const {
  if (kind == Kind::uniform) return 0.5 * static_cast<double>(lower + upper);
  return std::exp(log_mean + 0.5 * log_sd * log_sd);
}

double RootPrior::sd() const {
  if (kind == Kind::uniform) {
    const double width = static_cast<double>(upper - lower + 1);
    return std::sqrt((width * width - 1.0) / 12.0);
  }
  return mean() * std::sqrt(std::expm1(log_sd * log_sd));
}

RootPrior lognormal_from_bounds(double lower, double upper, double center, double mass) {
  if (!(lower > 0.0 && lower < center && center < upper)) {
    throw ModelError("lognormal bounds need 0 < lower < center < upper");
  }
  if (!(mass > 0.0 && mass < 1.0)) throw ModelError("interval mass must lie in (0, 1)");
  const double mu = std::log(center);
  const boost::math::normal std_normal;
  auto excess = [&](double sigma) {
    return boost::math::cdf(std_normal, (std::log(upper) - mu) / sigma) -
           boost::math::cdf(std_normal, (std::log(lower) - mu) / sigma) - mass;
  };
  double lo = 1e-6;
  double hi = 100.0;
  if (excess(lo) < 0.0 || excess(hi) > 0.0) throw ModelError("no lognormal matches the requested interval mass");
  boost::math::tools::eps_tolerance<double> tol(50);
  std::uintmax_t max_iter = 200;
  const auto [a, b] = boost::math::tools::toms748_solve(excess, lo, hi, tol, max_iter);
  return RootPrior::lognormal(mu, 0.5 * (a + b));
}

const GroupPrior* BayesPriors::find(const NodeId& parent) const {
  auto it = std::find_if(groups.begin(), groups.end(), [&](const GroupPrior& g) { return g.parent == parent; });
  return it == groups.end() ? nullptr : &*it;
}

GroupPrior* BayesPriors::find_by_name(const std::string& name) {
  auto it = std::find_if(groups.begin(), groups.end(), [&](const GroupPrior& g) { return g.name == name; });
  return it == groups.end() ? nullptr : &*it;
}

namespace {

// Concentration order of a prior against the group's children.
struct ResolvedPrior {
  std::vector<NodeId> order;
  std::optional<NodeId> uncertainty;
};

ResolvedPrior resolve_order(const GroupPrior& prior, const std::vector<NodeId>& children) {
  const auto k = children.size();
  const auto d = prior.concentration.size();
  const auto where = fmt::format("prior '{}' on group '{}'", prior.name, prior.parent.str());
  if (d != k && d != k + 1) {
    throw ModelError(fmt::format("{} has {} components for {} children", where, d, k));
  }
  ResolvedPrior out;
  if (!prior.order.empty()) {
    if (prior.order.size() != d) {
      throw ModelError(fmt::format("{} lists {} children for {} components", where, prior.order.size(), d));
    }
    out.order = prior.order;
    for (const auto& c : children) {
      if (std::count(out.order.begin(), out.order.end(), c) != 1) {
        throw ModelError(fmt::format("{} must list child '{}' exactly once", where, c.str()));
      }
    }
    if (d == k + 1) {
      for (const auto& c : out.order) {
        if (std::find(children.begin(), children.end(), c) == children.end()) out.uncertainty = c;
      }
      if (prior.uncertainty && prior.uncertainty != out.uncertainty) {
        throw ModelError(fmt::format("{} names two different uncertainty leaves", where));
      }
    }
    return out;
  }
  out.order = children;
  if (d == k + 1) {
    out.uncertainty = prior.uncertainty.value_or(NodeId(prior.parent.str() + "_unc"));
    out.order.push_back(*out.uncertainty);
  }
  return out;
}

}  // namespace

BayesPriors aggregate_priors(const BayesPriors& priors, const EvidenceTree& tree,
                             const std::vector<SiblingMerge>& merges) {
  BayesPriors out = priors;
  for (const auto& m : merges) {
    auto it = std::find_if(out.groups.begin(), out.groups.end(), [&](const GroupPrior& g) { return g.parent == m.parent; });
    if (it == out.groups.end()) continue;
    if (it->order.empty()) {
      const auto* group = tree.group_for(m.parent);
      if (!group) throw DataError(fmt::format("no branch group at '{}'", m.parent.str()));
      auto resolved = resolve_order(*it, group->children);
      it->order = resolved.order;
      it->uncertainty = resolved.uncertainty;
    }
    std::vector<NodeId> order;
    std::vector<double> conc;
    bool placed = false;
    for (std::size_t i = 0; i < it->order.size(); ++i) {
      const auto& c = it->order[i];
      if (std::find(m.members.begin(), m.members.end(), c) == m.members.end()) {
        order.push_back(c);
        conc.push_back(it->concentration[i]);
        continue;
      }
      if (!placed) {
        order.push_back(m.merged);
        conc.push_back(0.0);
        placed = true;
      }
      conc[static_cast<std::size_t>(std::find(order.begin(), order.end(), m.merged) - order.begin())] +=
          it->concentration[i];
    }
    if (!placed) throw DataError(fmt::format("merge members not found in prior '{}'", it->name));
    it->order = std::move(order);
    it->concentration = std::move(conc);
  }
  return out;
}

std::size_t BayesModel::index_of(const NodeId& id) const {
  auto it = std::find(ids.begin(), ids.end(), id);
  if (it == ids.end()) throw ModelError(fmt::format("unknown node '{}'", id.str()));
  return static_cast<std::size_t>(it - ids.begin());
}

std::vector<NodeId> BayesModel::free_latent_ids() const {
  std::vector<NodeId> out;
  for (auto i : free_latents) out.push_back(ids[i]);
  return out;
}

BayesModel build_model(const EvidenceTree& tree, const BayesPriors& priors) {
  require_valid(tree);
  priors.root.check();
  for (const auto& gp : priors.groups) {
    if (!tree.group_for(gp.parent)) {
      throw ModelError(fmt::format("prior '{}' names '{}', which has no branch group", gp.name, gp.parent.str()));
    }
  }

  auto nodes = tree.nodes();
  auto edges = tree.edges();
  std::vector<BranchGroupSpec> groups;
  std::vector<std::string> names;
  std::vector<std::vector<NodeId>> orders;
  std::vector<std::vector<double>> alphas;

  for (const auto& g : tree.branch_groups()) {
    GroupPrior prior;
    if (const auto* gp = priors.find(g.parent)) {
      prior = *gp;
    } else if (const auto* dp = std::get_if<DirichletPrior>(&g.spec)) {
      prior = GroupPrior{g.parent, g.parent.str(), g.children, dp->concentration, std::nullopt};
    } else {
      throw ModelError(fmt::format("no Dirichlet prior for group '{}'", g.parent.str()));
    }
    for (double a : prior.concentration) {
      if (!(a > 0.0) || !std::isfinite(a)) {
        throw ModelError(fmt::format("prior '{}' on group '{}' has a nonpositive concentration", prior.name,
                                     g.parent.str()));
      }
    }
    auto resolved = resolve_order(prior, g.children);
    auto children = g.children;
    if (resolved.uncertainty) {
      const auto& u = *resolved.uncertainty;
      if (tree.contains(u) || std::any_of(nodes.begin(), nodes.end(), [&](const NodeRecord& n) { return n.id == u; })) {
        throw ModelError(fmt::format("uncertainty leaf '{}' of group '{}' clashes with an existing node", u.str(),
                                     g.parent.str()));
      }
      nodes.push_back(NodeRecord{u, NodeRole::uncertainty_leaf, std::nullopt,
                                 fmt::format("events under {} missed by every source", g.parent.str())});
      edges.push_back(Edge{g.parent, u});
      children.push_back(u);
    }
    std::vector<double> tree_order_alpha;
    for (const auto& c : children) {
      auto pos = std::find(resolved.order.begin(), resolved.order.end(), c) - resolved.order.begin();
      tree_order_alpha.push_back(prior.concentration[static_cast<std::size_t>(pos)]);
    }
    groups.push_back(BranchGroupSpec{g.parent, children, DirichletPrior{tree_order_alpha}});
    names.push_back(prior.name);
    orders.push_back(resolved.order);
    alphas.push_back(prior.concentration);
  }

  BayesModel model;
  model.tree = EvidenceTree(tree.name(), std::move(nodes), std::move(edges), std::move(groups));
  require_valid(model.tree);
  model.root_prior = priors.root;

  const auto& t = model.tree;
  const auto n = t.nodes().size();
  for (const auto& rec : t.nodes()) {
    model.ids.push_back(rec.id);
    model.observed.push_back(rec.observed_count);
  }
  model.parent.assign(n, -1);
  model.children.assign(n, {});
  model.group_of_parent.assign(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    if (auto p = t.parent_of(model.ids[i])) model.parent[i] = static_cast<std::ptrdiff_t>(model.index_of(*p));
  }
  for (const auto& e : t.edges()) model.children[model.index_of(e.parent)].push_back(model.index_of(e.child));
  model.root = model.index_of(t.root());
  if (model.children[model.root].empty()) throw ModelError("the root has no children");

  for (std::size_t g = 0; g < t.branch_groups().size(); ++g) {
    BayesModel::Group grp;
    grp.name = names[g];
    grp.parent = model.index_of(t.branch_groups()[g].parent);
    for (const auto& c : orders[g]) grp.children.push_back(model.index_of(c));
    grp.alpha = alphas[g];
    grp.alpha_sum = std::accumulate(grp.alpha.begin(), grp.alpha.end(), 0.0);
    grp.lgamma_alpha_sum = std::lgamma(grp.alpha_sum);
    grp.sum_lgamma_alpha = 0.0;
    for (double a : grp.alpha) grp.sum_lgamma_alpha += std::lgamma(a);
    model.group_of_parent[grp.parent] = static_cast<std::ptrdiff_t>(g);
    model.groups.push_back(std::move(grp));
  }

  // Children before parents.
  std::vector<std::pair<std::size_t, bool>> stack{{model.root, false}};
  while (!stack.empty()) {
    auto [v, expanded] = stack.back();
    stack.pop_back();
    if (expanded) {
      model.post_order.push_back(v);
      continue;
    }
    stack.push_back({v, true});
    for (auto it = model.children[v].rbegin(); it != model.children[v].rend(); ++it) stack.push_back({*it, false});
  }

  for (std::size_t i = 0; i < n; ++i) {
    if (model.children[i].empty() && !model.observed[i]) model.free_latents.push_back(i);
  }
  for (auto leaf : model.free_latents) {
    std::vector<std::size_t> affected;
    for (auto v = model.parent[leaf]; v >= 0; v = model.parent[static_cast<std::size_t>(v)]) {
      affected.push_back(static_cast<std::size_t>(model.group_of_parent[static_cast<std::size_t>(v)]));
    }
    model.affected_groups.push_back(std::move(affected));
  }
  return model;
}

std::int64_t LatentState::count(const BayesModel& model, const NodeId& id) const {
  return counts.at(model.index_of(id));
}

void derive_counts(const BayesModel& model, LatentState& state) {
  for (auto v : model.post_order) {
    if (model.children[v].empty()) continue;
    std::int64_t sum = 0;
    for (auto c : model.children[v]) sum += state.counts[c];
    state.counts[v] = sum;
  }
}

namespace {

// Splits `total` over the subtree at v by prior means, largest remainders first.
void distribute(const BayesModel& model, std::size_t v, std::int64_t total, std::vector<std::int64_t>& counts) {
  counts[v] = total;
  const auto g = model.group_of_parent[v];
  if (g < 0) return;
  const auto& grp = model.groups[static_cast<std::size_t>(g)];
  std::vector<std::int64_t> share(grp.children.size());
  std::vector<std::pair<double, std::size_t>> remainder;
  std::int64_t used = 0;
  for (std::size_t i = 0; i < grp.children.size(); ++i) {
    const double exact = static_cast<double>(total) * grp.alpha[i] / grp.alpha_sum;
    share[i] = static_cast<std::int64_t>(std::floor(exact));
    used += share[i];
    remainder.push_back({exact - std::floor(exact), i});
  }
  std::stable_sort(remainder.begin(), remainder.end(), [](auto a, auto b) { return a.first > b.first; });
  for (std::size_t r = 0; used < total; ++r, ++used) ++share[remainder[r % remainder.size()].second];
  for (std::size_t i = 0; i < grp.children.size(); ++i) distribute(model, grp.children[i], share[i], counts);
}

}  // namespace

LatentState initial_state(const BayesModel& model) {
  const auto n = model.ids.size();
  LatentState state;
  state.counts.assign(n, 0);
  std::vector<bool> informed(n, false);

  for (auto v : model.post_order) {
    if (model.children[v].empty()) {
      if (model.observed[v]) {
        state.counts[v] = *model.observed[v];
        informed[v] = true;
      }
      continue;
    }
    const auto& grp = model.groups[static_cast<std::size_t>(model.group_of_parent[v])];
    double informed_alpha = 0.0;
    std::int64_t informed_sum = 0;
    for (std::size_t i = 0; i < grp.children.size(); ++i) {
      if (!informed[grp.children[i]]) continue;
      informed_alpha += grp.alpha[i];
      informed_sum += state.counts[grp.children[i]];
    }
    if (informed_alpha == 0.0) continue;
    for (std::size_t i = 0; i < grp.children.size(); ++i) {
      const auto c = grp.children[i];
      if (informed[c]) continue;
      const auto target = std::llround(grp.alpha[i] / informed_alpha * static_cast<double>(informed_sum));
      distribute(model, c, target, state.counts);
    }
    std::int64_t sum = 0;
    for (auto c : model.children[v]) sum += state.counts[c];
    state.counts[v] = sum;
    informed[v] = true;
  }
  if (!informed[model.root]) distribute(model, model.root, model.root_prior.center(), state.counts);
  derive_counts(model, state);

  for (const auto& grp : model.groups) {
    std::vector<double> mean;
    for (double a : grp.alpha) mean.push_back(a / grp.alpha_sum);
    state.branch_probs.push_back(std::move(mean));
  }
  return state;
}

double group_log_likelihood(const BayesModel& model, std::size_t g, const LatentState& state) {
  const auto& grp = model.groups[g];
  const auto& p = state.branch_probs[g];
  double out = std::lgamma(static_cast<double>(state.counts[grp.parent]) + 1.0);
  for (std::size_t i = 0; i < grp.children.size(); ++i) {
    const auto k = state.counts[grp.children[i]];
    if (k < 0) return kNegInf;
    out -= std::lgamma(static_cast<double>(k) + 1.0);
    if (k > 0) {
      if (!(p[i] > 0.0)) return kNegInf;
      out += static_cast<double>(k) * std::log(p[i]);
    }
  }
  return out;
}

double group_log_marginal(const BayesModel& model, std::size_t g, const std::vector<std::int64_t>& counts) {
  const auto& grp = model.groups[g];
  const double total = static_cast<double>(counts[grp.parent]);
  double out = std::lgamma(total + 1.0) + grp.lgamma_alpha_sum - std::lgamma(grp.alpha_sum + total) -
               grp.sum_lgamma_alpha;
  for (std::size_t i = 0; i < grp.children.size(); ++i) {
    const auto k = counts[grp.children[i]];
    if (k < 0) return kNegInf;
    const double kd = static_cast<double>(k);
    out += std::lgamma(grp.alpha[i] + kd) - std::lgamma(kd + 1.0);
  }
  return out;
}

namespace {

double dirichlet_log_density(const BayesModel::Group& grp, const std::vector<double>& p) {
  double out = grp.lgamma_alpha_sum - grp.sum_lgamma_alpha;
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] < 0.0) return kNegInf;
    sum += p[i];
    if (grp.alpha[i] != 1.0) out += (grp.alpha[i] - 1.0) * std::log(p[i]);
  }
  if (std::abs(sum - 1.0) > 1e-9) return kNegInf;
  return out;
}

bool counts_valid(const LatentState& state) {
  return std::all_of(state.counts.begin(), state.counts.end(), [](std::int64_t c) { return c >= 0; });
}

}  // namespace

double log_posterior(const BayesModel& model, const LatentState& state) {
  if (!counts_valid(state)) return kNegInf;
  double out = model.root_prior.log_density(state.counts[model.root]);
  for (std::size_t g = 0; g < model.groups.size(); ++g) {
    out += dirichlet_log_density(model.groups[g], state.branch_probs[g]);
    out += group_log_likelihood(model, g, state);
  }
  return std::isnan(out) ? kNegInf : out;
}

double collapsed_log_posterior(const BayesModel& model, const LatentState& state) {
  if (!counts_valid(state)) return kNegInf;
  double out = model.root_prior.log_density(state.counts[model.root]);
  for (std::size_t g = 0; g < model.groups.size(); ++g) out += group_log_marginal(model, g, state.counts);
  return std::isnan(out) ? kNegInf : out;
}

void gibbs_update_branch_probs(const BayesModel& model, LatentState& state, RngStream& rng) {
  std::vector<double> conc;
  for (std::size_t g = 0; g < model.groups.size(); ++g) {
    const auto& grp = model.groups[g];
    conc.resize(grp.children.size());
    for (std::size_t i = 0; i < grp.children.size(); ++i) {
      conc[i] = grp.alpha[i] + static_cast<double>(state.counts[grp.children[i]]);
    }
    state.branch_probs[g] = sample_dirichlet(conc, rng).probabilities;
  }
}

}  // namespace treepop
