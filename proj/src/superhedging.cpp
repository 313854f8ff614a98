#include "nccm/superhedging.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "nccm/error.hpp"
#include "nccm/extended.hpp"

namespace nccm {

namespace {

constexpr double kTieTol = 1e-12;

bool better_min(double v, double best) {
  if (!std::isfinite(v) || !std::isfinite(best)) return v < best;
  return v < best - kTieTol * (1.0 + std::abs(best));
}

// Gain counts against the claim; -inf gains make the branch unhedgeable.
double hedge_cost(double claim, double gain) {
  if (ext::is_neg_inf(gain)) return ext::kPosInf;
  return claim - gain;
}

void check_grids(const ScenarioTree& tree, const NodeGrids& grids, int dim) {
  require(grids.size() == tree.num_decision_nodes(), ErrorCode::kInvalidGrid, "one grid per decision node required");
  for (const auto& g : grids) {
    require(!g.empty(), ErrorCode::kInvalidGrid, "empty node grid");
    for (const auto& v : g) {
      require(v.size() == static_cast<std::size_t>(dim), ErrorCode::kInvalidGrid, "grid point has wrong dimension");
    }
  }
}

struct Solution {
  double price = 0.0;
  AdaptedStrategy witness;
  std::uint64_t evaluations = 0;
  std::string method;
};

Solution solve_additive(const MarketModel& model, std::span<const double> f, const NodeGrids& grids,
                        std::uint64_t budget) {
  const auto& tree = model.tree();
  const auto d = static_cast<std::size_t>(model.dim());
  std::uint64_t work = 0;
  for (int n : tree.decision_nodes()) {
    const auto& nd = tree.node(n);
    std::uint64_t prev = nd.parent < 0 ? 1 : grids[static_cast<std::size_t>(tree.node(nd.parent).decision_index)].size();
    work += prev * grids[static_cast<std::size_t>(nd.decision_index)].size() * nd.children.size();
  }
  require(work <= budget, ErrorCode::kBudgetExceeded,
          "additive DP needs " + std::to_string(work) + " step evaluations, budget " + std::to_string(budget));

  const std::vector<double> zero(d, 0.0);
  // value[node][prev index]; leaves hold a single entry.
  std::vector<std::vector<double>> value(tree.num_nodes());
  std::vector<std::vector<std::size_t>> arg(tree.num_nodes());
  for (std::size_t l = 0; l < tree.num_leaves(); ++l) value[static_cast<std::size_t>(tree.leaves()[l])] = {f[l]};

  const auto& order = tree.decision_nodes();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const int n = *it;
    const auto& nd = tree.node(n);
    const auto& grid = grids[static_cast<std::size_t>(nd.decision_index)];
    const std::vector<std::vector<double>>* prev_grid = nullptr;
    if (nd.parent >= 0) prev_grid = &grids[static_cast<std::size_t>(tree.node(nd.parent).decision_index)];
    const std::size_t np = prev_grid ? prev_grid->size() : 1;
    auto& out = value[static_cast<std::size_t>(n)];
    auto& am = arg[static_cast<std::size_t>(n)];
    out.assign(np, ext::kPosInf);
    am.assign(np, 0);
    for (std::size_t p = 0; p < np; ++p) {
      std::span<const double> prev = prev_grid ? std::span<const double>((*prev_grid)[p]) : std::span<const double>(zero);
      double best = ext::kPosInf;
      std::size_t best_i = 0;
      for (std::size_t i = 0; i < grid.size(); ++i) {
        double worst = ext::kNegInf;
        for (int c : nd.children) {
          const auto& cv = value[static_cast<std::size_t>(c)];
          double w = tree.node(c).leaf_index >= 0 ? cv[0] : cv[i];
          worst = std::max(worst, hedge_cost(w, model.step_gain(n, c, prev, grid[i])));
        }
        if (i == 0 || better_min(worst, best)) {
          best = worst;
          best_i = i;
        }
      }
      out[p] = best;
      am[p] = best_i;
    }
  }

  Solution sol;
  sol.method = "additive-dp";
  sol.evaluations = work;
  sol.price = value[0][0];
  sol.witness = AdaptedStrategy(tree, model.dim());
  std::vector<std::size_t> chosen(tree.num_nodes(), 0);
  for (int n : order) {
    const auto& nd = tree.node(n);
    std::size_t p = nd.parent < 0 ? 0 : chosen[static_cast<std::size_t>(nd.parent)];
    std::size_t i = arg[static_cast<std::size_t>(n)][p];
    chosen[static_cast<std::size_t>(n)] = i;
    const auto& v = grids[static_cast<std::size_t>(nd.decision_index)][i];
    std::copy(v.begin(), v.end(), sol.witness.at_decision(static_cast<std::size_t>(nd.decision_index)).begin());
  }
  return sol;
}

// Exact recursion over path histories for models without additive structure.
class HistorySolver {
 public:
  HistorySolver(const MarketModel& model, std::span<const double> f, const NodeGrids& grids, std::uint64_t budget)
      : model_(model), tree_(model.tree()), f_(f), grids_(grids), budget_(budget) {
    hist_.reserve(model.path_length());
  }

  double solve(int node) {
    const auto& nd = tree_.node(node);
    if (nd.leaf_index >= 0) {
      require(++evaluations_ <= budget_, ErrorCode::kBudgetExceeded,
              "history DP exceeded " + std::to_string(budget_) + " path evaluations");
      const auto l = static_cast<std::size_t>(nd.leaf_index);
      return hedge_cost(f_[l], model_.eval(l, hist_));
    }
    return best(node).first;
  }

  std::pair<double, std::size_t> best(int node) {
    const auto& nd = tree_.node(node);
    const auto& grid = grids_[static_cast<std::size_t>(nd.decision_index)];
    double value = ext::kPosInf;
    std::size_t arg = 0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      hist_.insert(hist_.end(), grid[i].begin(), grid[i].end());
      double worst = ext::kNegInf;
      for (int c : nd.children) worst = std::max(worst, solve(c));
      hist_.resize(hist_.size() - grid[i].size());
      if (i == 0 || better_min(worst, value)) {
        value = worst;
        arg = i;
      }
    }
    return {value, arg};
  }

  std::vector<double>& history() { return hist_; }
  std::uint64_t evaluations() const { return evaluations_; }

 private:
  const MarketModel& model_;
  const ScenarioTree& tree_;
  std::span<const double> f_;
  const NodeGrids& grids_;
  std::uint64_t budget_;
  std::uint64_t evaluations_ = 0;
  std::vector<double> hist_;
};

Solution solve_history(const MarketModel& model, std::span<const double> f, const NodeGrids& grids,
                       std::uint64_t budget) {
  const auto& tree = model.tree();
  double paths = 0.0;
  for (std::size_t l = 0; l < tree.num_leaves(); ++l) {
    double c = 1.0;
    const auto& p = model.path(l);
    for (std::size_t t = 0; t + 1 < p.size(); ++t) {
      c *= static_cast<double>(grids[static_cast<std::size_t>(tree.node(p[t]).decision_index)].size());
    }
    paths += c;
  }
  require(paths <= static_cast<double>(budget), ErrorCode::kBudgetExceeded,
          "history DP needs " + std::to_string(static_cast<std::uint64_t>(paths)) + " path evaluations, budget " +
              std::to_string(budget));

  HistorySolver solver(model, f, grids, budget * static_cast<std::uint64_t>(tree.horizon() + 1));
  Solution sol;
  sol.method = "history-dp";
  sol.witness = AdaptedStrategy(tree, model.dim());
  sol.price = solver.best(tree.root()).first;

  // Backtrace: recompute the argmin at each node given the chosen history.
  std::function<void(int)> trace = [&](int node) {
    const auto& nd = tree.node(node);
    if (nd.leaf_index >= 0) return;
    const auto k = static_cast<std::size_t>(nd.decision_index);
    const std::size_t i = solver.best(node).second;
    const auto& v = grids[k][i];
    std::copy(v.begin(), v.end(), sol.witness.at_decision(k).begin());
    auto& h = solver.history();
    h.insert(h.end(), v.begin(), v.end());
    for (int c : nd.children) trace(c);
    h.resize(h.size() - v.size());
  };
  trace(tree.root());
  sol.evaluations = solver.evaluations();
  return sol;
}

Solution solve(const MarketModel& model, std::span<const double> f, const NodeGrids& grids, std::uint64_t budget) {
  require(f.size() == model.tree().num_leaves(), ErrorCode::kDimensionMismatch, "claim needs one value per leaf");
  for (double v : f) require(std::isfinite(v), ErrorCode::kInvalidArgument, "claim values must be finite");
  check_grids(model.tree(), grids, model.dim());
  return model.flags().additive ? solve_additive(model, f, grids, budget) : solve_history(model, f, grids, budget);
}

SuperhedgeResult finish(const MarketModel& model, std::span<const double> f, Solution sol,
                        const SuperhedgeConfig& config) {
  SuperhedgeResult r;
  r.price = sol.price;
  r.witness = std::move(sol.witness);
  r.method = sol.method;
  r.evaluations = sol.evaluations;
  r.infeasible = ext::is_pos_inf(r.price);
  if (r.infeasible) {
    require(!config.throw_if_infeasible, ErrorCode::kInfeasibleEverywhere,
            "every grid strategy yields -inf on some leaf");
    return r;
  }
  const auto v = model.evaluate_hat(r.witness);
  r.slack.resize(f.size());
  for (std::size_t l = 0; l < f.size(); ++l) r.slack[l] = r.price + v[l] - f[l];
  return r;
}

}  // namespace

SuperhedgeResult superhedge_price(const MarketModel& model, std::span<const double> f, const NodeGrids& grids,
                                  const SuperhedgeConfig& config) {
  return finish(model, f, solve(model, f, grids, config.budget), config);
}

SuperhedgeResult superhedge_price(const MarketModel& model, std::span<const double> f,
                                  const SuperhedgeConfig& config) {
  require(config.grid >= 1 && config.box >= 0.0, ErrorCode::kInvalidGrid, "grid must be positive");
  const auto& tree = model.tree();
  auto r = superhedge_price(model, f, uniform_node_grids(tree, model.dim(), config.box, config.grid), config);
  r.box = config.box;
  r.grid = config.grid;
  r.step = config.grid > 1 ? 2.0 * config.box / (config.grid - 1) : 0.0;
  if (!r.infeasible) {
    double lip = 0.0;
    bool known = true;
    for (std::size_t l = 0; l < tree.num_leaves() && known; ++l) {
      auto v = model.lipschitz(l);
      known = v.has_value();
      if (known) lip = std::max(lip, *v);
    }
    if (known) r.price_lower = r.price - lip * r.step / 2.0;
  }
  if (config.refinement_tol && config.grid >= 3 && config.grid % 2 == 1 && !r.infeasible) {
    SuperhedgeConfig cc = config;
    cc.grid = (config.grid + 1) / 2;
    cc.refinement_tol.reset();
    auto coarse = superhedge_price(model, f, cc);
    require(coarse.price - r.price <= *config.refinement_tol, ErrorCode::kGridTooCoarse,
            "price moved by " + std::to_string(coarse.price - r.price) + " under grid refinement");
  }
  return r;
}

FeasibilityResult superhedge_feasible(const MarketModel& model, std::span<const double> g,
                                      const SuperhedgeConfig& config) {
  auto r = superhedge_price(model, g, uniform_node_grids(model.tree(), model.dim(), config.box, config.grid), config);
  FeasibilityResult out;
  out.price = r.price;
  out.feasible = !r.infeasible && r.price <= config.tol;
  if (out.feasible) out.witness = r.witness;
  return out;
}

StrategyBounds strategy_bounds(const MarketModel& model, std::span<const double> f, const SuperhedgeConfig& config) {
  const auto& tree = model.tree();
  const auto grids = uniform_node_grids(tree, model.dim(), config.box, config.grid);
  auto base = superhedge_price(model, f, grids, config);
  require(!base.infeasible && base.price <= config.tol, ErrorCode::kEmptyFeasibleSet,
          "no strategy in box and grid dominates the claim");

  StrategyBounds out;
  out.m.assign(tree.num_decision_nodes(), 0.0);
  for (std::size_t k = 0; k < tree.num_decision_nodes(); ++k) {
    // Candidates by decreasing norm; the first feasible one sets the bound.
    std::vector<std::size_t> order(grids[k].size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    auto norm = [&](std::size_t i) {
      double m = 0.0;
      for (double v : grids[k][i]) m = std::max(m, std::abs(v));
      return m;
    };
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return norm(a) > norm(b); });
    for (std::size_t i : order) {
      if (norm(i) <= out.m[k]) break;
      NodeGrids forced = grids;
      forced[k] = {grids[k][i]};
      auto r = superhedge_price(model, f, forced, config);
      if (!r.infeasible && r.price <= config.tol) {
        out.m[k] = norm(i);
        break;
      }
    }
  }
  out.k_f.assign(tree.num_leaves(), 0.0);
  for (std::size_t l = 0; l < tree.num_leaves(); ++l) {
    const auto& p = model.path(l);
    for (std::size_t t = 0; t + 1 < p.size(); ++t) {
      out.k_f[l] += out.m[static_cast<std::size_t>(tree.node(p[t]).decision_index)];
    }
  }
  return out;
}

std::vector<ConvergentSequence> random_convergent_sequences(const MarketModel& model, std::size_t count,
                                                            std::uint64_t seed, const SuperhedgeConfig& config,
                                                            std::size_t length) {
  const auto& tree = model.tree();
  const auto axis = axis_grid(config.box, config.grid);
  const auto m = static_cast<long>(axis.size());
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<long> pick(0, m - 1);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  auto finite = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
  };

  std::vector<ConvergentSequence> out;
  out.reserve(count);
  for (std::size_t s = 0; s < count; ++s) {
    std::vector<long> target(tree.num_decision_nodes() * static_cast<std::size_t>(model.dim()));
    AdaptedStrategy star(tree, model.dim());
    for (int attempt = 0; attempt < 16; ++attempt) {
      for (std::size_t i = 0; i < target.size(); ++i) {
        target[i] = pick(rng);
        star.raw()[i] = axis[static_cast<std::size_t>(target[i])];
      }
      if (finite(model.evaluate_hat(star))) break;
      std::fill(star.raw().begin(), star.raw().end(), 0.0);
      std::fill(target.begin(), target.end(), (m - 1) / 2);
    }
    const auto v_star = model.evaluate_hat(star);
    const double s_inf = finite(v_star) ? 0.5 * unif(rng) : 0.0;

    ConvergentSequence seq;
    seq.limit.resize(v_star.size());
    for (std::size_t l = 0; l < v_star.size(); ++l) seq.limit[l] = v_star[l] - s_inf;
    for (std::size_t k = 0; k < length; ++k) {
      // Lattice offsets shrink to zero over the first half of the sequence.
      const long reach = static_cast<long>(length / 2 > k ? length / 2 - k : 0);
      AdaptedStrategy th(tree, model.dim());
      for (std::size_t i = 0; i < target.size(); ++i) {
        long off = reach == 0 ? 0 : std::uniform_int_distribution<long>(-reach, reach)(rng);
        long idx = std::clamp(target[i] + off, 0L, m - 1);
        th.raw()[i] = axis[static_cast<std::size_t>(idx)];
      }
      auto v = model.evaluate_hat(th);
      if (!finite(v)) v = v_star;
      const double s = s_inf + unif(rng) / static_cast<double>(k + 1);
      std::vector<double> h(v.size());
      for (std::size_t l = 0; l < v.size(); ++l) h[l] = v[l] - s;
      seq.terms.push_back(std::move(h));
    }
    out.push_back(std::move(seq));
  }
  return out;
}

ConvergentSequence price_sequence(const MarketModel& model, std::span<const double> f,
                                  const SuperhedgeConfig& config, std::size_t length) {
  auto r = superhedge_price(model, f, config);
  require(!r.infeasible, ErrorCode::kInfeasibleEverywhere, "claim has infinite price");
  ConvergentSequence seq;
  seq.limit.resize(f.size());
  for (std::size_t l = 0; l < f.size(); ++l) seq.limit[l] = f[l] - r.price;
  for (std::size_t k = 1; k <= length; ++k) {
    std::vector<double> h(f.size());
    for (std::size_t l = 0; l < f.size(); ++l) h[l] = f[l] - r.price - std::ldexp(1.0, -static_cast<int>(k));
    seq.terms.push_back(std::move(h));
  }
  return seq;
}

ClosednessReport closedness_probe(const MarketModel& model, const std::vector<ConvergentSequence>& sequences,
                                  const SuperhedgeConfig& config) {
  ClosednessReport rep;
  for (std::size_t s = 0; s < sequences.size(); ++s) {
    ++rep.sequences;
    bool all_in = true;
    for (const auto& h : sequences[s].terms) {
      ++rep.terms_checked;
      if (!superhedge_feasible(model, h, config).feasible) {
        ++rep.terms_outside;
        all_in = false;
      }
    }
    bool limit_in = superhedge_feasible(model, sequences[s].limit, config).feasible;
    if (limit_in) ++rep.limits_in_c;
    if (all_in && !limit_in) rep.violations.push_back(s);
  }
  return rep;
}

}  // namespace nccm
