#include "nccm/utility.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <functional>
#include <limits>
#include <unordered_map>

#include "nccm/error.hpp"
#include "nccm/extended.hpp"

namespace nccm {

UtilityIntegrand linear_utility() {
  return {[](std::size_t, double w) { return w; }, "linear"};
}

UtilityIntegrand exp_utility(double a) {
  require(a > 0.0, ErrorCode::kInvalidArgument, "exponential utility needs a > 0");
  return {[a](std::size_t, double w) { return ext::is_neg_inf(w) ? ext::kNegInf : -std::exp(-a * w); },
          "exp:" + std::to_string(a)};
}

UtilityIntegrand log_utility() {
  return {[](std::size_t, double w) { return w < 0.0 ? ext::kNegInf : std::log1p(w); }, "log"};
}

UtilityIntegrand digital_utility(double k) {
  return {[k](std::size_t, double w) { return ext::is_neg_inf(w) ? ext::kNegInf : (w >= k ? 1.0 : 0.0); },
          "digital:" + std::to_string(k)};
}

UtilityIntegrand square_utility() {
  return {[](std::size_t, double w) { return ext::is_neg_inf(w) ? ext::kNegInf : w * w; }, "square"};
}

UtilityIntegrand parse_utility(const std::string& spec) {
  auto colon = spec.find(':');
  std::string head = spec.substr(0, colon);
  auto param = [&]() {
    require(colon != std::string::npos, ErrorCode::kInvalidArgument, "utility '" + spec + "' needs a parameter");
    try {
      return std::stod(spec.substr(colon + 1));
    } catch (const std::exception&) {
      throw Error(ErrorCode::kInvalidArgument, "bad utility parameter in '" + spec + "'");
    }
  };
  if (head == "linear") return linear_utility();
  if (head == "log") return log_utility();
  if (head == "square") return square_utility();
  if (head == "exp") return exp_utility(param());
  if (head == "digital") return digital_utility(param());
  throw Error(ErrorCode::kInvalidArgument, "unknown utility '" + spec + "'");
}

double expected_utility(const ScenarioTree& tree, const UtilityIntegrand& u, const std::vector<double>& values) {
  std::function<double(int)> rec = [&](int node) {
    const auto& nd = tree.node(node);
    if (nd.leaf_index >= 0) {
      const auto l = static_cast<std::size_t>(nd.leaf_index);
      return nd.abs_prob * u.eval(l, values[l]);
    }
    double sum = 0.0;
    for (int c : nd.children) sum = ext::add(sum, rec(c));
    return sum;
  };
  return rec(tree.root());
}

namespace {

bool better_max(double v, double best) { return v > best; }

struct StateKey {
  std::size_t prev;
  std::uint64_t gain;
  bool operator==(const StateKey&) const = default;
};

struct StateHash {
  std::size_t operator()(const StateKey& k) const {
    return std::hash<std::uint64_t>()(k.gain * 0x9E3779B97F4A7C15ULL ^ k.prev);
  }
};

// Expected utility recursion over (node, previous position, accumulated gain).
class AdditiveSolver {
 public:
  AdditiveSolver(const MarketModel& model, const UtilityIntegrand& u, const NodeGrids& grids, std::uint64_t budget)
      : model_(model), tree_(model.tree()), u_(u), grids_(grids), budget_(budget), memo_(tree_.num_nodes()),
        zero_(static_cast<std::size_t>(model.dim()), 0.0) {}

  static constexpr std::size_t kRoot = std::numeric_limits<std::size_t>::max();

  std::pair<double, std::size_t> solve(int node, std::size_t prev, double gain) {
    auto& memo = memo_[static_cast<std::size_t>(node)];
    const StateKey key{prev, std::bit_cast<std::uint64_t>(gain)};
    if (auto it = memo.find(key); it != memo.end()) return it->second;
    require(++states_ <= budget_, ErrorCode::kBudgetExceeded,
            "utility DP exceeded " + std::to_string(budget_) + " states");

    const auto& nd = tree_.node(node);
    const auto& grid = grids_[static_cast<std::size_t>(nd.decision_index)];
    std::span<const double> pv = zero_;
    if (prev != kRoot) pv = grids_[static_cast<std::size_t>(tree_.node(nd.parent).decision_index)][prev];
    double best = ext::kNegInf;
    std::size_t arg = 0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      double sum = 0.0;
      for (int c : nd.children) {
        const double g = ext::add(gain, model_.step_gain(node, c, pv, grid[i]));
        const auto& cn = tree_.node(c);
        double term = cn.leaf_index >= 0 ? cn.abs_prob * u_.eval(static_cast<std::size_t>(cn.leaf_index), g)
                                         : solve(c, i, g).first;
        sum = ext::add(sum, term);
      }
      if (i == 0 || better_max(sum, best)) {
        best = sum;
        arg = i;
      }
    }
    return memo.emplace(key, std::make_pair(best, arg)).first->second;
  }

  AdaptedStrategy witness() {
    AdaptedStrategy s(tree_, model_.dim());
    std::function<void(int, std::size_t, double)> trace = [&](int node, std::size_t prev, double gain) {
      const auto& nd = tree_.node(node);
      if (nd.leaf_index >= 0) return;
      const auto k = static_cast<std::size_t>(nd.decision_index);
      const std::size_t i = solve(node, prev, gain).second;
      std::copy(grids_[k][i].begin(), grids_[k][i].end(), s.at_decision(k).begin());
      std::span<const double> pv = zero_;
      if (prev != kRoot) pv = grids_[static_cast<std::size_t>(tree_.node(nd.parent).decision_index)][prev];
      for (int c : nd.children) trace(c, i, ext::add(gain, model_.step_gain(node, c, pv, grids_[k][i])));
    };
    trace(tree_.root(), kRoot, 0.0);
    return s;
  }

  std::uint64_t states() const { return states_; }

 private:
  const MarketModel& model_;
  const ScenarioTree& tree_;
  const UtilityIntegrand& u_;
  const NodeGrids& grids_;
  std::uint64_t budget_;
  std::uint64_t states_ = 0;
  std::vector<std::unordered_map<StateKey, std::pair<double, std::size_t>, StateHash>> memo_;
  std::vector<double> zero_;
};

// Same recursion keyed by the full path history.
class HistorySolver {
 public:
  HistorySolver(const MarketModel& model, const UtilityIntegrand& u, const NodeGrids& grids, std::uint64_t budget)
      : model_(model), tree_(model.tree()), u_(u), grids_(grids), budget_(budget) {}

  std::pair<double, std::size_t> solve(int node) {
    const auto& nd = tree_.node(node);
    const auto& grid = grids_[static_cast<std::size_t>(nd.decision_index)];
    double best = ext::kNegInf;
    std::size_t arg = 0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      hist_.insert(hist_.end(), grid[i].begin(), grid[i].end());
      double sum = 0.0;
      for (int c : nd.children) {
        const auto& cn = tree_.node(c);
        double term;
        if (cn.leaf_index >= 0) {
          require(++states_ <= budget_, ErrorCode::kBudgetExceeded,
                  "utility DP exceeded " + std::to_string(budget_) + " path evaluations");
          const auto l = static_cast<std::size_t>(cn.leaf_index);
          term = cn.abs_prob * u_.eval(l, model_.eval(l, hist_));
        } else {
          term = solve(c).first;
        }
        sum = ext::add(sum, term);
      }
      hist_.resize(hist_.size() - grid[i].size());
      if (i == 0 || better_max(sum, best)) {
        best = sum;
        arg = i;
      }
    }
    return {best, arg};
  }

  AdaptedStrategy witness() {
    AdaptedStrategy s(tree_, model_.dim());
    std::function<void(int)> trace = [&](int node) {
      const auto& nd = tree_.node(node);
      if (nd.leaf_index >= 0) return;
      const auto k = static_cast<std::size_t>(nd.decision_index);
      const std::size_t i = solve(node).second;
      std::copy(grids_[k][i].begin(), grids_[k][i].end(), s.at_decision(k).begin());
      hist_.insert(hist_.end(), grids_[k][i].begin(), grids_[k][i].end());
      for (int c : nd.children) trace(c);
      hist_.resize(hist_.size() - grids_[k][i].size());
    };
    trace(tree_.root());
    return s;
  }

  std::uint64_t states() const { return states_; }
  // The backtrace re-solves subtrees and is not charged against the budget.
  void lift_budget() { budget_ = std::numeric_limits<std::uint64_t>::max(); }

 private:
  const MarketModel& model_;
  const ScenarioTree& tree_;
  const UtilityIntegrand& u_;
  const NodeGrids& grids_;
  std::uint64_t budget_;
  std::uint64_t states_ = 0;
  std::vector<double> hist_;
};

void check_config(const UtilityConfig& config) {
  require(config.grid >= 1 && config.box >= 0.0, ErrorCode::kInvalidGrid, "grid must be positive");
}

UtilityResult finish(UtilityResult r, const UtilityConfig& config) {
  if (ext::is_neg_inf(r.value)) {
    require(config.allow_all_infeasible, ErrorCode::kAllInfeasible,
            "expected utility is -inf for every grid strategy");
  }
  return r;
}

}  // namespace

UtilityResult maximize_utility(const MarketModel& model, const UtilityIntegrand& u, const UtilityConfig& config) {
  check_config(config);
  const auto grids = uniform_node_grids(model.tree(), model.dim(), config.box, config.grid);
  UtilityResult r;
  if (model.flags().additive) {
    AdditiveSolver solver(model, u, grids, config.budget);
    r.value = solver.solve(model.tree().root(), AdditiveSolver::kRoot, 0.0).first;
    r.witness = solver.witness();
    r.states = solver.states();
    r.method = "additive-dp";
  } else {
    HistorySolver solver(model, u, grids, config.budget);
    r.value = solver.solve(model.tree().root()).first;
    r.states = solver.states();
    solver.lift_budget();
    r.witness = solver.witness();
    r.method = "history-dp";
  }
  return finish(std::move(r), config);
}

UtilityResult brute_force_value(const MarketModel& model, const UtilityIntegrand& u, const UtilityConfig& config) {
  check_config(config);
  const auto& tree = model.tree();
  AdaptedGridEnumerator en(tree, uniform_node_grids(tree, model.dim(), config.box, config.grid), model.dim(),
                           config.budget);
  UtilityResult r;
  r.method = "enumeration";
  r.value = ext::kNegInf;
  AdaptedStrategy s;
  bool first = true;
  while (en.next(s)) {
    ++r.states;
    double v = expected_utility(tree, u, model.evaluate_hat(s));
    if (first || v > r.value) {
      r.value = v;
      r.witness = s;
      first = false;
    }
  }
  return finish(std::move(r), config);
}

UtilityAxiomReport check_utility_axioms(const UtilityIntegrand& u, const ScenarioTree& tree,
                                        std::vector<double> wealth) {
  std::sort(wealth.begin(), wealth.end());
  UtilityAxiomReport rep;
  for (std::size_t l = 0; l < tree.num_leaves(); ++l) {
    for (std::size_t i = 0; i + 1 < wealth.size(); ++i) {
      ++rep.checks;
      double a = u.eval(l, wealth[i]), b = u.eval(l, wealth[i + 1]);
      if (a > b && rep.pass) {
        rep.pass = false;
        rep.violation = UtilityAxiomReport::Violation{l, wealth[i], wealth[i + 1], a, b};
      }
    }
  }
  return rep;
}

}  // namespace nccm
