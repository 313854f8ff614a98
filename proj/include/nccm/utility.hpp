#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "nccm/market_models.hpp"
#include "nccm/scenario_tree.hpp"

namespace nccm {

// Random utility U(omega, w); values finite or -inf.
struct UtilityIntegrand {
  std::function<double(std::size_t leaf, double wealth)> eval;
  std::string name;
};

UtilityIntegrand linear_utility();
UtilityIntegrand exp_utility(double a);      // -exp(-a w)
UtilityIntegrand log_utility();              // log(1 + w) for w >= 0, -inf below
UtilityIntegrand digital_utility(double k);  // 1 if w >= k else 0
UtilityIntegrand square_utility();           // w^2, not monotone

// "linear", "exp:a", "log", "digital:k", "square".
UtilityIntegrand parse_utility(const std::string& spec);

struct UtilityConfig {
  double box = 1.0;
  int grid = 11;
  std::uint64_t budget = 20'000'000;
  bool allow_all_infeasible = false;  // return -inf instead of throwing AllInfeasible
};

struct UtilityResult {
  double value = 0.0;
  AdaptedStrategy witness;
  std::string method;  // "additive-dp", "history-dp" or "enumeration"
  std::uint64_t states = 0;
};

// max over grid-adapted strategies of sum_leaves P * U(V).
UtilityResult maximize_utility(const MarketModel& model, const UtilityIntegrand& u, const UtilityConfig& config = {});

// Exhaustive enumeration over every grid-adapted strategy.
UtilityResult brute_force_value(const MarketModel& model, const UtilityIntegrand& u, const UtilityConfig& config = {});

// sum over leaves of P * U(values), summed child by child in tree order.
double expected_utility(const ScenarioTree& tree, const UtilityIntegrand& u, const std::vector<double>& values);

struct UtilityAxiomReport {
  struct Violation {
    std::size_t leaf = 0;
    double w_lo = 0.0;
    double w_hi = 0.0;
    double u_lo = 0.0;
    double u_hi = 0.0;
  };
  bool pass = true;
  std::size_t checks = 0;
  std::optional<Violation> violation;
};

// Monotonicity on a sorted wealth grid, per leaf.
UtilityAxiomReport check_utility_axioms(const UtilityIntegrand& u, const ScenarioTree& tree,
                                        std::vector<double> wealth);

}  // namespace nccm
