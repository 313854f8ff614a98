#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nccm/market_models.hpp"
#include "nccm/scenario_tree.hpp"

namespace nccm {

struct SuperhedgeConfig {
  double box = 1.0;
  int grid = 401;                         // points per axis on [-box, box]
  std::uint64_t budget = 50'000'000;      // step or path evaluations
  double tol = 1e-9;                      // feasibility tolerance
  std::optional<double> refinement_tol;   // compare with the nested coarse grid
  bool throw_if_infeasible = false;
};

struct SuperhedgeResult {
  double price = 0.0;                     // +inf when every strategy fails somewhere
  bool infeasible = false;
  std::optional<double> price_lower;      // price - L * h / 2 when L is known
  AdaptedStrategy witness;
  std::vector<double> slack;              // price + V(witness) - f per leaf
  std::string method;                     // "additive-dp" or "history-dp"
  double box = 0.0;
  int grid = 0;
  double step = 0.0;
  std::uint64_t evaluations = 0;
};

// min over grid-adapted strategies of max over leaves of f - V(strategy).
SuperhedgeResult superhedge_price(const MarketModel& model, std::span<const double> f,
                                  const SuperhedgeConfig& config = {});

// Same with explicit candidate sets per decision node.
SuperhedgeResult superhedge_price(const MarketModel& model, std::span<const double> f, const NodeGrids& grids,
                                  const SuperhedgeConfig& config = {});

struct FeasibilityResult {
  bool feasible = false;
  std::optional<AdaptedStrategy> witness;
  double price = 0.0;
};

// g in C on the grid: some strategy has V >= g at every leaf.
FeasibilityResult superhedge_feasible(const MarketModel& model, std::span<const double> g,
                                      const SuperhedgeConfig& config = {});

struct StrategyBounds {
  std::vector<double> m;                  // per decision node, max |theta| over feasible strategies
  std::vector<double> k_f;                // per leaf, sum of m along the path
  std::string caveat = "within box and grid";
};

// Per-node bounds over {strategies in box and grid with V >= f}.
StrategyBounds strategy_bounds(const MarketModel& model, std::span<const double> f,
                               const SuperhedgeConfig& config = {});

struct ConvergentSequence {
  std::vector<std::vector<double>> terms;  // h_k per leaf
  std::vector<double> limit;
};

struct ClosednessReport {
  std::size_t sequences = 0;
  std::size_t terms_checked = 0;
  std::size_t terms_outside = 0;           // terms not in C (malformed input)
  std::size_t limits_in_c = 0;
  std::vector<std::size_t> violations;     // sequences with all terms in C but limit outside
  bool pass() const { return violations.empty(); }
};

// h_k = V(theta_k) - s_k with grid strategies theta_k converging to a grid
// strategy and nonnegative slacks s_k converging.
std::vector<ConvergentSequence> random_convergent_sequences(const MarketModel& model, std::size_t count,
                                                            std::uint64_t seed, const SuperhedgeConfig& config,
                                                            std::size_t length = 8);

// h_k = f - rho(f) - 2^-k.
ConvergentSequence price_sequence(const MarketModel& model, std::span<const double> f,
                                  const SuperhedgeConfig& config, std::size_t length = 8);

ClosednessReport closedness_probe(const MarketModel& model, const std::vector<ConvergentSequence>& sequences,
                                  const SuperhedgeConfig& config = {});

}  // namespace nccm
