#pragma once

#include <cstddef>
#include <vector>

namespace nccm::lp {

enum class Sense { kLe, kGe, kEq };

struct Constraint {
  std::vector<double> coef;
  Sense sense = Sense::kLe;
  double rhs = 0.0;
};

// maximize objective . x subject to the rows; variables are nonnegative
// unless flagged free.
struct Problem {
  std::size_t num_vars = 0;
  std::vector<double> objective;
  std::vector<bool> free_var;
  std::vector<Constraint> rows;

  explicit Problem(std::size_t n) : num_vars(n), objective(n, 0.0), free_var(n, false) {}
  void add(std::vector<double> coef, Sense sense, double rhs) { rows.push_back({std::move(coef), sense, rhs}); }
};

enum class Status { kOptimal, kInfeasible, kUnbounded };

struct Result {
  Status status = Status::kInfeasible;
  double value = 0.0;
  std::vector<double> x;
  // Sum of artificial variables left after phase one; zero when feasible.
  double infeasibility = 0.0;
};

// Dense two-phase simplex with Bland's rule.
Result solve(const Problem& problem, double tol = 1e-10);

// Smallest l1 residual of G lambda = x over lambda >= 0, where the columns
// of G are the given vectors.
double conic_residual(const std::vector<std::vector<double>>& generators, const std::vector<double>& x);

}  // namespace nccm::lp
