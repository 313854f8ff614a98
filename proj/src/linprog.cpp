#include "nccm/linprog.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "nccm/error.hpp"

namespace nccm::lp {

namespace {

class Tableau {
 public:
  Tableau(std::size_t rows, std::size_t cols) : m_(rows), n_(cols), a_((rows + 1) * (cols + 1), 0.0), basis_(rows) {}

  double& at(std::size_t i, std::size_t j) { return a_[i * (n_ + 1) + j]; }
  double at(std::size_t i, std::size_t j) const { return a_[i * (n_ + 1) + j]; }
  double& rhs(std::size_t i) { return at(i, n_); }
  double& obj(std::size_t j) { return at(m_, j); }

  std::size_t rows() const { return m_; }
  std::size_t cols() const { return n_; }
  std::vector<std::size_t>& basis() { return basis_; }

  void pivot(std::size_t r, std::size_t c) {
    double p = at(r, c);
    for (std::size_t j = 0; j <= n_; ++j) at(r, j) /= p;
    for (std::size_t i = 0; i <= m_; ++i) {
      if (i == r) continue;
      double f = at(i, c);
      if (f == 0.0) continue;
      for (std::size_t j = 0; j <= n_; ++j) at(i, j) -= f * at(r, j);
      at(i, c) = 0.0;
    }
    basis_[r] = c;
  }

  // Objective row holds reduced costs of a maximization written as
  // z - c.x = 0. Returns false when unbounded.
  bool optimize(const std::vector<bool>& allowed, double tol) {
    const std::size_t max_iter = 50'000 + 200 * (m_ + n_);
    for (std::size_t iter = 0; iter < max_iter; ++iter) {
      std::size_t enter = n_;
      for (std::size_t j = 0; j < n_; ++j) {
        if (allowed[j] && obj(j) < -tol) {
          enter = j;
          break;
        }
      }
      if (enter == n_) return true;
      std::size_t leave = m_;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < m_; ++i) {
        double a = at(i, enter);
        if (a <= tol) continue;
        double ratio = rhs(i) / a;
        if (leave == m_ || ratio < best - 1e-12 || (ratio <= best + 1e-12 && basis_[i] < basis_[leave])) {
          best = std::min(best, ratio);
          leave = i;
        }
      }
      if (leave == m_) return false;
      pivot(leave, enter);
    }
    throw Error(ErrorCode::kNoConvergence, "simplex iteration limit reached");
  }

 private:
  std::size_t m_, n_;
  std::vector<double> a_;
  std::vector<std::size_t> basis_;
};

}  // namespace

Result solve(const Problem& problem, double tol) {
  const std::size_t n0 = problem.num_vars;
  require(problem.objective.size() == n0 && problem.free_var.size() == n0, ErrorCode::kDimensionMismatch,
          "objective length must match variable count");

  // Column layout: original (split when free), slacks, artificials.
  std::vector<std::size_t> pos_col(n0), neg_col(n0, SIZE_MAX);
  std::size_t nx = 0;
  for (std::size_t j = 0; j < n0; ++j) {
    pos_col[j] = nx++;
    if (problem.free_var[j]) neg_col[j] = nx++;
  }
  const std::size_t m = problem.rows.size();
  std::size_t ns = 0;
  for (const auto& row : problem.rows) {
    require(row.coef.size() == n0, ErrorCode::kDimensionMismatch, "constraint length must match variable count");
    if (row.sense != Sense::kEq) ++ns;
  }
  const std::size_t nart = m;
  const std::size_t ncols = nx + ns + nart;
  Tableau t(m, ncols);

  std::size_t slack = nx;
  std::vector<bool> needs_art(m, true);
  for (std::size_t i = 0; i < m; ++i) {
    const auto& row = problem.rows[i];
    double sign = row.rhs < 0.0 ? -1.0 : 1.0;
    for (std::size_t j = 0; j < n0; ++j) {
      t.at(i, pos_col[j]) = sign * row.coef[j];
      if (neg_col[j] != SIZE_MAX) t.at(i, neg_col[j]) = -sign * row.coef[j];
    }
    if (row.sense != Sense::kEq) {
      double s = row.sense == Sense::kLe ? 1.0 : -1.0;
      t.at(i, slack) = sign * s;
      if (sign * s > 0.0) {
        t.basis()[i] = slack;
        needs_art[i] = false;
      }
      ++slack;
    }
    t.rhs(i) = sign * row.rhs;
    std::size_t art = nx + ns + i;
    if (needs_art[i]) {
      t.at(i, art) = 1.0;
      t.basis()[i] = art;
    }
  }

  std::vector<bool> allowed(ncols, true);
  for (std::size_t i = 0; i < m; ++i) {
    if (!needs_art[i]) allowed[nx + ns + i] = false;
  }

  // Phase one: maximize -sum(artificials).
  for (std::size_t i = 0; i < m; ++i) {
    if (!needs_art[i]) continue;
    t.obj(nx + ns + i) = 1.0;
  }
  for (std::size_t i = 0; i < m; ++i) {
    if (!needs_art[i]) continue;
    for (std::size_t j = 0; j <= ncols; ++j) t.at(m, j) -= t.at(i, j);
  }
  t.optimize(allowed, tol);
  Result result;
  result.infeasibility = std::max(0.0, -t.at(m, ncols));

  double scale = 1.0;
  for (const auto& row : problem.rows) scale = std::max(scale, std::abs(row.rhs));
  if (result.infeasibility > 1e-9 * scale) {
    result.status = Status::kInfeasible;
    return result;
  }

  // Drive artificials out of the basis where possible.
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t b = t.basis()[i];
    if (b < nx + ns) continue;
    std::size_t best = ncols;
    double mag = tol;
    for (std::size_t j = 0; j < nx + ns; ++j) {
      if (std::abs(t.at(i, j)) > mag) {
        mag = std::abs(t.at(i, j));
        best = j;
      }
    }
    if (best < ncols) t.pivot(i, best);
  }
  for (std::size_t j = nx + ns; j < ncols; ++j) allowed[j] = false;

  // Phase two.
  for (std::size_t j = 0; j <= ncols; ++j) t.obj(j) = 0.0;
  for (std::size_t j = 0; j < n0; ++j) {
    t.obj(pos_col[j]) = -problem.objective[j];
    if (neg_col[j] != SIZE_MAX) t.obj(neg_col[j]) = problem.objective[j];
  }
  for (std::size_t i = 0; i < m; ++i) {
    double f = t.obj(t.basis()[i]);
    if (f == 0.0) continue;
    for (std::size_t j = 0; j <= ncols; ++j) t.at(m, j) -= f * t.at(i, j);
  }
  if (!t.optimize(allowed, tol)) {
    result.status = Status::kUnbounded;
    return result;
  }

  std::vector<double> col_val(ncols, 0.0);
  for (std::size_t i = 0; i < m; ++i) col_val[t.basis()[i]] = t.rhs(i);
  result.x.assign(n0, 0.0);
  result.value = 0.0;
  for (std::size_t j = 0; j < n0; ++j) {
    result.x[j] = col_val[pos_col[j]] - (neg_col[j] != SIZE_MAX ? col_val[neg_col[j]] : 0.0);
    result.value += problem.objective[j] * result.x[j];
  }
  result.status = Status::kOptimal;
  return result;
}

double conic_residual(const std::vector<std::vector<double>>& generators, const std::vector<double>& x) {
  const std::size_t n = x.size();
  const std::size_t k = generators.size();
  // Variables: lambda (k), s_plus (n), s_minus (n).
  Problem p(k + 2 * n);
  for (std::size_t i = 0; i < 2 * n; ++i) p.objective[k + i] = -1.0;
  for (std::size_t r = 0; r < n; ++r) {
    std::vector<double> coef(k + 2 * n, 0.0);
    for (std::size_t g = 0; g < k; ++g) {
      require(generators[g].size() == n, ErrorCode::kDimensionMismatch, "generator dimension");
      coef[g] = generators[g][r];
    }
    coef[k + r] = 1.0;
    coef[k + n + r] = -1.0;
    p.add(std::move(coef), Sense::kEq, x[r]);
  }
  auto res = solve(p);
  return res.status == Status::kOptimal ? -res.value : std::numeric_limits<double>::infinity();
}

}  // namespace nccm::lp
