#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nccm/arbitrage.hpp"
#include "nccm/market_models.hpp"
#include "nccm/scenario_tree.hpp"

namespace nccm {

// Polyhedral cone {sum lambda_i g_i : lambda >= 0} in R^n. The dual
// generators are the unit extreme rays of the positive polar, so membership
// is <h, x> >= 0 for every dual generator h.
class Cone {
 public:
  static Cone from_generators(int n, std::vector<std::vector<double>> generators);
  static Cone orthant(int n);

  int dim() const { return n_; }
  const std::vector<std::vector<double>>& generators() const { return generators_; }
  const std::vector<std::vector<double>>& dual_generators() const { return dual_; }
  int span_dim() const { return static_cast<int>(span_.cols()); }
  bool solid() const { return span_dim() == n_; }
  // Orthonormal basis of the linear span (the affine hull).
  const Eigen::MatrixXd& span_basis() const { return span_; }

  // min_h <h, x> over dual generators; +inf when the cone is R^n.
  double margin(std::span<const double> x) const;
  bool contains(std::span<const double> x, double tol = 1e-9) const;
  // l1 distance to the cone by linear programming.
  double conic_residual(std::span<const double> x) const;
  bool contains_lp(std::span<const double> x, double tol = 1e-9) const;

  Cone polar() const;

 private:
  int n_ = 0;
  std::vector<std::vector<double>> generators_;
  std::vector<std::vector<double>> dual_;
  Eigen::MatrixXd span_;
};

// One cone per leaf.
class RandomCone {
 public:
  RandomCone() = default;
  RandomCone(int n, std::vector<Cone> leaves);
  static RandomCone shared(const Cone& cone, std::size_t leaves);

  int dim() const { return n_; }
  std::size_t num_leaves() const { return leaves_.size(); }
  const Cone& at(std::size_t leaf) const { return leaves_.at(leaf); }
  bool solid() const;

 private:
  int n_ = 0;
  std::vector<Cone> leaves_;
};

RandomCone polar(const RandomCone& cone);

// Random cone with k nonzero generators drawn from [-1, 1]^n per leaf.
RandomCone random_cone(int n, int k, std::size_t leaves, std::uint64_t seed);

enum class SelectionTarget { kCone, kRelativeInterior, kInterior };

struct ConeSelection {
  std::vector<std::vector<double>> z;  // per leaf
  SelectionTarget target = SelectionTarget::kCone;
};

// Generators, pairwise midpoints, the ri selection and the shifted family
// rho / k + (1 - 1 / k) g for k = 2, 3, 4.
std::vector<ConeSelection> castaing(const RandomCone& cone);

// rho = sum_k 2^-k g_k over unit generators, verified in the relative interior.
ConeSelection ri_selection(const RandomCone& cone);

// Half the distance from the point to the nearest facet plane, per leaf.
std::vector<double> interior_ball_radius(const RandomCone& cone, const ConeSelection& point);

struct AffineBall {
  double radius = 0.0;             // half the distance to the relative boundary
  double boundary_distance = 0.0;  // distance to the relative boundary within the span
};

std::vector<AffineBall> affine_ball_radius(const RandomCone& cone, const ConeSelection& point);

struct OrderReport {
  bool leq = true;
  bool routes_agree = true;
  double min_margin = 0.0;  // min over leaves of the dual-generator margin of X - Y
  std::optional<std::size_t> failing_leaf;
};

// X >=_K Y, i.e. X - Y in K(omega) at every leaf; dual margins and LP residuals.
OrderReport cone_leq(const std::vector<std::vector<double>>& x, const std::vector<std::vector<double>>& y,
                     const RandomCone& cone, double tol = 1e-9);

// V_Z(omega, x) = <Z(omega), V(omega, x)>, with <Z, -inf> = -inf.
class ScalarizedModel : public MarketModel {
 public:
  ScalarizedModel(VectorModelPtr model, std::vector<std::vector<double>> z);

  std::string name() const override { return "scalarized:" + model_->name(); }
  ModelFlags flags() const override;
  double eval(std::size_t leaf, std::span<const double> x) const override;
  double analytic_recession(std::size_t leaf, std::span<const double> z) const override;

  const std::vector<std::vector<double>>& weights() const { return z_; }

 private:
  VectorModelPtr model_;
  std::vector<std::vector<double>> z_;
};

// Checks Z in ri K° per leaf (TargetMismatch otherwise).
std::shared_ptr<ScalarizedModel> scalarize(VectorModelPtr model, const ConeSelection& z, const RandomCone& cone);

struct VectorNaConfig {
  std::size_t family_size = 64;  // random strictly positive combinations
  SphereSearchConfig search;
};

struct VectorNaVerdict {
  NaVerdict verdict;                         // direct search for homogeneous models
  std::optional<NaVerdict> family_verdict;   // scalarization family route
  bool routes_agree = true;
  std::size_t family = 0;
  std::string route;                         // "homogeneous" or "scalarization"
};

// Scalarization family: dual cone generators, the Castaing selections of K°
// and random strictly positive combinations of the dual generators.
std::vector<ConeSelection> scalarization_family(const RandomCone& cone, std::size_t random_count,
                                                std::uint64_t seed);

VectorNaVerdict vector_na_check(VectorModelPtr model, const RandomCone& cone, const VectorNaConfig& config = {});

struct VectorDominationReport {
  bool dominated = true;                 // V(x) <=_K L(x) at every grid point
  std::size_t points = 0;
  std::optional<std::size_t> violation_leaf;
  NaVerdict dominator;                   // NA of the scalarized dominator
  bool na_by_domination = false;
};

// NA through a linear vector dominator L (one frictionless model per output).
VectorDominationReport vector_na_by_domination(const VectorModel& model, const std::vector<ModelPtr>& dominator,
                                               const RandomCone& cone, double box, int points);

struct ScalarRep {
  std::vector<std::vector<double>> z;  // per leaf
  ModelPtr model;
};

// Vector integrand sum_k alpha_k Z_k with Gram alpha = (V_{Z_k}).
class GramModel : public VectorModel {
 public:
  GramModel(std::vector<ScalarRep> basis_reps, std::vector<std::vector<std::size_t>> basis, int outputs);

  std::string name() const override { return "gram"; }
  ModelFlags flags() const override;
  VectorValue eval(std::size_t leaf, std::span<const double> x) const override;

  const std::vector<std::vector<std::size_t>>& basis() const { return basis_; }

 private:
  std::vector<ScalarRep> reps_;
  std::vector<std::vector<std::size_t>> basis_;  // per leaf, indices into reps_
  std::vector<Eigen::MatrixXd> gram_inv_;
};

struct GramResult {
  std::shared_ptr<GramModel> model;
  std::vector<std::vector<std::size_t>> basis;  // per leaf
  std::vector<int> span_dim;                    // dim span K°(omega)
  double max_residual = 0.0;                    // over supplied reps and grid points
  std::size_t points = 0;
};

// Declared basis indices per leaf are optional; otherwise a greedy
// independent subset in supply order is used.
GramResult gram_reconstruct(const std::vector<ScalarRep>& reps, const RandomCone& cone, double box, int points,
                            const std::optional<std::vector<std::vector<std::size_t>>>& declared = std::nullopt,
                            double tol = 1e-8);

struct BasisSensitivity {
  std::vector<std::vector<std::vector<std::size_t>>> bases;  // one per rotation
  double max_difference = 0.0;                                // sup-norm between reconstructions
};

BasisSensitivity basis_sensitivity(const std::vector<ScalarRep>& reps, const RandomCone& cone, double box, int points);

struct AdditivityGap {
  double max_excess = 0.0;  // max of V_{Z1} + V_{Z2} - V_{Z1+Z2}
  double min_excess = 0.0;
  std::size_t points = 0;
};

AdditivityGap additivity_gap(const MarketModel& v1, const MarketModel& v2, const MarketModel& v12, double box,
                             int points);

struct VectorFeasibility {
  bool feasible = false;
  std::optional<AdaptedStrategy> witness;
  std::uint64_t checked = 0;
};

// Some grid strategy with V(theta) - h in K at every leaf.
VectorFeasibility vector_superhedge_feasible(const VectorModel& model, const RandomCone& cone,
                                             const std::vector<std::vector<double>>& h, double box, int grid,
                                             std::uint64_t budget = 10'000'000, double tol = 1e-9);

// g = -(rho / r) x per leaf.
std::vector<std::vector<double>> lower_element(const std::vector<std::vector<double>>& x,
                                               std::span<const double> rho, std::span<const double> r);

}  // namespace nccm
