#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nccm/market_models.hpp"
#include "nccm/scenario_tree.hpp"

namespace nccm {

// Black-box strategy functional: adapted strategy -> per-leaf values. Unlike
// MarketModel it need not be pathwise, so axiom violations are expressible.
struct LocalFunctional {
  std::shared_ptr<const ScenarioTree> tree;
  int dim = 1;
  std::function<std::vector<double>(const AdaptedStrategy&)> hat;
  std::string name;
};

LocalFunctional as_functional(ModelPtr model);

struct AxiomReport {
  struct A2Witness {
    int time = 0;
    int atom_node = 0;
    std::size_t leaf = 0;
    AdaptedStrategy strategy;
    double original = 0.0;
    double localized = 0.0;
  };

  bool a1_pass = true;
  std::vector<double> at_zero;
  bool a2_pass = true;
  std::size_t a2_checks = 0;
  std::optional<A2Witness> a2_witness;

  bool pass() const { return a1_pass && a2_pass; }
};

// A1 exactly; A2 for every t < T and every atom of F_t, with `samples`
// random strategies per pair drawn from [-box, box].
AxiomReport check_axioms(const LocalFunctional& f, std::size_t samples, std::uint64_t seed, double box = 2.0);

enum class Extremum { kSup, kInf };

struct MaximizerConfig {
  int coarse_points = 9;     // per axis, inside the open ball
  int golden_iterations = 48;
  int coordinate_rounds = 2;
  double eta = 1e-9;         // relative shrink keeping samples strictly inside
  std::size_t budget = 5'000'000;  // functional calls per ball
};

// sup (or inf) over the open sup-norm ball {x : |x - q| < r} of V(leaf, x),
// per leaf. Deterministic strategies realize every path vector, so the
// essential supremum localizes to a per-leaf search. `extra` points inside
// the ball are always sampled.
std::vector<double> p_qr(const LocalFunctional& f, std::span<const double> q, double r,
                         const MaximizerConfig& config = {}, Extremum kind = Extremum::kSup,
                         const std::vector<std::vector<double>>& extra = {});

struct ReconstructionConfig {
  double box = 1.0;
  int lattice_points = 41;   // per axis
  int ladder_depth = 8;      // radii 2^-1 .. 2^-K
  MaximizerConfig maximizer;
  double stabilization_tol = 1e-6;
  bool strict = false;       // throw GridTooCoarse when the ladder tail is not stable
};

// Tabulated p_{q,r} over a lattice and radius ladder, with the resulting
// envelope V(x) = inf{p_{q,r} : |x - q| < r} (sup of inf-balls for kInf).
class Reconstruction {
 public:
  static Reconstruction build(const LocalFunctional& f, const ReconstructionConfig& config,
                              Extremum kind = Extremum::kSup);

  Extremum kind() const { return kind_; }
  std::size_t path_length() const { return path_length_; }
  std::size_t num_leaves() const { return num_leaves_; }
  const std::vector<double>& axis() const { return axis_; }
  const std::vector<double>& radii() const { return radii_; }
  std::size_t lattice_size() const { return lattice_.size(); }
  const std::vector<double>& lattice_point(std::size_t i) const { return lattice_[i]; }
  double table(std::size_t leaf, std::size_t q, std::size_t k) const;
  // Value of the functional at the lattice point itself.
  double center(std::size_t leaf, std::size_t q) const { return center_[leaf][q]; }

  // Envelope over the finite table at an arbitrary point.
  double ladder_value(std::size_t leaf, std::span<const double> x) const;
  // Limit estimate at a lattice point: first-order extrapolation of the
  // ladder tail at q = x, clamped to the bracket [V(x), p_{x,r_K}].
  double limit_value(std::size_t leaf, std::size_t q) const;
  bool stable(std::size_t leaf, std::size_t q) const;
  std::size_t unstable_count() const;

 private:
  std::vector<std::size_t> neighbors(std::span<const double> x, double r) const;

  Extremum kind_ = Extremum::kSup;
  std::size_t path_length_ = 0;
  std::size_t num_leaves_ = 0;
  double h_ = 0.0;
  double stabilization_tol_ = 1e-6;
  std::vector<double> axis_;
  std::vector<double> radii_;
  std::vector<std::vector<double>> lattice_;
  // table_[leaf][q * K + k]
  std::vector<std::vector<double>> table_;
  std::vector<std::vector<double>> center_;
};

struct RecoveryReport {
  double max_limit_error = 0.0;    // max |limit - V| over lattice and leaves (finite entries)
  double max_ladder_error = 0.0;   // same for the raw finite-ladder envelope
  bool infinity_mismatch = false;  // -inf vs finite disagreement anywhere
  std::size_t unstable = 0;
};

RecoveryReport recovery_report(const LocalFunctional& f, const Reconstruction& rec);

struct EnvelopePair {
  Reconstruction plus;
  Reconstruction minus;
  // gap[leaf][q] = f+ - f- from the limit estimates
  std::vector<std::vector<double>> gap;
  std::vector<double> max_gap;  // per leaf
};

EnvelopePair envelopes(const LocalFunctional& f, const ReconstructionConfig& config);

struct UscReport {
  struct Witness {
    AdaptedStrategy target;
    AdaptedStrategy direction;  // theta_n = target + direction / n
    std::size_t leaf = 0;
    double value = 0.0;
    double limsup = 0.0;
  };
  bool pass = true;
  std::size_t sequences = 0;
  std::optional<Witness> witness;
};

// limsup V(theta_n) <= V(theta) per leaf for theta_n = theta + u / n, taken
// over the tail n = 2^34 .. 2^40. Targets and directions come from a seeded
// sampler that always includes the zero target and signed unit directions.
UscReport check_usc(const LocalFunctional& f, std::size_t random_sequences, std::uint64_t seed, double box = 1.0,
                    double tol = 1e-9);

// Same test for one explicit sequence theta_n = target + direction / n.
UscReport check_usc_sequence(const LocalFunctional& f, const AdaptedStrategy& target, const AdaptedStrategy& direction,
                             double tol = 1e-9);

}  // namespace nccm
