#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nccm/market_models.hpp"
#include "nccm/recession.hpp"

namespace nccm {

enum class NaStatus { kArbitrage, kNaCertified, kNaUpToSearch };

const char* to_string(NaStatus s);

struct NodeCertificate {
  int node = 0;
  std::vector<double> weights;          // per child, in child order
  double min_weight = 0.0;
  std::vector<double> singular_values;  // of the child-increment matrix
  std::size_t rank = 0;
  bool martingale_ok = false;
  bool full_rank = false;
};

struct NaVerdict {
  NaStatus status = NaStatus::kNaUpToSearch;
  std::optional<AdaptedStrategy> witness;
  std::string witness_kind;            // "one-step", "redundancy", "search"
  std::vector<double> witness_values;  // recession value of the witness per leaf
  std::vector<NodeCertificate> certificate;
  double margin = 0.0;                 // best min-over-leaves value on the unit sphere
  std::size_t candidates = 0;
  std::string analytic_certificate;    // set when a closed-form argument applies
};

// Exact decision for recession integrands of the form sum_t <x_t, c_t(omega)>
// with c_t measurable at time t + 1.
NaVerdict na_check_linear(const RecessionIntegrand& rec, const ScenarioTree& tree, int dim);

struct SphereSearchConfig {
  std::size_t random_candidates = 2000;
  std::size_t full_lattice_cap = 6561;  // use {-1,0,1}^N when 3^N is at most this
  int refine_rounds = 200;
  std::size_t refine_starts = 8;        // best candidates refined by pattern search
  double zero_tol = 1e-12;              // margins this close to 0 count as 0
  std::uint64_t seed = 1;
  std::size_t budget = 5'000'000;       // recession evaluations
};

// Search over unit sup-norm strategies for V^inf(theta) >= 0 at every leaf.
NaVerdict na_check_homogeneous(const RecessionIntegrand& rec, const ScenarioTree& tree, int dim,
                               const SphereSearchConfig& config = {});

// Closed-form NA arguments for particular models, empty when none applies:
// one-dimensional strategy spaces (sign exhaustion) and negative definite
// order-book impact forms.
std::string analytic_na_certificate(ModelPtr model);

// Dispatch: linear check for frictionless models, sphere search on the
// analytic recession otherwise, numeric recession as last resort.
NaVerdict check_na(ModelPtr model, const SphereSearchConfig& config = {});

struct ViabilityReport {
  bool unbounded_suspect = false;
  double sup_max_gain = 0.0;   // over admissible samples, max over leaves
  double sup_min_gain = 0.0;   // over admissible samples, min over leaves
  std::size_t samples = 0;
  std::size_t admissible = 0;
  std::vector<double> growth;  // best max-gain per scale 2^0 .. 2^k
  std::optional<AdaptedStrategy> witness;
};

// Samples strategies of growing sup-norm whose gains dominate f and reports
// how large the dominated claims get.
ViabilityReport viability_probe(const MarketModel& model, std::span<const double> f, std::size_t directions,
                                std::uint64_t seed, double cap = 1e6);

enum class DominatorStatus { kNotSearched, kNoLinearDominator, kFoundNaDominator, kInconclusive };

const char* to_string(DominatorStatus s);

struct DominationReport {
  bool dominated = true;
  std::size_t points = 0;
  struct Violation {
    std::size_t leaf = 0;
    std::vector<double> x;
    double a = 0.0;
    double b = 0.0;
  };
  std::optional<Violation> violation;
  DominatorStatus dominator = DominatorStatus::kNotSearched;
  NodeVectors dominator_increments;  // per node, zero at the root
};

// V_A <= V_B on every leaf and grid point; optionally searches for a linear
// frictionless dominator of V_A that is arbitrage free.
DominationReport domination_check(const MarketModel& a, const MarketModel& b, double box, int points);
DominationReport linear_dominator_search(const MarketModel& a, double box, int points);

}  // namespace nccm
