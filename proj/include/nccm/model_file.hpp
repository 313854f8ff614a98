#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "nccm/cones.hpp"
#include "nccm/market_models.hpp"
#include "nccm/scenario_tree.hpp"

namespace nccm {

// Numeric knobs; every key is optional in the file.
struct RunConfig {
  double box = 1.0;
  int grid = 101;
  std::uint64_t seed = 1;
  double tol = 1e-9;
  std::uint64_t budget = 50'000'000;
  int samples = 200;           // check-axioms: strategies per (t, atom)
  int lattice_points = 41;     // reconstruct
  int ladder_depth = 8;
  int recession_points = 21;
  std::size_t na_candidates = 2000;
};

struct ModelFile {
  std::string source;
  std::shared_ptr<const ScenarioTree> tree;
  ModelPtr model;                    // scalar model, null for vector models
  VectorModelPtr vector_model;       // null for scalar models
  std::optional<RandomCone> cone;
  std::optional<std::vector<double>> claim;  // per leaf
  std::optional<std::string> utility;
  RunConfig config;
};

// Schema errors carry the offending field path and, for syntax errors, the
// line and column.
ModelFile parse_model_file(const std::string& text, const std::string& source = "<string>");
ModelFile load_model_file(const std::string& path);

// CSV with header "leaf_id,value"; ids must match the tree leaves.
std::vector<double> load_claim_csv(const std::string& path, const ScenarioTree& tree);

}  // namespace nccm
