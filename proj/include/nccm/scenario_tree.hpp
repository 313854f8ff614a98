#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace nccm {

struct NodeSpec {
  std::string id;
  int time = 0;
  std::optional<std::string> parent;
  // Conditional probability of reaching this node from its parent; ignored
  // for the root.
  double prob = 1.0;
};

struct TreeSpec {
  std::vector<NodeSpec> nodes;
};

// Finite filtered probability space. Nodes at time t are the atoms of F_t;
// every leaf sits at the horizon and has strictly positive probability.
// Nodes are stored breadth-first, so the root is node 0 and children of a
// node are contiguous in spec order.
class ScenarioTree {
 public:
  struct Node {
    std::string id;
    int time = 0;
    int parent = -1;
    std::vector<int> children;
    double cond_prob = 1.0;
    double abs_prob = 1.0;
    int leaf_index = -1;      // position in leaves(), -1 for inner nodes
    int decision_index = -1;  // position in decision_nodes(), -1 for leaves
  };

  static ScenarioTree build(const TreeSpec& spec);

  // Convenience constructors used throughout tests and examples.
  static ScenarioTree binomial(int horizon, double p_up = 0.5);
  static ScenarioTree uniform(int horizon, int branching);
  static ScenarioTree single_path(int horizon);

  int horizon() const { return horizon_; }
  std::size_t num_nodes() const { return nodes_.size(); }
  const Node& node(int i) const { return nodes_.at(static_cast<std::size_t>(i)); }
  const std::vector<Node>& nodes() const { return nodes_; }
  int root() const { return 0; }

  const std::vector<int>& leaves() const { return leaves_; }
  std::size_t num_leaves() const { return leaves_.size(); }
  const std::vector<int>& decision_nodes() const { return decision_nodes_; }
  std::size_t num_decision_nodes() const { return decision_nodes_.size(); }
  double leaf_prob(std::size_t leaf) const {
    return nodes_[static_cast<std::size_t>(leaves_.at(leaf))].abs_prob;
  }

  // Node indices from the root to the given leaf (length T + 1).
  std::vector<int> path(std::size_t leaf) const;
  // Ancestor of node at time t (the node itself when t equals its time).
  int ancestor(int node, int t) const;
  std::vector<int> nodes_at(int t) const;
  // Leaf positions below a node, in leaf order.
  std::vector<std::size_t> leaves_under(int node) const;
  // Atoms of F_t as sets of leaf positions, one per time-t node.
  std::vector<std::vector<std::size_t>> ft_sets(int t) const;

  std::optional<int> find(std::string_view id) const;

 private:
  int horizon_ = 0;
  std::vector<Node> nodes_;
  std::vector<int> leaves_;
  std::vector<int> decision_nodes_;
};

using PathVector = std::vector<double>;

// Map from each non-terminal node to a vector in R^d.
class AdaptedStrategy {
 public:
  AdaptedStrategy() = default;
  AdaptedStrategy(const ScenarioTree& tree, int dim);

  int dim() const { return dim_; }
  std::size_t num_decisions() const { return dim_ == 0 ? 0 : values_.size() / static_cast<std::size_t>(dim_); }

  std::span<double> at_decision(std::size_t k) {
    return {values_.data() + k * static_cast<std::size_t>(dim_), static_cast<std::size_t>(dim_)};
  }
  std::span<const double> at_decision(std::size_t k) const {
    return {values_.data() + k * static_cast<std::size_t>(dim_), static_cast<std::size_t>(dim_)};
  }
  std::span<double> at(const ScenarioTree& tree, int node);
  std::span<const double> at(const ScenarioTree& tree, int node) const;

  std::vector<double>& raw() { return values_; }
  const std::vector<double>& raw() const { return values_; }
  double sup_norm() const;
  bool is_zero() const;

  bool operator==(const AdaptedStrategy&) const = default;

 private:
  int dim_ = 0;
  std::vector<double> values_;
};

// Restriction of a strategy to the root-to-leaf path, concatenated by time.
PathVector restrict_to_path(const ScenarioTree& tree, const AdaptedStrategy& strategy, std::size_t leaf);

// Deterministic strategy: the same x_t at every time-t node.
AdaptedStrategy constant_strategy(const ScenarioTree& tree, int dim, std::span<const double> x);

// n equally spaced points on [-box, box]; n == 1 gives {0}.
std::vector<double> axis_grid(double box, int n);
// Cartesian power of an axis grid, lexicographic order.
std::vector<std::vector<double>> product_grid(const std::vector<double>& axis, int dim);

// Candidate values per decision node (indexed like decision_nodes()).
using NodeGrids = std::vector<std::vector<std::vector<double>>>;

NodeGrids uniform_node_grids(const ScenarioTree& tree, int dim, double box, int points_per_axis);

// Odometer over every adapted strategy whose node values lie on the node
// grids. The last decision node varies fastest.
class AdaptedGridEnumerator {
 public:
  AdaptedGridEnumerator(const ScenarioTree& tree, NodeGrids grids, int dim,
                        std::uint64_t cap = 10'000'000);

  std::uint64_t count() const { return count_; }
  // Fills `out` with the next strategy; false once exhausted.
  bool next(AdaptedStrategy& out);
  void reset();

 private:
  const ScenarioTree* tree_;
  NodeGrids grids_;
  int dim_;
  std::uint64_t count_ = 1;
  std::vector<std::size_t> digits_;
  bool started_ = false;
  bool done_ = false;
};

}  // namespace nccm
