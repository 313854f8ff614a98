#include "nccm/scenario_tree.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <unordered_map>

#include "nccm/error.hpp"

namespace nccm {

namespace {

constexpr double kBuildProbTol = 1e-12;

}  // namespace

ScenarioTree ScenarioTree::build(const TreeSpec& spec) {
  require(!spec.nodes.empty(), ErrorCode::kMalformedTree, "tree has no nodes");

  std::unordered_map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < spec.nodes.size(); ++i) {
    const auto& n = spec.nodes[i];
    require(!n.id.empty(), ErrorCode::kMalformedTree, "node with empty id");
    require(by_id.emplace(n.id, i).second, ErrorCode::kMalformedTree, "duplicate node id '" + n.id + "'");
  }

  std::vector<std::vector<std::size_t>> children(spec.nodes.size());
  std::optional<std::size_t> root;
  for (std::size_t i = 0; i < spec.nodes.size(); ++i) {
    const auto& n = spec.nodes[i];
    if (!n.parent) {
      require(!root, ErrorCode::kMalformedTree, "more than one root ('" + n.id + "')");
      require(n.time == 0, ErrorCode::kMalformedTree, "root '" + n.id + "' must be at time 0");
      root = i;
      continue;
    }
    auto it = by_id.find(*n.parent);
    require(it != by_id.end(), ErrorCode::kMalformedTree,
            "node '" + n.id + "' has dangling parent '" + *n.parent + "'");
    const auto& p = spec.nodes[it->second];
    require(n.time == p.time + 1, ErrorCode::kMalformedTree,
            "time gap between '" + p.id + "' (t=" + std::to_string(p.time) + ") and '" + n.id +
                "' (t=" + std::to_string(n.time) + ")");
    require(n.prob > 0.0 && n.prob <= 1.0 + kBuildProbTol && std::isfinite(n.prob), ErrorCode::kProbabilityError,
            "conditional probability of '" + n.id + "' must lie in (0,1]");
    children[it->second].push_back(i);
  }
  require(root.has_value(), ErrorCode::kMalformedTree, "tree has no root");

  ScenarioTree tree;
  std::vector<int> new_index(spec.nodes.size(), -1);
  std::deque<std::size_t> queue{*root};
  while (!queue.empty()) {
    std::size_t s = queue.front();
    queue.pop_front();
    new_index[s] = static_cast<int>(tree.nodes_.size());
    Node node;
    node.id = spec.nodes[s].id;
    node.time = spec.nodes[s].time;
    node.cond_prob = spec.nodes[s].parent ? spec.nodes[s].prob : 1.0;
    tree.nodes_.push_back(std::move(node));
    for (std::size_t c : children[s]) queue.push_back(c);
  }
  require(tree.nodes_.size() == spec.nodes.size(), ErrorCode::kMalformedTree,
          "nodes unreachable from the root (cycle or second component)");

  for (std::size_t s = 0; s < spec.nodes.size(); ++s) {
    int i = new_index[s];
    for (std::size_t c : children[s]) {
      tree.nodes_[static_cast<std::size_t>(i)].children.push_back(new_index[c]);
      tree.nodes_[static_cast<std::size_t>(new_index[c])].parent = i;
    }
  }

  int horizon = 0;
  for (const auto& n : tree.nodes_) horizon = std::max(horizon, n.time);
  require(horizon >= 1, ErrorCode::kMalformedTree, "horizon must be at least 1");
  tree.horizon_ = horizon;

  for (std::size_t i = 0; i < tree.nodes_.size(); ++i) {
    auto& n = tree.nodes_[i];
    if (n.parent >= 0) n.abs_prob = tree.nodes_[static_cast<std::size_t>(n.parent)].abs_prob * n.cond_prob;
    if (n.children.empty()) {
      require(n.time == horizon, ErrorCode::kMalformedTree,
              "leaf '" + n.id + "' at time " + std::to_string(n.time) + " before the horizon");
      n.leaf_index = static_cast<int>(tree.leaves_.size());
      tree.leaves_.push_back(static_cast<int>(i));
    } else {
      double sum = 0.0;
      for (int c : n.children) sum += tree.nodes_[static_cast<std::size_t>(c)].cond_prob;
      require(std::abs(sum - 1.0) <= kBuildProbTol, ErrorCode::kProbabilityError,
              "child probabilities of '" + n.id + "' sum to " + std::to_string(sum));
      n.decision_index = static_cast<int>(tree.decision_nodes_.size());
      tree.decision_nodes_.push_back(static_cast<int>(i));
    }
  }
  return tree;
}

ScenarioTree ScenarioTree::binomial(int horizon, double p_up) {
  TreeSpec spec;
  spec.nodes.push_back({"r", 0, std::nullopt, 1.0});
  std::vector<std::string> layer{"r"};
  for (int t = 1; t <= horizon; ++t) {
    std::vector<std::string> next;
    for (const auto& id : layer) {
      std::string up = t == 1 ? "u" : id + "u";
      std::string dn = t == 1 ? "d" : id + "d";
      spec.nodes.push_back({up, t, id, p_up});
      spec.nodes.push_back({dn, t, id, 1.0 - p_up});
      next.push_back(up);
      next.push_back(dn);
    }
    layer = std::move(next);
  }
  return build(spec);
}

ScenarioTree ScenarioTree::uniform(int horizon, int branching) {
  TreeSpec spec;
  spec.nodes.push_back({"n", 0, std::nullopt, 1.0});
  std::vector<std::string> layer{"n"};
  for (int t = 1; t <= horizon; ++t) {
    std::vector<std::string> next;
    for (const auto& id : layer) {
      double rest = 1.0;
      for (int b = 0; b < branching; ++b) {
        std::string child = id + "." + std::to_string(b);
        double p = b + 1 == branching ? rest : 1.0 / branching;
        rest -= p;
        spec.nodes.push_back({child, t, id, p});
        next.push_back(child);
      }
    }
    layer = std::move(next);
  }
  return build(spec);
}

ScenarioTree ScenarioTree::single_path(int horizon) { return uniform(horizon, 1); }

std::vector<int> ScenarioTree::path(std::size_t leaf) const {
  std::vector<int> out(static_cast<std::size_t>(horizon_) + 1);
  int n = leaves_.at(leaf);
  for (int t = horizon_; t >= 0; --t) {
    out[static_cast<std::size_t>(t)] = n;
    n = nodes_[static_cast<std::size_t>(n)].parent;
  }
  return out;
}

int ScenarioTree::ancestor(int node, int t) const {
  int n = node;
  while (nodes_[static_cast<std::size_t>(n)].time > t) n = nodes_[static_cast<std::size_t>(n)].parent;
  return n;
}

std::vector<int> ScenarioTree::nodes_at(int t) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].time == t) out.push_back(static_cast<int>(i));
  }
  return out;
}

std::vector<std::size_t> ScenarioTree::leaves_under(int node) const {
  std::vector<std::size_t> out;
  int t = nodes_[static_cast<std::size_t>(node)].time;
  for (std::size_t l = 0; l < leaves_.size(); ++l) {
    if (ancestor(leaves_[l], t) == node) out.push_back(l);
  }
  return out;
}

std::vector<std::vector<std::size_t>> ScenarioTree::ft_sets(int t) const {
  std::vector<std::vector<std::size_t>> out;
  for (int n : nodes_at(t)) out.push_back(leaves_under(n));
  return out;
}

std::optional<int> ScenarioTree::find(std::string_view id) const {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].id == id) return static_cast<int>(i);
  }
  return std::nullopt;
}

AdaptedStrategy::AdaptedStrategy(const ScenarioTree& tree, int dim)
    : dim_(dim), values_(tree.num_decision_nodes() * static_cast<std::size_t>(dim), 0.0) {
  require(dim >= 1, ErrorCode::kDimensionMismatch, "strategy dimension must be >= 1");
}

std::span<double> AdaptedStrategy::at(const ScenarioTree& tree, int node) {
  int k = tree.node(node).decision_index;
  require(k >= 0, ErrorCode::kInvalidArgument, "strategy is not defined at terminal node " + tree.node(node).id);
  return at_decision(static_cast<std::size_t>(k));
}

std::span<const double> AdaptedStrategy::at(const ScenarioTree& tree, int node) const {
  int k = tree.node(node).decision_index;
  require(k >= 0, ErrorCode::kInvalidArgument, "strategy is not defined at terminal node " + tree.node(node).id);
  return at_decision(static_cast<std::size_t>(k));
}

double AdaptedStrategy::sup_norm() const {
  double m = 0.0;
  for (double v : values_) m = std::max(m, std::abs(v));
  return m;
}

bool AdaptedStrategy::is_zero() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return v == 0.0; });
}

PathVector restrict_to_path(const ScenarioTree& tree, const AdaptedStrategy& strategy, std::size_t leaf) {
  require(strategy.num_decisions() == tree.num_decision_nodes(), ErrorCode::kDimensionMismatch,
          "strategy does not match tree");
  const auto nodes = tree.path(leaf);
  const auto d = static_cast<std::size_t>(strategy.dim());
  PathVector x(d * static_cast<std::size_t>(tree.horizon()));
  for (int t = 0; t < tree.horizon(); ++t) {
    auto v = strategy.at(tree, nodes[static_cast<std::size_t>(t)]);
    std::copy(v.begin(), v.end(), x.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(t) * d));
  }
  return x;
}

AdaptedStrategy constant_strategy(const ScenarioTree& tree, int dim, std::span<const double> x) {
  require(x.size() == static_cast<std::size_t>(dim * tree.horizon()), ErrorCode::kDimensionMismatch,
          "path vector length must be d*T");
  AdaptedStrategy s(tree, dim);
  for (std::size_t k = 0; k < tree.num_decision_nodes(); ++k) {
    int t = tree.node(tree.decision_nodes()[k]).time;
    auto dst = s.at_decision(k);
    for (int i = 0; i < dim; ++i) dst[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(t * dim + i)];
  }
  return s;
}

std::vector<double> axis_grid(double box, int n) {
  require(n >= 1, ErrorCode::kInvalidGrid, "grid needs at least one point");
  require(box >= 0.0 && std::isfinite(box), ErrorCode::kInvalidGrid, "box must be finite and nonnegative");
  if (n == 1) return {0.0};
  std::vector<double> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = -box + 2.0 * box * i / (n - 1);
  // Pin the midpoint to an exact zero so A1 strategies are on the grid.
  if (n % 2 == 1) out[static_cast<std::size_t>(n / 2)] = 0.0;
  return out;
}

std::vector<std::vector<double>> product_grid(const std::vector<double>& axis, int dim) {
  require(!axis.empty(), ErrorCode::kInvalidGrid, "empty axis grid");
  std::vector<std::vector<double>> out{{}};
  for (int i = 0; i < dim; ++i) {
    std::vector<std::vector<double>> next;
    next.reserve(out.size() * axis.size());
    for (const auto& p : out) {
      for (double a : axis) {
        auto q = p;
        q.push_back(a);
        next.push_back(std::move(q));
      }
    }
    out = std::move(next);
  }
  return out;
}

NodeGrids uniform_node_grids(const ScenarioTree& tree, int dim, double box, int points_per_axis) {
  auto pts = product_grid(axis_grid(box, points_per_axis), dim);
  return NodeGrids(tree.num_decision_nodes(), pts);
}

AdaptedGridEnumerator::AdaptedGridEnumerator(const ScenarioTree& tree, NodeGrids grids, int dim,
                                             std::uint64_t cap)
    : tree_(&tree), grids_(std::move(grids)), dim_(dim) {
  require(grids_.size() == tree.num_decision_nodes(), ErrorCode::kInvalidGrid,
          "one grid per decision node required");
  long double total = 1.0L;
  for (const auto& g : grids_) {
    require(!g.empty(), ErrorCode::kInvalidGrid, "empty grid at a decision node");
    for (const auto& p : g) {
      require(p.size() == static_cast<std::size_t>(dim), ErrorCode::kDimensionMismatch, "grid point dimension");
    }
    total *= static_cast<long double>(g.size());
  }
  require(total <= static_cast<long double>(cap), ErrorCode::kBudgetExceeded,
          "adapted grid has " + std::to_string(static_cast<double>(total)) + " strategies, cap is " +
              std::to_string(cap));
  count_ = static_cast<std::uint64_t>(total);
  digits_.assign(grids_.size(), 0);
}

void AdaptedGridEnumerator::reset() {
  std::fill(digits_.begin(), digits_.end(), 0);
  started_ = false;
  done_ = false;
}

bool AdaptedGridEnumerator::next(AdaptedStrategy& out) {
  if (done_) return false;
  if (!started_) {
    started_ = true;
  } else {
    std::size_t k = digits_.size();
    while (k > 0) {
      --k;
      if (++digits_[k] < grids_[k].size()) break;
      digits_[k] = 0;
      if (k == 0) {
        done_ = true;
        return false;
      }
    }
    if (digits_.empty()) {
      done_ = true;
      return false;
    }
  }
  if (out.dim() != dim_ || out.num_decisions() != grids_.size()) out = AdaptedStrategy(*tree_, dim_);
  for (std::size_t k = 0; k < digits_.size(); ++k) {
    const auto& p = grids_[k][digits_[k]];
    std::copy(p.begin(), p.end(), out.at_decision(k).begin());
  }
  return true;
}

}  // namespace nccm
