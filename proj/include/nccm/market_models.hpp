#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nccm/scenario_tree.hpp"

namespace nccm {

struct ModelFlags {
  bool positively_homogeneous = false;
  bool additive = false;
  bool has_analytic_recession = false;
  bool usc = true;
};

// One vector per tree node (indexed like ScenarioTree::nodes()).
using NodeVectors = std::vector<std::vector<double>>;

// Pathwise integrand V(omega, x), x in R^{dT}. Values are finite or -inf.
class MarketModel {
 public:
  MarketModel(std::shared_ptr<const ScenarioTree> tree, int dim);
  virtual ~MarketModel() = default;

  const ScenarioTree& tree() const { return *tree_; }
  const std::shared_ptr<const ScenarioTree>& tree_ptr() const { return tree_; }
  int dim() const { return dim_; }
  int horizon() const { return tree_->horizon(); }
  std::size_t path_length() const { return static_cast<std::size_t>(dim_ * tree_->horizon()); }
  // Node indices from root to leaf, cached.
  const std::vector<int>& path(std::size_t leaf) const { return paths_[leaf]; }

  virtual std::string name() const = 0;
  virtual ModelFlags flags() const = 0;
  virtual double eval(std::size_t leaf, std::span<const double> x) const = 0;

  // Closed-form recession integrand; throws NoAnalyticForm unless flagged.
  virtual double analytic_recession(std::size_t leaf, std::span<const double> z) const;

  // Additive models only: gain on the edge node -> child when the position
  // moves from prev (held before node) to pos (held from node on).
  virtual double step_gain(int node, int child, std::span<const double> prev, std::span<const double> pos) const;

  // Sup-norm Lipschitz constant of x -> V(leaf, x), when known.
  virtual std::optional<double> lipschitz(std::size_t leaf) const;

  std::vector<double> evaluate_hat(const AdaptedStrategy& strategy) const;

 protected:
  void check_length(std::span<const double> x) const;
  // Sequential left fold of step_gain along the leaf's path.
  double additive_eval(std::size_t leaf, std::span<const double> x) const;

 private:
  std::shared_ptr<const ScenarioTree> tree_;
  int dim_;
  std::vector<std::vector<int>> paths_;
};

using ModelPtr = std::shared_ptr<const MarketModel>;

class FrictionlessModel : public MarketModel {
 public:
  FrictionlessModel(std::shared_ptr<const ScenarioTree> tree, NodeVectors prices);

  std::string name() const override { return "frictionless"; }
  ModelFlags flags() const override { return {true, true, true, true}; }
  double eval(std::size_t leaf, std::span<const double> x) const override;
  double analytic_recession(std::size_t leaf, std::span<const double> z) const override;
  double step_gain(int node, int child, std::span<const double> prev, std::span<const double> pos) const override;
  std::optional<double> lipschitz(std::size_t leaf) const override;

  const NodeVectors& prices() const { return prices_; }

 private:
  NodeVectors prices_;
};

struct Box {
  std::vector<double> lo;
  std::vector<double> hi;

  bool contains(std::span<const double> x) const;
  // Recession cone membership, coordinatewise.
  bool recession_contains(std::span<const double> z) const;
};

class CostFunction {
 public:
  enum class Kind { kProportional, kFixed, kConstraint };

  static CostFunction proportional(const ScenarioTree& tree, double lambda);
  static CostFunction fixed(const ScenarioTree& tree, double lambda);
  // Same union of boxes at every decision node.
  static CostFunction constraint(const ScenarioTree& tree, std::vector<Box> boxes);

  Kind kind() const { return kind_; }
  // Per-node parameters, indexed by tree node.
  std::vector<double>& lambda() { return lambda_; }
  const std::vector<double>& lambda() const { return lambda_; }
  std::vector<std::vector<Box>>& sets() { return sets_; }
  const std::vector<std::vector<Box>>& sets() const { return sets_; }

  // g at a decision node; in [0, +inf]. Trade costs act on pos - prev, the
  // constraint kind on pos.
  double eval(int node, std::span<const double> prev, std::span<const double> pos) const;
  // Recession function of g at the node, also in [0, +inf].
  double recession(int node, std::span<const double> prev, std::span<const double> pos) const;

 private:
  Kind kind_ = Kind::kProportional;
  std::vector<double> lambda_;
  std::vector<std::vector<Box>> sets_;
};

class AdditiveModel : public MarketModel {
 public:
  AdditiveModel(std::shared_ptr<const ScenarioTree> tree, NodeVectors prices, std::vector<CostFunction> costs);

  std::string name() const override { return "additive"; }
  ModelFlags flags() const override;
  double eval(std::size_t leaf, std::span<const double> x) const override;
  double analytic_recession(std::size_t leaf, std::span<const double> z) const override;
  double step_gain(int node, int child, std::span<const double> prev, std::span<const double> pos) const override;
  std::optional<double> lipschitz(std::size_t leaf) const override;

  const NodeVectors& prices() const { return prices_; }
  const std::vector<CostFunction>& costs() const { return costs_; }

 private:
  NodeVectors prices_;
  std::vector<CostFunction> costs_;
};

struct LobParams {
  double kappa = 0.5;
  std::vector<double> depth;  // m per node
};

// Quadratic form x'Ax + b'x on R^T.
struct QuadraticForm {
  std::vector<double> a;  // T x T row-major, symmetric
  std::vector<double> b;
  double value(std::span<const double> x) const;
};

class LobModel : public MarketModel {
 public:
  LobModel(std::shared_ptr<const ScenarioTree> tree, NodeVectors prices, LobParams params);

  std::string name() const override { return "lob"; }
  ModelFlags flags() const override { return {false, false, true, true}; }
  double eval(std::size_t leaf, std::span<const double> x) const override;
  double analytic_recession(std::size_t leaf, std::span<const double> z) const override;

  const QuadraticForm& form(std::size_t leaf) const { return forms_[leaf]; }
  bool negative_definite(std::size_t leaf) const { return negative_definite_[leaf]; }
  bool all_negative_definite() const;

 private:
  NodeVectors prices_;
  LobParams params_;
  std::vector<QuadraticForm> forms_;
  std::vector<bool> negative_definite_;
  std::vector<bool> negative_semidefinite_;
};

struct ConsumptionUtility {
  enum class Kind { kLinear, kLog };
  Kind kind = Kind::kLinear;
  std::vector<double> weights;  // per consumption date 1..T; empty means all ones

  double operator()(std::span<const double> c) const;
};

// Strategy per step is (x_t in R^d, c_{t+1} >= 0): decided at t, consumed at t+1.
class ConsumptionModel : public MarketModel {
 public:
  ConsumptionModel(std::shared_ptr<const ScenarioTree> tree, NodeVectors prices, ConsumptionUtility utility,
                   double initial_wealth);

  std::string name() const override { return "consumption"; }
  ModelFlags flags() const override { return {false, false, true, true}; }
  double eval(std::size_t leaf, std::span<const double> x) const override;
  double analytic_recession(std::size_t leaf, std::span<const double> z) const override;

  int assets() const { return dim() - 1; }

 private:
  double net_trading(std::size_t leaf, std::span<const double> x) const;

  NodeVectors prices_;
  ConsumptionUtility utility_;
  double initial_wealth_;
};

// V(w1, x) = |x|, V(w2, x) = -|x| on its own one-step, two-leaf tree.
class TwoStateModel : public MarketModel {
 public:
  TwoStateModel();

  std::string name() const override { return "two_state"; }
  ModelFlags flags() const override { return {true, false, true, true}; }
  double eval(std::size_t leaf, std::span<const double> x) const override;
  double analytic_recession(std::size_t leaf, std::span<const double> z) const override;
};

// Wraps an arbitrary pathwise function; used for synthetic models.
class FunctionModel : public MarketModel {
 public:
  using Fn = std::function<double(std::size_t, std::span<const double>)>;
  FunctionModel(std::shared_ptr<const ScenarioTree> tree, int dim, Fn fn, ModelFlags flags, std::string name,
                Fn recession = nullptr);

  std::string name() const override { return name_; }
  ModelFlags flags() const override { return flags_; }
  double eval(std::size_t leaf, std::span<const double> x) const override { return fn_(leaf, x); }
  double analytic_recession(std::size_t leaf, std::span<const double> z) const override;

 private:
  Fn fn_;
  ModelFlags flags_;
  std::string name_;
  Fn recession_;
};

// Vector-valued integrand; nullopt stands for -inf.
using VectorValue = std::optional<std::vector<double>>;

class VectorModel {
 public:
  VectorModel(std::shared_ptr<const ScenarioTree> tree, int dim, int outputs);
  virtual ~VectorModel() = default;

  const ScenarioTree& tree() const { return *tree_; }
  const std::shared_ptr<const ScenarioTree>& tree_ptr() const { return tree_; }
  int dim() const { return dim_; }
  int outputs() const { return outputs_; }
  std::size_t path_length() const { return static_cast<std::size_t>(dim_ * tree_->horizon()); }
  const std::vector<int>& path(std::size_t leaf) const { return paths_[leaf]; }

  virtual std::string name() const = 0;
  virtual ModelFlags flags() const = 0;
  virtual VectorValue eval(std::size_t leaf, std::span<const double> x) const = 0;

  std::vector<VectorValue> evaluate_hat(const AdaptedStrategy& strategy) const;

 protected:
  void check_length(std::span<const double> x) const;

 private:
  std::shared_ptr<const ScenarioTree> tree_;
  int dim_;
  int outputs_;
  std::vector<std::vector<int>> paths_;
};

using VectorModelPtr = std::shared_ptr<const VectorModel>;

struct KabanovParams {
  enum class Kind { kSigned, kLongOnly };
  int assets = 2;
  Kind kind = Kind::kSigned;
  // Per tree node, assets x assets row-major; read at the node where the
  // order executes (time t + 1 for an order placed at t).
  std::vector<std::vector<double>> costs;
  std::vector<std::vector<double>> rates;

  static KabanovParams uniform(const ScenarioTree& tree, int assets, double pi, Kind kind = Kind::kSigned);
};

// Orders are zero-diagonal matrices flattened row-major without the diagonal:
// entry (i, j) moves asset i into asset j.
class KabanovModel : public VectorModel {
 public:
  KabanovModel(std::shared_ptr<const ScenarioTree> tree, KabanovParams params);

  std::string name() const override { return "kabanov"; }
  ModelFlags flags() const override { return {true, false, true, true}; }
  VectorValue eval(std::size_t leaf, std::span<const double> x) const override;

  const KabanovParams& params() const { return params_; }
  // Throws NegativeOrderNotAllowed for negative entries under long-only.
  void check_orders(const AdaptedStrategy& strategy) const;
  static int order_dim(int assets) { return assets * (assets - 1); }

 private:
  KabanovParams params_;
};

// Stacks scalar models sharing a tree and dimension into one vector model.
class StackedModel : public VectorModel {
 public:
  explicit StackedModel(std::vector<ModelPtr> components);

  std::string name() const override { return "stacked"; }
  ModelFlags flags() const override;
  VectorValue eval(std::size_t leaf, std::span<const double> x) const override;

 private:
  std::vector<ModelPtr> components_;
};

}  // namespace nccm
