#include "nccm/market_models.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "nccm/error.hpp"
#include "nccm/extended.hpp"

namespace nccm {

namespace {

std::vector<std::vector<int>> all_paths(const ScenarioTree& tree) {
  std::vector<std::vector<int>> out;
  out.reserve(tree.num_leaves());
  for (std::size_t l = 0; l < tree.num_leaves(); ++l) out.push_back(tree.path(l));
  return out;
}

void check_prices(const ScenarioTree& tree, const NodeVectors& prices, std::size_t d) {
  require(prices.size() == tree.num_nodes(), ErrorCode::kDimensionMismatch, "one price vector per node required");
  for (std::size_t i = 0; i < prices.size(); ++i) {
    require(prices[i].size() == d, ErrorCode::kDimensionMismatch,
            "price vector at node '" + tree.node(static_cast<int>(i)).id + "' has wrong length");
    for (double v : prices[i]) {
      require(std::isfinite(v), ErrorCode::kInvalidArgument, "non-finite price at '" + tree.node(static_cast<int>(i)).id + "'");
    }
  }
}

double dot_increment(std::span<const double> pos, const std::vector<double>& s_child, const std::vector<double>& s_node) {
  double acc = 0.0;
  for (std::size_t i = 0; i < pos.size(); ++i) acc += pos[i] * (s_child[i] - s_node[i]);
  return acc;
}

double increment_l1(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::abs(a[i] - b[i]);
  return acc;
}

}  // namespace

MarketModel::MarketModel(std::shared_ptr<const ScenarioTree> tree, int dim)
    : tree_(std::move(tree)), dim_(dim) {
  require(tree_ != nullptr, ErrorCode::kInvalidArgument, "model needs a tree");
  require(dim >= 1, ErrorCode::kDimensionMismatch, "model dimension must be >= 1");
  paths_ = all_paths(*tree_);
}

double MarketModel::analytic_recession(std::size_t, std::span<const double>) const {
  throw Error(ErrorCode::kNoAnalyticForm, "model '" + name() + "' has no closed-form recession");
}

double MarketModel::step_gain(int, int, std::span<const double>, std::span<const double>) const {
  throw Error(ErrorCode::kInvalidArgument, "model '" + name() + "' is not additive");
}

std::optional<double> MarketModel::lipschitz(std::size_t) const { return std::nullopt; }

std::vector<double> MarketModel::evaluate_hat(const AdaptedStrategy& strategy) const {
  require(strategy.dim() == dim_, ErrorCode::kDimensionMismatch,
          "strategy dimension " + std::to_string(strategy.dim()) + " vs model dimension " + std::to_string(dim_));
  std::vector<double> out(tree_->num_leaves());
  for (std::size_t l = 0; l < out.size(); ++l) out[l] = eval(l, restrict_to_path(*tree_, strategy, l));
  return out;
}

void MarketModel::check_length(std::span<const double> x) const {
  require(x.size() == path_length(), ErrorCode::kDimensionMismatch,
          "path vector has length " + std::to_string(x.size()) + ", expected " + std::to_string(path_length()));
}

double MarketModel::additive_eval(std::size_t leaf, std::span<const double> x) const {
  check_length(x);
  const auto& p = paths_.at(leaf);
  const auto d = static_cast<std::size_t>(dim_);
  std::vector<double> zero(d, 0.0);
  double acc = 0.0;
  for (int t = 0; t < horizon(); ++t) {
    auto ut = static_cast<std::size_t>(t);
    std::span<const double> prev = t == 0 ? std::span<const double>(zero) : x.subspan((ut - 1) * d, d);
    acc = ext::add(acc, step_gain(p[ut], p[ut + 1], prev, x.subspan(ut * d, d)));
  }
  return acc;
}

FrictionlessModel::FrictionlessModel(std::shared_ptr<const ScenarioTree> tree, NodeVectors prices)
    : MarketModel(tree, prices.empty() ? 0 : static_cast<int>(prices.front().size())), prices_(std::move(prices)) {
  check_prices(this->tree(), prices_, static_cast<std::size_t>(dim()));
}

double FrictionlessModel::eval(std::size_t leaf, std::span<const double> x) const { return additive_eval(leaf, x); }

double FrictionlessModel::analytic_recession(std::size_t leaf, std::span<const double> z) const {
  return eval(leaf, z);
}

double FrictionlessModel::step_gain(int node, int child, std::span<const double>, std::span<const double> pos) const {
  return dot_increment(pos, prices_[static_cast<std::size_t>(child)], prices_[static_cast<std::size_t>(node)]);
}

std::optional<double> FrictionlessModel::lipschitz(std::size_t leaf) const {
  const auto& p = path(leaf);
  double l = 0.0;
  for (std::size_t t = 0; t + 1 < p.size(); ++t) {
    l += increment_l1(prices_[static_cast<std::size_t>(p[t + 1])], prices_[static_cast<std::size_t>(p[t])]);
  }
  return l;
}

bool Box::contains(std::span<const double> x) const {
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] < lo[i] || x[i] > hi[i]) return false;
  }
  return true;
}

bool Box::recession_contains(std::span<const double> z) const {
  for (std::size_t i = 0; i < z.size(); ++i) {
    bool lo_open = ext::is_neg_inf(lo[i]);
    bool hi_open = ext::is_pos_inf(hi[i]);
    if (!lo_open && !hi_open && z[i] != 0.0) return false;
    if (!lo_open && hi_open && z[i] < 0.0) return false;
    if (lo_open && !hi_open && z[i] > 0.0) return false;
  }
  return true;
}

CostFunction CostFunction::proportional(const ScenarioTree& tree, double lambda) {
  require(lambda >= 0.0 && std::isfinite(lambda), ErrorCode::kInvalidArgument, "cost rate must be finite and >= 0");
  CostFunction c;
  c.kind_ = Kind::kProportional;
  c.lambda_.assign(tree.num_nodes(), lambda);
  return c;
}

CostFunction CostFunction::fixed(const ScenarioTree& tree, double lambda) {
  require(lambda >= 0.0 && std::isfinite(lambda), ErrorCode::kInvalidArgument, "fixed fee must be finite and >= 0");
  CostFunction c;
  c.kind_ = Kind::kFixed;
  c.lambda_.assign(tree.num_nodes(), lambda);
  return c;
}

CostFunction CostFunction::constraint(const ScenarioTree& tree, std::vector<Box> boxes) {
  for (const auto& b : boxes) {
    require(b.lo.size() == b.hi.size(), ErrorCode::kDimensionMismatch, "box bounds differ in length");
    for (std::size_t i = 0; i < b.lo.size(); ++i) {
      require(b.lo[i] <= b.hi[i], ErrorCode::kInvalidArgument, "empty box in constraint set");
    }
  }
  CostFunction c;
  c.kind_ = Kind::kConstraint;
  c.sets_.assign(tree.num_nodes(), boxes);
  return c;
}

double CostFunction::eval(int node, std::span<const double> prev, std::span<const double> pos) const {
  auto n = static_cast<std::size_t>(node);
  switch (kind_) {
    case Kind::kProportional: {
      double acc = 0.0;
      for (std::size_t i = 0; i < pos.size(); ++i) acc += std::abs(pos[i] - prev[i]);
      return lambda_[n] * acc;
    }
    case Kind::kFixed:
      for (std::size_t i = 0; i < pos.size(); ++i) {
        if (pos[i] != prev[i]) return lambda_[n];
      }
      return 0.0;
    case Kind::kConstraint: {
      const auto& boxes = sets_[n];
      if (boxes.empty()) return 0.0;
      for (const auto& b : boxes) {
        require(b.lo.size() == pos.size(), ErrorCode::kDimensionMismatch, "constraint box dimension");
        if (b.contains(pos)) return 0.0;
      }
      return ext::kPosInf;
    }
  }
  return 0.0;
}

double CostFunction::recession(int node, std::span<const double> prev, std::span<const double> pos) const {
  auto n = static_cast<std::size_t>(node);
  switch (kind_) {
    case Kind::kProportional:
      return eval(node, prev, pos);
    case Kind::kFixed:
      return 0.0;
    case Kind::kConstraint: {
      const auto& boxes = sets_[n];
      if (boxes.empty()) return 0.0;
      for (const auto& b : boxes) {
        if (b.recession_contains(pos)) return 0.0;
      }
      return ext::kPosInf;
    }
  }
  return 0.0;
}

AdditiveModel::AdditiveModel(std::shared_ptr<const ScenarioTree> tree, NodeVectors prices,
                             std::vector<CostFunction> costs)
    : MarketModel(tree, prices.empty() ? 0 : static_cast<int>(prices.front().size())),
      prices_(std::move(prices)),
      costs_(std::move(costs)) {
  check_prices(this->tree(), prices_, static_cast<std::size_t>(dim()));
  for (const auto& c : costs_) {
    bool sized = c.kind() == CostFunction::Kind::kConstraint ? c.sets().size() == this->tree().num_nodes()
                                                             : c.lambda().size() == this->tree().num_nodes();
    require(sized, ErrorCode::kDimensionMismatch, "cost parameters must be given per node");
  }
}

ModelFlags AdditiveModel::flags() const {
  bool homogeneous = std::all_of(costs_.begin(), costs_.end(),
                                 [](const CostFunction& c) { return c.kind() == CostFunction::Kind::kProportional; });
  return {homogeneous, true, true, true};
}

double AdditiveModel::eval(std::size_t leaf, std::span<const double> x) const { return additive_eval(leaf, x); }

double AdditiveModel::step_gain(int node, int child, std::span<const double> prev, std::span<const double> pos) const {
  double gain = dot_increment(pos, prices_[static_cast<std::size_t>(child)], prices_[static_cast<std::size_t>(node)]);
  for (const auto& c : costs_) {
    double g = c.eval(node, prev, pos);
    if (ext::is_pos_inf(g)) return ext::kNegInf;
    gain -= g;
  }
  return gain;
}

double AdditiveModel::analytic_recession(std::size_t leaf, std::span<const double> z) const {
  check_length(z);
  const auto& p = path(leaf);
  const auto d = static_cast<std::size_t>(dim());
  std::vector<double> zero(d, 0.0);
  double acc = 0.0;
  for (int t = 0; t < horizon(); ++t) {
    auto ut = static_cast<std::size_t>(t);
    std::span<const double> prev = t == 0 ? std::span<const double>(zero) : z.subspan((ut - 1) * d, d);
    auto pos = z.subspan(ut * d, d);
    double gain = dot_increment(pos, prices_[static_cast<std::size_t>(p[ut + 1])], prices_[static_cast<std::size_t>(p[ut])]);
    for (const auto& c : costs_) {
      double g = c.recession(p[ut], prev, pos);
      if (ext::is_pos_inf(g)) return ext::kNegInf;
      gain -= g;
    }
    acc += gain;
  }
  return acc;
}

std::optional<double> AdditiveModel::lipschitz(std::size_t leaf) const {
  for (const auto& c : costs_) {
    if (c.kind() != CostFunction::Kind::kProportional) return std::nullopt;
  }
  const auto& p = path(leaf);
  double l = 0.0;
  for (std::size_t t = 0; t + 1 < p.size(); ++t) {
    l += increment_l1(prices_[static_cast<std::size_t>(p[t + 1])], prices_[static_cast<std::size_t>(p[t])]);
    for (const auto& c : costs_) l += 2.0 * dim() * c.lambda()[static_cast<std::size_t>(p[t])];
  }
  return l;
}

double QuadraticForm::value(std::span<const double> x) const {
  const std::size_t n = b.size();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < n; ++j) row += a[i * n + j] * x[j];
    acc += x[i] * row + b[i] * x[i];
  }
  return acc;
}

LobModel::LobModel(std::shared_ptr<const ScenarioTree> tree, NodeVectors prices, LobParams params)
    : MarketModel(tree, 1), prices_(std::move(prices)), params_(std::move(params)) {
  check_prices(this->tree(), prices_, 1);
  require(params_.kappa > 0.0 && params_.kappa < 1.0, ErrorCode::kInvalidArgument, "kappa must lie in (0,1)");
  require(params_.depth.size() == this->tree().num_nodes(), ErrorCode::kDimensionMismatch, "one depth per node");
  for (double m : params_.depth) require(m > 0.0 && std::isfinite(m), ErrorCode::kInvalidArgument, "depth must be > 0");

  const auto n = static_cast<std::size_t>(horizon());
  const double k = params_.kappa;
  for (std::size_t leaf = 0; leaf < this->tree().num_leaves(); ++leaf) {
    const auto& p = path(leaf);
    QuadraticForm q{std::vector<double>(n * n, 0.0), std::vector<double>(n, 0.0)};
    std::vector<double> l_prev(n, 0.0), l_cur(n, 0.0);
    for (std::size_t t = 0; t < n; ++t) {
      auto node = static_cast<std::size_t>(p[t]);
      q.b[t] += prices_[static_cast<std::size_t>(p[t + 1])][0] - prices_[node][0];
      for (std::size_t j = 0; j < n; ++j) {
        double dl = k * (l_cur[j] - l_prev[j]);
        q.a[t * n + j] += 0.5 * dl;
        q.a[j * n + t] += 0.5 * dl;
      }
      const double m = params_.depth[node];
      q.a[t * n + t] -= m;
      if (t > 0) {
        q.a[(t - 1) * n + (t - 1)] -= m;
        q.a[t * n + (t - 1)] += m;
        q.a[(t - 1) * n + t] += m;
      }
      if (t + 1 < n) {
        std::vector<double> l_next(n, 0.0);
        const double m_next = params_.depth[static_cast<std::size_t>(p[t + 1])];
        for (std::size_t j = 0; j < n; ++j) l_next[j] = k * l_cur[j];
        l_next[t + 1] += 2.0 * m_next;
        l_next[t] -= 2.0 * m_next;
        l_prev = l_cur;
        l_cur = l_next;
      }
    }
    Eigen::Map<const Eigen::MatrixXd> a(q.a.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
    double top = es.eigenvalues().maxCoeff();
    double scale = std::max(1e-300, es.eigenvalues().cwiseAbs().maxCoeff());
    negative_definite_.push_back(top < -1e-12 * scale);
    negative_semidefinite_.push_back(top <= 1e-12 * scale);
    forms_.push_back(std::move(q));
  }
}

double LobModel::eval(std::size_t leaf, std::span<const double> x) const {
  check_length(x);
  const auto& p = path(leaf);
  const double k = params_.kappa;
  double v = 0.0, l_prev = 0.0, l_cur = 0.0, x_prev = 0.0;
  for (std::size_t t = 0; t < x.size(); ++t) {
    auto node = static_cast<std::size_t>(p[t]);
    double ds = prices_[static_cast<std::size_t>(p[t + 1])][0] - prices_[node][0];
    double dx = x[t] - x_prev;
    v = v + x[t] * (ds + k * (l_cur - l_prev)) - params_.depth[node] * dx * dx;
    if (t + 1 < x.size()) {
      double l_next = k * l_cur + 2.0 * params_.depth[static_cast<std::size_t>(p[t + 1])] * (x[t + 1] - x[t]);
      l_prev = l_cur;
      l_cur = l_next;
    }
    x_prev = x[t];
  }
  return v;
}

double LobModel::analytic_recession(std::size_t leaf, std::span<const double> z) const {
  check_length(z);
  const auto& q = forms_[leaf];
  const std::size_t n = z.size();
  double amax = 0.0, zmax = 0.0;
  for (double v : q.a) amax = std::max(amax, std::abs(v));
  for (double v : z) zmax = std::max(zmax, std::abs(v));
  if (zmax == 0.0) return negative_semidefinite_[leaf] ? 0.0 : ext::kPosInf;
  double quad = 0.0, az_norm = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < n; ++j) row += q.a[i * n + j] * z[j];
    quad += z[i] * row;
    az_norm = std::max(az_norm, std::abs(row));
  }
  const double tol = 1e-12 * std::max(amax, 1e-300) * zmax * zmax;
  if (quad < -tol) return ext::kNegInf;
  if (quad > tol) return ext::kPosInf;
  if (az_norm > 1e-12 * amax * zmax || !negative_semidefinite_[leaf]) return ext::kPosInf;
  double lin = 0.0;
  for (std::size_t i = 0; i < n; ++i) lin += q.b[i] * z[i];
  return lin;
}

bool LobModel::all_negative_definite() const {
  return std::all_of(negative_definite_.begin(), negative_definite_.end(), [](bool b) { return b; });
}

double ConsumptionUtility::operator()(std::span<const double> c) const {
  double acc = 0.0;
  for (std::size_t t = 0; t < c.size(); ++t) {
    double w = weights.empty() ? 1.0 : weights[t];
    acc += kind == Kind::kLinear ? w * c[t] : w * std::log1p(c[t]);
  }
  return acc;
}

ConsumptionModel::ConsumptionModel(std::shared_ptr<const ScenarioTree> tree, NodeVectors prices,
                                   ConsumptionUtility utility, double initial_wealth)
    : MarketModel(tree, prices.empty() ? 0 : static_cast<int>(prices.front().size()) + 1),
      prices_(std::move(prices)),
      utility_(std::move(utility)),
      initial_wealth_(initial_wealth) {
  check_prices(this->tree(), prices_, static_cast<std::size_t>(assets()));
  require(initial_wealth_ >= 0.0 && std::isfinite(initial_wealth_), ErrorCode::kInvalidArgument,
          "initial wealth must be finite and >= 0 so that the zero strategy is solvent");
  require(utility_.weights.empty() || utility_.weights.size() == static_cast<std::size_t>(horizon()),
          ErrorCode::kDimensionMismatch, "one utility weight per consumption date");
  for (double w : utility_.weights) {
    require(w >= 0.0 && std::isfinite(w), ErrorCode::kInvalidArgument, "utility weights must be >= 0");
  }
}

double ConsumptionModel::net_trading(std::size_t leaf, std::span<const double> x) const {
  const auto& p = path(leaf);
  const auto d = static_cast<std::size_t>(dim());
  const auto a = static_cast<std::size_t>(assets());
  double acc = 0.0;
  for (std::size_t t = 0; t + 1 < p.size(); ++t) {
    auto block = x.subspan(t * d, d);
    acc += dot_increment(block.first(a), prices_[static_cast<std::size_t>(p[t + 1])],
                         prices_[static_cast<std::size_t>(p[t])]);
    acc -= block[a];
  }
  return acc;
}

double ConsumptionModel::eval(std::size_t leaf, std::span<const double> x) const {
  check_length(x);
  const auto d = static_cast<std::size_t>(dim());
  std::vector<double> c;
  for (std::size_t t = 0; t < static_cast<std::size_t>(horizon()); ++t) {
    double ct = x[t * d + d - 1];
    if (ct < 0.0) return ext::kNegInf;
    c.push_back(ct);
  }
  if (initial_wealth_ + net_trading(leaf, x) < 0.0) return ext::kNegInf;
  return utility_(c);
}

double ConsumptionModel::analytic_recession(std::size_t leaf, std::span<const double> z) const {
  check_length(z);
  const auto d = static_cast<std::size_t>(dim());
  std::vector<double> c;
  double zmax = 0.0;
  for (double v : z) zmax = std::max(zmax, std::abs(v));
  for (std::size_t t = 0; t < static_cast<std::size_t>(horizon()); ++t) {
    double ct = z[t * d + d - 1];
    if (ct < 0.0) return ext::kNegInf;
    c.push_back(ct);
  }
  if (net_trading(leaf, z) < -1e-12 * (1.0 + zmax)) return ext::kNegInf;
  if (utility_.kind == ConsumptionUtility::Kind::kLog) return 0.0;
  return utility_(c);
}

namespace {

std::shared_ptr<const ScenarioTree> two_state_tree() {
  TreeSpec spec;
  spec.nodes = {{"root", 0, std::nullopt, 1.0}, {"w1", 1, "root", 0.5}, {"w2", 1, "root", 0.5}};
  return std::make_shared<const ScenarioTree>(ScenarioTree::build(spec));
}

}  // namespace

TwoStateModel::TwoStateModel() : MarketModel(two_state_tree(), 1) {}

double TwoStateModel::eval(std::size_t leaf, std::span<const double> x) const {
  check_length(x);
  return leaf == 0 ? std::abs(x[0]) : -std::abs(x[0]);
}

double TwoStateModel::analytic_recession(std::size_t leaf, std::span<const double> z) const { return eval(leaf, z); }

FunctionModel::FunctionModel(std::shared_ptr<const ScenarioTree> tree, int dim, Fn fn, ModelFlags flags,
                             std::string name, Fn recession)
    : MarketModel(std::move(tree), dim),
      fn_(std::move(fn)),
      flags_(flags),
      name_(std::move(name)),
      recession_(std::move(recession)) {
  flags_.has_analytic_recession = static_cast<bool>(recession_);
  flags_.additive = false;
}

double FunctionModel::analytic_recession(std::size_t leaf, std::span<const double> z) const {
  if (!recession_) return MarketModel::analytic_recession(leaf, z);
  return recession_(leaf, z);
}

VectorModel::VectorModel(std::shared_ptr<const ScenarioTree> tree, int dim, int outputs)
    : tree_(std::move(tree)), dim_(dim), outputs_(outputs) {
  require(tree_ != nullptr, ErrorCode::kInvalidArgument, "model needs a tree");
  require(dim >= 1 && outputs >= 1, ErrorCode::kDimensionMismatch, "vector model dimensions must be >= 1");
  paths_ = all_paths(*tree_);
}

std::vector<VectorValue> VectorModel::evaluate_hat(const AdaptedStrategy& strategy) const {
  require(strategy.dim() == dim_, ErrorCode::kDimensionMismatch, "strategy dimension does not match model");
  std::vector<VectorValue> out;
  out.reserve(tree_->num_leaves());
  for (std::size_t l = 0; l < tree_->num_leaves(); ++l) out.push_back(eval(l, restrict_to_path(*tree_, strategy, l)));
  return out;
}

void VectorModel::check_length(std::span<const double> x) const {
  require(x.size() == path_length(), ErrorCode::kDimensionMismatch,
          "path vector has length " + std::to_string(x.size()) + ", expected " + std::to_string(path_length()));
}

KabanovParams KabanovParams::uniform(const ScenarioTree& tree, int assets, double pi, Kind kind) {
  require(assets >= 2, ErrorCode::kDimensionMismatch, "at least two assets required");
  require(pi >= 0.0 && std::isfinite(pi), ErrorCode::kInvalidArgument, "transaction cost must be >= 0");
  KabanovParams p;
  p.assets = assets;
  p.kind = kind;
  auto sq = static_cast<std::size_t>(assets * assets);
  p.costs.assign(tree.num_nodes(), std::vector<double>(sq, pi));
  p.rates.assign(tree.num_nodes(), std::vector<double>(sq, 1.0));
  return p;
}

KabanovModel::KabanovModel(std::shared_ptr<const ScenarioTree> tree, KabanovParams params)
    : VectorModel(tree, order_dim(params.assets), params.assets), params_(std::move(params)) {
  auto sq = static_cast<std::size_t>(params_.assets * params_.assets);
  require(params_.costs.size() == this->tree().num_nodes() && params_.rates.size() == this->tree().num_nodes(),
          ErrorCode::kDimensionMismatch, "transfer parameters must be given per node");
  for (std::size_t n = 0; n < params_.costs.size(); ++n) {
    require(params_.costs[n].size() == sq && params_.rates[n].size() == sq, ErrorCode::kDimensionMismatch,
            "transfer parameter matrix size");
    for (std::size_t k = 0; k < sq; ++k) {
      require(params_.costs[n][k] >= 0.0 && params_.rates[n][k] > 0.0, ErrorCode::kInvalidArgument,
              "costs must be >= 0 and rates > 0");
    }
  }
}

VectorValue KabanovModel::eval(std::size_t leaf, std::span<const double> x) const {
  check_length(x);
  const int d = params_.assets;
  const auto od = static_cast<std::size_t>(dim());
  const auto& p = path(leaf);
  std::vector<double> v(static_cast<std::size_t>(d), 0.0);
  for (std::size_t t = 0; t + 1 < p.size(); ++t) {
    auto exec = static_cast<std::size_t>(p[t + 1]);
    const auto& pi = params_.costs[exec];
    const auto& rate = params_.rates[exec];
    std::size_t k = t * od;
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) {
        if (i == j) continue;
        double a = x[k++];
        auto ij = static_cast<std::size_t>(i * d + j);
        auto ui = static_cast<std::size_t>(i), uj = static_cast<std::size_t>(j);
        if (a >= 0.0) {
          v[ui] -= (1.0 + pi[ij]) * a;
          v[uj] += rate[ij] * a;
        } else {
          if (params_.kind == KabanovParams::Kind::kLongOnly) return std::nullopt;
          v[ui] += -a;
          v[uj] -= (1.0 + pi[ij]) * (-a) / rate[ij];
        }
      }
    }
  }
  return v;
}

void KabanovModel::check_orders(const AdaptedStrategy& strategy) const {
  if (params_.kind != KabanovParams::Kind::kLongOnly) return;
  for (double a : strategy.raw()) {
    require(a >= 0.0, ErrorCode::kNegativeOrderNotAllowed, "negative order under the long-only transfer kind");
  }
}

StackedModel::StackedModel(std::vector<ModelPtr> components)
    : VectorModel(components.empty() ? nullptr : components.front()->tree_ptr(),
                  components.empty() ? 0 : components.front()->dim(), static_cast<int>(components.size())),
      components_(std::move(components)) {
  for (const auto& c : components_) {
    require(c->tree_ptr() == tree_ptr() && c->dim() == dim(), ErrorCode::kDimensionMismatch,
            "stacked components must share tree and dimension");
  }
}

ModelFlags StackedModel::flags() const {
  ModelFlags f{true, false, true, true};
  for (const auto& c : components_) {
    auto cf = c->flags();
    f.positively_homogeneous = f.positively_homogeneous && cf.positively_homogeneous;
    f.has_analytic_recession = f.has_analytic_recession && cf.has_analytic_recession;
    f.usc = f.usc && cf.usc;
  }
  return f;
}

VectorValue StackedModel::eval(std::size_t leaf, std::span<const double> x) const {
  std::vector<double> out;
  out.reserve(components_.size());
  for (const auto& c : components_) {
    double v = c->eval(leaf, x);
    if (ext::is_neg_inf(v)) return std::nullopt;
    out.push_back(v);
  }
  return out;
}

}  // namespace nccm
