#include "nccm/model_file.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

#include "nccm/error.hpp"
#include "nccm/extended.hpp"

namespace nccm {

namespace {

using nlohmann::json;

[[noreturn]] void schema(const std::string& path, const std::string& msg) {
  throw Error(ErrorCode::kSchemaError, path + ": " + msg);
}

const json& field(const json& j, const std::string& key, const std::string& path) {
  if (!j.is_object()) schema(path, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) schema(path + "." + key, "missing field");
  return *it;
}

double number(const json& j, const std::string& path) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf" || s == "+inf") return ext::kPosInf;
    if (s == "-inf") return ext::kNegInf;
  }
  schema(path, "expected a number or \"inf\"/\"-inf\"");
}

double finite_number(const json& j, const std::string& path) {
  double v = number(j, path);
  if (!std::isfinite(v)) schema(path, "value must be finite");
  return v;
}

int integer(const json& j, const std::string& path) {
  if (!j.is_number_integer()) schema(path, "expected an integer");
  return j.get<int>();
}

std::vector<double> number_list(const json& j, const std::string& path, bool allow_inf = false) {
  std::vector<double> out;
  if (j.is_number() || j.is_string()) {
    out.push_back(allow_inf ? number(j, path) : finite_number(j, path));
    return out;
  }
  if (!j.is_array()) schema(path, "expected a number or an array of numbers");
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto p = path + "[" + std::to_string(i) + "]";
    out.push_back(allow_inf ? number(j[i], p) : finite_number(j[i], p));
  }
  return out;
}

std::shared_ptr<const ScenarioTree> parse_tree(const json& j, const std::string& path) {
  if (!j.is_object()) schema(path, "expected an object");
  try {
    if (j.contains("binomial")) {
      const auto& b = j["binomial"];
      double p = b.contains("p_up") ? finite_number(b["p_up"], path + ".binomial.p_up") : 0.5;
      return std::make_shared<ScenarioTree>(
          ScenarioTree::binomial(integer(field(b, "horizon", path + ".binomial"), path + ".binomial.horizon"), p));
    }
    if (j.contains("uniform")) {
      const auto& u = j["uniform"];
      return std::make_shared<ScenarioTree>(
          ScenarioTree::uniform(integer(field(u, "horizon", path + ".uniform"), path + ".uniform.horizon"),
                                integer(field(u, "branching", path + ".uniform"), path + ".uniform.branching")));
    }
    const auto& nodes = field(j, "nodes", path);
    if (!nodes.is_array()) schema(path + ".nodes", "expected an array");
    TreeSpec spec;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const auto p = path + ".nodes[" + std::to_string(i) + "]";
      const auto& n = nodes[i];
      NodeSpec ns;
      const auto& id = field(n, "id", p);
      if (!id.is_string()) schema(p + ".id", "expected a string");
      ns.id = id.get<std::string>();
      ns.time = integer(field(n, "time", p), p + ".time");
      if (n.contains("parent") && !n["parent"].is_null()) {
        if (!n["parent"].is_string()) schema(p + ".parent", "expected a string or null");
        ns.parent = n["parent"].get<std::string>();
      }
      ns.prob = n.contains("prob") ? finite_number(n["prob"], p + ".prob") : 1.0;
      spec.nodes.push_back(std::move(ns));
    }
    return std::make_shared<ScenarioTree>(ScenarioTree::build(spec));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kSchemaError) throw;
    throw Error(e.code(), path + ": " + e.what());
  }
}

// Object keyed by node id; every node must be present.
NodeVectors node_vectors(const json& j, const ScenarioTree& tree, const std::string& path) {
  if (!j.is_object()) schema(path, "expected an object keyed by node id");
  NodeVectors out(tree.num_nodes());
  std::size_t dim = 0;
  for (auto it = j.begin(); it != j.end(); ++it) {
    auto n = tree.find(it.key());
    if (!n) schema(path + "." + it.key(), "unknown node id");
    out[static_cast<std::size_t>(*n)] = number_list(it.value(), path + "." + it.key());
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto& id = tree.node(static_cast<int>(i)).id;
    if (out[i].empty()) schema(path + "." + id, "missing node");
    if (i == 0) dim = out[i].size();
    if (out[i].size() != dim) schema(path + "." + id, "price dimension differs from the root");
  }
  return out;
}

// Number (same at every node) or object keyed by node id.
std::vector<double> node_scalars(const json& j, const ScenarioTree& tree, const std::string& path, double fill) {
  std::vector<double> out(tree.num_nodes(), fill);
  if (j.is_number() || j.is_string()) {
    std::fill(out.begin(), out.end(), finite_number(j, path));
    return out;
  }
  if (!j.is_object()) schema(path, "expected a number or an object keyed by node id");
  for (auto it = j.begin(); it != j.end(); ++it) {
    auto n = tree.find(it.key());
    if (!n) schema(path + "." + it.key(), "unknown node id");
    out[static_cast<std::size_t>(*n)] = finite_number(it.value(), path + "." + it.key());
  }
  return out;
}

std::vector<Box> parse_boxes(const json& j, const std::string& path) {
  if (!j.is_array()) schema(path, "expected an array of boxes");
  std::vector<Box> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto p = path + "[" + std::to_string(i) + "]";
    Box b;
    b.lo = number_list(field(j[i], "lo", p), p + ".lo", true);
    b.hi = number_list(field(j[i], "hi", p), p + ".hi", true);
    if (b.lo.size() != b.hi.size()) schema(p, "lo and hi differ in length");
    out.push_back(std::move(b));
  }
  return out;
}

CostFunction parse_cost(const json& j, const ScenarioTree& tree, const std::string& path) {
  const auto& kind = field(j, "kind", path);
  if (!kind.is_string()) schema(path + ".kind", "expected a string");
  const auto k = kind.get<std::string>();
  if (k == "proportional" || k == "fixed") {
    auto c = k == "proportional" ? CostFunction::proportional(tree, 0.0) : CostFunction::fixed(tree, 0.0);
    c.lambda() = node_scalars(field(j, "lambda", path), tree, path + ".lambda", 0.0);
    return c;
  }
  if (k == "constraint") return CostFunction::constraint(tree, parse_boxes(field(j, "boxes", path), path + ".boxes"));
  schema(path + ".kind", "unknown cost kind '" + k + "'");
}

void parse_model(const json& j, ModelFile& mf, const std::string& path) {
  const auto& type_j = field(j, "type", path);
  if (!type_j.is_string()) schema(path + ".type", "expected a string");
  const auto type = type_j.get<std::string>();
  static const std::set<std::string> types = {"two_state", "kabanov",  "frictionless", "proportional", "fixed",
                                              "constraint", "additive", "lob",          "consumption"};
  if (!types.count(type)) schema(path + ".type", "unknown model type '" + type + "'");

  if (type == "two_state") {
    auto m = std::make_shared<TwoStateModel>();
    mf.tree = m->tree_ptr();
    mf.model = m;
    return;
  }
  if (!mf.tree) schema("tree", "missing field");
  const auto& tree = *mf.tree;

  try {
    if (type == "kabanov") {
      int assets = j.contains("assets") ? integer(j["assets"], path + ".assets") : 2;
      double pi = j.contains("pi") ? finite_number(j["pi"], path + ".pi") : 0.0;
      auto kind = KabanovParams::Kind::kSigned;
      if (j.contains("kind")) {
        const auto k = j["kind"].is_string() ? j["kind"].get<std::string>() : std::string();
        if (k == "long_only") {
          kind = KabanovParams::Kind::kLongOnly;
        } else if (k != "signed") {
          schema(path + ".kind", "expected \"signed\" or \"long_only\"");
        }
      }
      auto params = KabanovParams::uniform(tree, assets, pi, kind);
      if (j.contains("rates")) {
        auto r = number_list(j["rates"], path + ".rates");
        if (r.size() != static_cast<std::size_t>(assets * assets)) schema(path + ".rates", "expected assets^2 entries");
        std::fill(params.rates.begin(), params.rates.end(), r);
      }
      mf.vector_model = std::make_shared<KabanovModel>(mf.tree, params);
      return;
    }

    const auto prices = node_vectors(field(j, "prices", path), tree, path + ".prices");
    if (type == "frictionless") {
      mf.model = std::make_shared<FrictionlessModel>(mf.tree, prices);
    } else if (type == "proportional" || type == "fixed") {
      json cost = {{"kind", type}, {"lambda", field(j, "lambda", path)}};
      mf.model = std::make_shared<AdditiveModel>(mf.tree, prices,
                                                 std::vector<CostFunction>{parse_cost(cost, tree, path)});
    } else if (type == "constraint") {
      mf.model = std::make_shared<AdditiveModel>(
          mf.tree, prices,
          std::vector<CostFunction>{CostFunction::constraint(tree, parse_boxes(field(j, "boxes", path), path + ".boxes"))});
    } else if (type == "additive") {
      const auto& costs = field(j, "costs", path);
      if (!costs.is_array()) schema(path + ".costs", "expected an array");
      std::vector<CostFunction> cs;
      for (std::size_t i = 0; i < costs.size(); ++i) {
        cs.push_back(parse_cost(costs[i], tree, path + ".costs[" + std::to_string(i) + "]"));
      }
      mf.model = std::make_shared<AdditiveModel>(mf.tree, prices, std::move(cs));
    } else if (type == "lob") {
      LobParams lp;
      lp.kappa = j.contains("kappa") ? finite_number(j["kappa"], path + ".kappa") : 0.25;
      lp.depth = node_scalars(j.contains("depth") ? j["depth"] : json(1.0), tree, path + ".depth", 1.0);
      mf.model = std::make_shared<LobModel>(mf.tree, prices, lp);
    } else if (type == "consumption") {
      ConsumptionUtility u;
      if (j.contains("utility")) {
        const auto k = j["utility"].is_string() ? j["utility"].get<std::string>() : std::string();
        if (k == "log") {
          u.kind = ConsumptionUtility::Kind::kLog;
        } else if (k != "linear") {
          schema(path + ".utility", "expected \"linear\" or \"log\"");
        }
      }
      if (j.contains("weights")) u.weights = number_list(j["weights"], path + ".weights");
      double w0 = j.contains("initial_wealth") ? finite_number(j["initial_wealth"], path + ".initial_wealth") : 1.0;
      mf.model = std::make_shared<ConsumptionModel>(mf.tree, prices, u, w0);
    } else {
      schema(path + ".type", "unknown model type '" + type + "'");
    }
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kSchemaError) throw;
    throw Error(e.code(), path + ": " + e.what());
  }
}

RandomCone parse_cone(const json& j, const ScenarioTree& tree, int n, const std::string& path) {
  auto gens = [&](const json& g, const std::string& p) {
    if (g.is_string() && g.get<std::string>() == "orthant") return Cone::orthant(n);
    if (!g.is_array()) schema(p, "expected an array of generators or \"orthant\"");
    std::vector<std::vector<double>> out;
    for (std::size_t i = 0; i < g.size(); ++i) {
      auto v = number_list(g[i], p + "[" + std::to_string(i) + "]");
      if (v.size() != static_cast<std::size_t>(n)) schema(p + "[" + std::to_string(i) + "]", "wrong dimension");
      out.push_back(std::move(v));
    }
    return Cone::from_generators(n, std::move(out));
  };
  if (!j.is_object()) schema(path, "expected an object");
  Cone shared = j.contains("generators") ? gens(j["generators"], path + ".generators") : Cone::orthant(n);
  std::vector<Cone> leaves(tree.num_leaves(), shared);
  if (j.contains("per_leaf")) {
    const auto& pl = j["per_leaf"];
    if (!pl.is_object()) schema(path + ".per_leaf", "expected an object keyed by leaf id");
    for (auto it = pl.begin(); it != pl.end(); ++it) {
      auto node = tree.find(it.key());
      if (!node || tree.node(*node).leaf_index < 0) schema(path + ".per_leaf." + it.key(), "unknown leaf id");
      leaves[static_cast<std::size_t>(tree.node(*node).leaf_index)] = gens(it.value(), path + ".per_leaf." + it.key());
    }
  }
  return RandomCone(n, std::move(leaves));
}

std::vector<double> parse_claim(const json& j, const ScenarioTree& tree, const std::string& path) {
  std::vector<double> out(tree.num_leaves(), 0.0);
  if (j.is_array()) {
    if (j.size() != tree.num_leaves()) schema(path, "expected one value per leaf");
    for (std::size_t i = 0; i < j.size(); ++i) out[i] = finite_number(j[i], path + "[" + std::to_string(i) + "]");
    return out;
  }
  if (!j.is_object()) schema(path, "expected an array or an object keyed by leaf id");
  std::set<std::size_t> seen;
  for (auto it = j.begin(); it != j.end(); ++it) {
    auto node = tree.find(it.key());
    if (!node || tree.node(*node).leaf_index < 0) schema(path + "." + it.key(), "unknown leaf id");
    auto l = static_cast<std::size_t>(tree.node(*node).leaf_index);
    out[l] = finite_number(it.value(), path + "." + it.key());
    seen.insert(l);
  }
  if (seen.size() != tree.num_leaves()) schema(path, "expected one value per leaf");
  return out;
}

void parse_config(const json& j, RunConfig& c, const std::string& path) {
  if (!j.is_object()) schema(path, "expected an object");
  static const std::set<std::string> known = {"box", "grid", "seed", "tol", "budget", "samples", "lattice_points",
                                              "ladder_depth", "recession_points", "na_candidates"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) schema(path + "." + it.key(), "unknown config key");
  }
  auto pos_int = [&](const char* key, auto& dst) {
    if (!j.contains(key)) return;
    const auto& v = j[key];
    if (!v.is_number_integer() || v.get<long long>() < 1) schema(path + "." + key, "expected a positive integer");
    dst = static_cast<std::remove_reference_t<decltype(dst)>>(v.get<long long>());
  };
  if (j.contains("box")) c.box = finite_number(j["box"], path + ".box");
  if (j.contains("tol")) c.tol = finite_number(j["tol"], path + ".tol");
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) schema(path + ".seed", "expected a nonnegative integer");
    c.seed = j["seed"].get<std::uint64_t>();
  }
  pos_int("grid", c.grid);
  pos_int("budget", c.budget);
  pos_int("samples", c.samples);
  pos_int("lattice_points", c.lattice_points);
  pos_int("ladder_depth", c.ladder_depth);
  pos_int("recession_points", c.recession_points);
  pos_int("na_candidates", c.na_candidates);
}

}  // namespace

ModelFile parse_model_file(const std::string& text, const std::string& source) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kSchemaError, source + ": " + e.what());
  }
  if (!j.is_object()) schema(source, "top level must be an object");
  static const std::set<std::string> known = {"tree", "model", "cone", "claim", "utility", "config", "description"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) schema(it.key(), "unknown top-level key");
  }

  ModelFile mf;
  mf.source = source;
  if (j.contains("tree")) mf.tree = parse_tree(j["tree"], "tree");
  parse_model(field(j, "model", "<root>"), mf, "model");
  if (!mf.tree) schema("tree", "missing field");
  if (mf.model) mf.tree = mf.model->tree_ptr();
  const auto& tree = *mf.tree;

  if (j.contains("cone")) {
    int n = mf.vector_model ? mf.vector_model->outputs() : 1;
    if (j["cone"].is_object() && j["cone"].contains("dim")) n = integer(j["cone"]["dim"], "cone.dim");
    mf.cone = parse_cone(j["cone"], tree, n, "cone");
  }
  if (j.contains("claim")) mf.claim = parse_claim(j["claim"], tree, "claim");
  if (j.contains("utility")) {
    if (!j["utility"].is_string()) schema("utility", "expected a string");
    mf.utility = j["utility"].get<std::string>();
  }
  if (j.contains("config")) parse_config(j["config"], mf.config, "config");
  return mf;
}

ModelFile load_model_file(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::kSchemaError, path + ": cannot open file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_model_file(ss.str(), path);
}

std::vector<double> load_claim_csv(const std::string& path, const ScenarioTree& tree) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::kSchemaError, path + ": cannot open file");
  std::vector<double> out(tree.num_leaves(), 0.0);
  std::vector<bool> seen(tree.num_leaves(), false);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || (lineno == 1 && line.rfind("leaf_id", 0) == 0)) continue;
    auto comma = line.find(',');
    const auto where = path + ":" + std::to_string(lineno);
    if (comma == std::string::npos) schema(where, "expected 'leaf_id,value'");
    auto node = tree.find(line.substr(0, comma));
    if (!node || tree.node(*node).leaf_index < 0) schema(where, "unknown leaf id '" + line.substr(0, comma) + "'");
    double v = 0.0;
    try {
      std::size_t used = 0;
      v = std::stod(line.substr(comma + 1), &used);
      if (used != line.size() - comma - 1) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      schema(where, "bad number");
    }
    if (!std::isfinite(v)) schema(where, "value must be finite");
    auto l = static_cast<std::size_t>(tree.node(*node).leaf_index);
    out[l] = v;
    seen[l] = true;
  }
  for (std::size_t l = 0; l < seen.size(); ++l) {
    if (!seen[l]) schema(path, "missing leaf '" + tree.node(tree.leaves()[l]).id + "'");
  }
  return out;
}

}  // namespace nccm
