// Command-line front end: nccm <command> --model FILE [options].

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "nccm/arbitrage.hpp"
#include "nccm/cones.hpp"
#include "nccm/error.hpp"
#include "nccm/extended.hpp"
#include "nccm/model_file.hpp"
#include "nccm/recession.hpp"
#include "nccm/representation.hpp"
#include "nccm/superhedging.hpp"
#include "nccm/utility.hpp"

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr int kOk = 0;
constexpr int kError = 1;
constexpr int kNegative = 2;

std::string num(double v) {
  if (nccm::ext::is_pos_inf(v)) return "inf";
  if (nccm::ext::is_neg_inf(v)) return "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string short_num(double v) {
  if (!std::isfinite(v)) return num(v);
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

json jnum(double v) { return std::isfinite(v) ? json(v) : json(num(v)); }

struct Options {
  std::string command;
  std::string model;
  std::string out = "nccm_out";
  std::string claim;
  std::string utility;
  bool vector = false;
  bool json_out = false;
  std::optional<std::uint64_t> seed;
  std::optional<double> tol;
  std::optional<int> grid;
  std::optional<double> box;
  std::optional<std::uint64_t> budget;
};

class Artifacts {
 public:
  explicit Artifacts(const std::string& dir) : dir_(dir) { fs::create_directories(dir_); }

  void write(const std::string& name, const std::string& content) const {
    std::ofstream f(dir_ / name, std::ios::binary);
    nccm::require(static_cast<bool>(f), nccm::ErrorCode::kInvalidArgument, "cannot write " + (dir_ / name).string());
    f << content;
  }
  void write_json(const std::string& name, const json& j) const { write(name, j.dump(2) + "\n"); }

 private:
  fs::path dir_;
};

std::string witness_csv(const nccm::ScenarioTree& tree, const nccm::AdaptedStrategy& s) {
  std::ostringstream os;
  os << "node_id";
  for (int j = 0; j < s.dim(); ++j) os << ",theta_" << j;
  os << "\n";
  for (int n : tree.decision_nodes()) {
    os << tree.node(n).id;
    for (double v : s.at(tree, n)) os << "," << num(v);
    os << "\n";
  }
  return os.str();
}

json witness_json(const nccm::ScenarioTree& tree, const nccm::AdaptedStrategy& s) {
  json j = json::object();
  for (int n : tree.decision_nodes()) {
    json row = json::array();
    for (double v : s.at(tree, n)) row.push_back(jnum(v));
    j[tree.node(n).id] = row;
  }
  return j;
}

void emit(const Options& o, const json& result, const std::string& human) {
  if (o.json_out) {
    std::cout << result.dump(2) << "\n";
  } else {
    std::cout << human;
  }
}

nccm::ModelPtr need_scalar(const nccm::ModelFile& mf, const std::string& cmd) {
  nccm::require(static_cast<bool>(mf.model), nccm::ErrorCode::kInvalidArgument, cmd + " needs a scalar model");
  return mf.model;
}

// One scalar functional per output of a vector model.
std::vector<nccm::LocalFunctional> functionals(const nccm::ModelFile& mf) {
  if (mf.model) return {nccm::as_functional(mf.model)};
  std::vector<nccm::LocalFunctional> out;
  auto vm = mf.vector_model;
  for (int i = 0; i < vm->outputs(); ++i) {
    nccm::LocalFunctional f;
    f.tree = vm->tree_ptr();
    f.dim = vm->dim();
    f.name = vm->name() + "[" + std::to_string(i) + "]";
    f.hat = [vm, i](const nccm::AdaptedStrategy& s) {
      auto v = vm->evaluate_hat(s);
      std::vector<double> r(v.size());
      for (std::size_t l = 0; l < v.size(); ++l) r[l] = v[l] ? (*v[l])[static_cast<std::size_t>(i)] : nccm::ext::kNegInf;
      return r;
    };
    out.push_back(std::move(f));
  }
  return out;
}

int cmd_validate(const Options& o, const nccm::ModelFile& mf, const Artifacts& art) {
  const auto& tree = *mf.tree;
  json j;
  j["nodes"] = tree.num_nodes();
  j["leaves"] = tree.num_leaves();
  j["horizon"] = tree.horizon();
  j["model"] = mf.model ? mf.model->name() : mf.vector_model->name();
  j["dim"] = mf.model ? mf.model->dim() : mf.vector_model->dim();
  j["outputs"] = mf.model ? 1 : mf.vector_model->outputs();
  j["cone"] = mf.cone.has_value();
  j["claim"] = mf.claim.has_value();
  j["status"] = "VALID";
  art.write_json("validate.json", j);
  std::ostringstream os;
  os << "valid: " << j["model"].get<std::string>() << " model, dim " << j["dim"] << ", " << tree.num_nodes()
     << " nodes, " << tree.num_leaves() << " leaves, horizon " << tree.horizon() << "\n";
  emit(o, j, os.str());
  return kOk;
}

int cmd_check_axioms(const Options& o, const nccm::ModelFile& mf, const Artifacts& art) {
  json j;
  j["functionals"] = json::array();
  bool pass = true;
  std::ostringstream os;
  for (const auto& f : functionals(mf)) {
    auto rep = nccm::check_axioms(f, static_cast<std::size_t>(mf.config.samples), mf.config.seed, mf.config.box);
    json r;
    r["name"] = f.name;
    r["a1_pass"] = rep.a1_pass;
    r["a2_pass"] = rep.a2_pass;
    r["a2_checks"] = rep.a2_checks;
    if (rep.a2_witness) {
      const auto& w = *rep.a2_witness;
      r["a2_witness"] = {{"time", w.time},
                         {"atom", f.tree->node(w.atom_node).id},
                         {"leaf", f.tree->node(f.tree->leaves()[w.leaf]).id},
                         {"original", jnum(w.original)},
                         {"localized", jnum(w.localized)},
                         {"strategy", witness_json(*f.tree, w.strategy)}};
    }
    j["functionals"].push_back(r);
    pass = pass && rep.pass();
    os << f.name << ": A1 " << (rep.a1_pass ? "pass" : "FAIL") << ", A2 " << (rep.a2_pass ? "pass" : "FAIL") << " ("
       << rep.a2_checks << " checks)\n";
  }
  j["status"] = pass ? "PASS" : "FAIL";
  art.write_json("axioms.json", j);
  emit(o, j, os.str());
  return pass ? kOk : kNegative;
}

int cmd_reconstruct(const Options& o, const nccm::ModelFile& mf, const Artifacts& art) {
  auto f = nccm::as_functional(need_scalar(mf, "reconstruct"));
  nccm::ReconstructionConfig cfg;
  cfg.box = mf.config.box;
  cfg.lattice_points = mf.config.lattice_points;
  cfg.ladder_depth = mf.config.ladder_depth;
  cfg.maximizer.budget = mf.config.budget;
  auto rec = nccm::Reconstruction::build(f, cfg);
  auto rep = nccm::recovery_report(f, rec);
  const auto& tree = *f.tree;

  std::ostringstream csv;
  csv << "leaf_id";
  for (std::size_t i = 0; i < rec.path_length(); ++i) csv << ",x_" << i;
  csv << ",V_model,V_reconstructed,gap\n";
  for (std::size_t l = 0; l < rec.num_leaves(); ++l) {
    for (std::size_t q = 0; q < rec.lattice_size(); ++q) {
      const auto& x = rec.lattice_point(q);
      csv << tree.node(tree.leaves()[l]).id;
      for (double v : x) csv << "," << num(v);
      const double v = rec.center(l, q), w = rec.limit_value(l, q);
      const double gap = v == w ? 0.0 : std::fabs(v - w);
      csv << "," << num(v) << "," << num(w) << "," << num(gap) << "\n";
    }
  }
  art.write("reconstruct.csv", csv.str());
  json j = {{"max_limit_error", jnum(rep.max_limit_error)},
            {"max_ladder_error", jnum(rep.max_ladder_error)},
            {"infinity_mismatch", rep.infinity_mismatch},
            {"unstable", rep.unstable},
            {"lattice_points", cfg.lattice_points},
            {"ladder_depth", cfg.ladder_depth}};
  art.write_json("reconstruct.json", j);
  std::ostringstream os;
  os << "reconstruction on " << rec.lattice_size() << " lattice points: max limit error "
     << short_num(rep.max_limit_error) << ", max ladder error " << short_num(rep.max_ladder_error) << ", unstable "
     << rep.unstable << "\n";
  emit(o, j, os.str());
  return kOk;
}

int cmd_recession(const Options& o, const nccm::ModelFile& mf, const Artifacts& art) {
  auto model = need_scalar(mf, "recession");
  const auto& tree = model->tree();
  std::ostringstream csv;
  csv << "leaf_id";
  for (std::size_t i = 0; i < model->path_length(); ++i) csv << ",z_" << i;
  json j;
  std::ostringstream os;
  if (model->flags().has_analytic_recession) {
    auto v = nccm::cross_validate_recession(*model, mf.config.box, mf.config.recession_points);
    csv << ",analytic,numeric_lower,numeric_upper,classification\n";
    for (const auto& r : v.rows) {
      csv << tree.node(tree.leaves()[r.leaf]).id;
      for (double z : r.z) csv << "," << num(z);
      csv << "," << num(r.analytic) << "," << num(r.numeric.lower) << "," << num(r.numeric.upper) << ","
          << nccm::to_string(r.numeric.cls) << "\n";
    }
    j = {{"rows", v.rows.size()},
         {"max_gap", jnum(v.max_gap)},
         {"class_mismatches", v.class_mismatches},
         {"unconverged", v.unconverged},
         {"homogeneity_error", jnum(v.homogeneity_error)},
         {"status", v.pass(1e-4) ? "AGREE" : "DISAGREE"}};
    os << "recession on " << v.rows.size() << " points: max gap " << short_num(v.max_gap) << ", class mismatches "
       << v.class_mismatches << ", unconverged " << v.unconverged << "\n";
  } else {
    csv << ",analytic,numeric_lower,numeric_upper,classification\n";
    std::size_t rows = 0;
    for (const auto& z : nccm::product_grid(nccm::axis_grid(mf.config.box, mf.config.recession_points),
                                            static_cast<int>(model->path_length()))) {
      auto est = nccm::recession_numeric(*model, z);
      for (std::size_t l = 0; l < est.size(); ++l) {
        ++rows;
        csv << tree.node(tree.leaves()[l]).id;
        for (double v : z) csv << "," << num(v);
        csv << ",none," << num(est[l].lower) << "," << num(est[l].upper) << ","
            << nccm::to_string(est[l].cls) << "\n";
      }
    }
    j = {{"rows", rows}, {"status", "NUMERIC_ONLY"}};
    os << "numeric recession on " << rows << " points (no closed form)\n";
  }
  art.write("recession.csv", csv.str());
  art.write_json("recession.json", j);
  emit(o, j, os.str());
  return kOk;
}

json verdict_json(const nccm::ScenarioTree& tree, const nccm::NaVerdict& v) {
  json j;
  j["status"] = nccm::to_string(v.status);
  j["margin"] = jnum(v.margin);
  j["candidates"] = v.candidates;
  if (!v.analytic_certificate.empty()) j["analytic_certificate"] = v.analytic_certificate;
  if (v.witness) {
    j["witness"] = witness_json(tree, *v.witness);
    j["witness_kind"] = v.witness_kind;
    json vals = json::array();
    for (double x : v.witness_values) vals.push_back(jnum(x));
    j["witness_values"] = vals;
  }
  if (!v.certificate.empty()) {
    json c = json::array();
    for (const auto& n : v.certificate) {
      json w = json::array();
      for (double x : n.weights) w.push_back(jnum(x));
      c.push_back({{"node", tree.node(n.node).id},
                   {"weights", w},
                   {"rank", n.rank},
                   {"martingale", n.martingale_ok},
                   {"full_rank", n.full_rank}});
    }
    j["certificate"] = c;
  }
  return j;
}

int cmd_check_na(const Options& o, const nccm::ModelFile& mf, const Artifacts& art) {
  nccm::SphereSearchConfig sc;
  sc.seed = mf.config.seed;
  sc.random_candidates = mf.config.na_candidates;
  sc.budget = mf.config.budget;
  const auto& tree = *mf.tree;
  nccm::NaVerdict v;
  json j;
  if (o.vector) {
    nccm::require(static_cast<bool>(mf.vector_model), nccm::ErrorCode::kInvalidArgument,
                  "--vector needs a vector model");
    auto cone = mf.cone ? *mf.cone
                        : nccm::RandomCone::shared(nccm::Cone::orthant(mf.vector_model->outputs()), tree.num_leaves());
    nccm::VectorNaConfig vc;
    vc.search = sc;
    auto vv = nccm::vector_na_check(mf.vector_model, cone, vc);
    v = vv.verdict;
    j = verdict_json(tree, v);
    j["route"] = vv.route;
    j["family"] = vv.family;
    j["routes_agree"] = vv.routes_agree;
  } else {
    v = nccm::check_na(need_scalar(mf, "check-na"), sc);
    j = verdict_json(tree, v);
  }
  art.write_json("na.json", j);
  if (v.witness) art.write("witness.csv", witness_csv(tree, *v.witness));
  std::ostringstream os;
  os << nccm::to_string(v.status) << " (margin " << short_num(v.margin) << ")\n";
  if (v.witness) os << "witness (" << v.witness_kind << ") written to witness.csv\n";
  if (!v.analytic_certificate.empty()) os << "certificate: " << v.analytic_certificate << "\n";
  emit(o, j, os.str());
  return v.status == nccm::NaStatus::kArbitrage ? kNegative : kOk;
}

int cmd_superhedge(const Options& o, const nccm::ModelFile& mf, const Artifacts& art) {
  auto model = need_scalar(mf, "superhedge");
  const auto& tree = model->tree();
  std::vector<double> f;
  if (!o.claim.empty()) {
    f = nccm::load_claim_csv(o.claim, tree);
  } else {
    nccm::require(mf.claim.has_value(), nccm::ErrorCode::kInvalidArgument, "superhedge needs --claim or a claim");
    f = *mf.claim;
  }
  nccm::SuperhedgeConfig cfg;
  cfg.box = mf.config.box;
  cfg.grid = mf.config.grid;
  cfg.budget = mf.config.budget;
  cfg.tol = mf.config.tol;
  auto r = nccm::superhedge_price(*model, f, cfg);

  json j = {{"price", jnum(r.price)}, {"infeasible", r.infeasible}, {"method", r.method},
            {"box", r.box},           {"grid", r.grid},             {"step", jnum(r.step)}};
  if (r.price_lower) j["price_lower"] = jnum(*r.price_lower);
  std::ostringstream os;
  if (r.infeasible) {
    os << "price +inf (every grid strategy is infeasible somewhere)\n";
  } else {
    j["witness"] = witness_json(tree, r.witness);
    art.write("witness.csv", witness_csv(tree, r.witness));
    std::ostringstream slack;
    slack << "leaf_id,slack\n";
    for (std::size_t l = 0; l < r.slack.size(); ++l) slack << tree.node(tree.leaves()[l]).id << "," << num(r.slack[l]) << "\n";
    art.write("slack.csv", slack.str());
    os << "price " << short_num(r.price);
    if (r.price_lower) os << " (grid gap " << short_num(r.price - *r.price_lower) << ")";
    os << "\n";
  }
  art.write_json("superhedge.json", j);
  emit(o, j, os.str());
  return kOk;
}

int cmd_maximize_utility(const Options& o, const nccm::ModelFile& mf, const Artifacts& art) {
  auto model = need_scalar(mf, "maximize-utility");
  std::string spec = !o.utility.empty() ? o.utility : mf.utility.value_or("linear");
  auto u = nccm::parse_utility(spec);
  nccm::UtilityConfig cfg;
  cfg.box = mf.config.box;
  cfg.grid = mf.config.grid;
  cfg.budget = mf.config.budget;
  auto r = nccm::maximize_utility(*model, u, cfg);
  json j = {{"utility", spec},
            {"value", jnum(r.value)},
            {"method", r.method},
            {"states", r.states},
            {"witness", witness_json(model->tree(), r.witness)}};
  art.write_json("utility.json", j);
  art.write("witness.csv", witness_csv(model->tree(), r.witness));
  std::ostringstream os;
  os << "max expected utility " << short_num(r.value) << " (" << spec << ", " << r.method << ")\n";
  emit(o, j, os.str());
  return kOk;
}

json vectors_json(const std::vector<std::vector<double>>& vs) {
  json a = json::array();
  for (const auto& v : vs) {
    json row = json::array();
    for (double x : v) row.push_back(jnum(x));
    a.push_back(row);
  }
  return a;
}

int cmd_cone_check(const Options& o, const nccm::ModelFile& mf, const Artifacts& art) {
  const auto& tree = *mf.tree;
  nccm::RandomCone cone;
  if (mf.cone) {
    cone = *mf.cone;
  } else {
    nccm::require(static_cast<bool>(mf.vector_model), nccm::ErrorCode::kInvalidArgument,
                  "cone-check needs a cone or a vector model");
    cone = nccm::RandomCone::shared(nccm::Cone::orthant(mf.vector_model->outputs()), tree.num_leaves());
  }
  auto pol = nccm::polar(cone);
  auto rho = nccm::ri_selection(cone);
  auto balls = nccm::affine_ball_radius(cone, rho);
  auto polar_rho = nccm::ri_selection(pol);
  json leaves = json::array();
  std::ostringstream os;
  for (std::size_t l = 0; l < cone.num_leaves(); ++l) {
    const auto& c = cone.at(l);
    json e = {{"leaf", tree.node(tree.leaves()[l]).id},
              {"generators", vectors_json(c.generators())},
              {"polar_generators", vectors_json(pol.at(l).generators())},
              {"span_dim", c.span_dim()},
              {"solid", c.solid()},
              {"ri_selection", vectors_json({rho.z[l]})[0]},
              {"polar_ri_selection", vectors_json({polar_rho.z[l]})[0]},
              {"affine_radius", jnum(balls[l].radius)},
              {"boundary_distance", jnum(balls[l].boundary_distance)}};
    leaves.push_back(e);
    os << e["leaf"].get<std::string>() << ": " << c.generators().size() << " generators, polar "
       << pol.at(l).generators().size() << " generators, span " << c.span_dim() << ", ri radius "
       << short_num(balls[l].radius) << "\n";
  }
  if (cone.solid()) {
    auto r = nccm::interior_ball_radius(cone, rho);
    for (std::size_t l = 0; l < r.size(); ++l) leaves[l]["interior_radius"] = jnum(r[l]);
  }
  json j = {{"dim", cone.dim()}, {"leaves", leaves}};
  art.write_json("cone.json", j);
  emit(o, j, os.str());
  return kOk;
}

int dispatch(const Options& o) {
  auto mf = nccm::load_model_file(o.model);
  if (o.seed) mf.config.seed = *o.seed;
  if (o.tol) mf.config.tol = *o.tol;
  if (o.grid) mf.config.grid = *o.grid;
  if (o.box) mf.config.box = *o.box;
  if (o.budget) mf.config.budget = *o.budget;
  Artifacts art(o.out);
  if (o.command == "validate") return cmd_validate(o, mf, art);
  if (o.command == "check-axioms") return cmd_check_axioms(o, mf, art);
  if (o.command == "reconstruct") return cmd_reconstruct(o, mf, art);
  if (o.command == "recession") return cmd_recession(o, mf, art);
  if (o.command == "check-na") return cmd_check_na(o, mf, art);
  if (o.command == "superhedge") return cmd_superhedge(o, mf, art);
  if (o.command == "maximize-utility") return cmd_maximize_utility(o, mf, art);
  if (o.command == "cone-check") return cmd_cone_check(o, mf, art);
  throw nccm::Error(nccm::ErrorCode::kInvalidArgument, "unknown command '" + o.command + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Market models on finite scenario trees"};
  app.require_subcommand(1);
  Options o;
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"validate", "Parse and check a model file"},
      {"check-axioms", "Check normalization and locality"},
      {"reconstruct", "Rebuild the integrand from ball suprema"},
      {"recession", "Numeric vs closed-form recession"},
      {"check-na", "Decide no-arbitrage"},
      {"superhedge", "Superhedging price of a claim"},
      {"maximize-utility", "Maximize expected utility"},
      {"cone-check", "Polar cone, ri selection and radii"}};
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--model", o.model, "Model file (JSON)")->required();
    sub->add_option("--out", o.out, "Artifact directory");
    sub->add_option("--seed", o.seed, "Random seed");
    sub->add_option("--tol", o.tol, "Tolerance");
    sub->add_option("--grid", o.grid, "Grid points per axis");
    sub->add_option("--box", o.box, "Strategy box half-width");
    sub->add_option("--budget", o.budget, "Evaluation budget");
    sub->add_flag("--json", o.json_out, "Print the JSON verdict instead of a summary");
    if (name == "superhedge") sub->add_option("--claim", o.claim, "Claim CSV (leaf_id,value)");
    if (name == "maximize-utility") sub->add_option("--utility", o.utility, "linear | exp:a | log | digital:k");
    if (name == "check-na") sub->add_flag("--vector", o.vector, "Vector no-arbitrage under the cone order");
    sub->callback([&o, name = name]() { o.command = name; });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kOk : kError;
  }
  try {
    return dispatch(o);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kError;
  }
}
