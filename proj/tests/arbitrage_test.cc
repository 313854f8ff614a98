#include "nccm/arbitrage.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "nccm/extended.hpp"
#include "oracles.hpp"

namespace nccm {
namespace {

using testing::Gen;

std::shared_ptr<const ScenarioTree> binomial(int t) { return testing::shared(ScenarioTree::binomial(t)); }

ModelPtr frictionless(double up, double down) {
  auto tree = binomial(1);
  return std::make_shared<FrictionlessModel>(tree, testing::binomial_prices(*tree, 1.0, up, down));
}

ModelPtr zero_model() {
  return std::make_shared<FunctionModel>(
      binomial(1), 1, [](std::size_t, std::span<const double>) { return 0.0; }, ModelFlags{true, true, true, true},
      "zero", [](std::size_t, std::span<const double>) { return 0.0; });
}

// Re-checks an ARBITRAGE witness against the recession integrand, up to
// rounding in kernel directions.
void expect_valid_witness(const NaVerdict& v, const RecessionIntegrand& rec, const ScenarioTree& tree) {
  ASSERT_EQ(v.status, NaStatus::kArbitrage);
  ASSERT_TRUE(v.witness.has_value());
  EXPECT_FALSE(v.witness->is_zero());
  for (std::size_t l = 0; l < tree.num_leaves(); ++l) {
    EXPECT_GE(rec.eval(l, restrict_to_path(tree, *v.witness, l)), -1e-12) << "leaf " << l;
  }
}

void expect_sound_certificate(const NaVerdict& v, const FrictionlessModel& m) {
  ASSERT_EQ(v.status, NaStatus::kNaCertified);
  const auto& tree = m.tree();
  for (const auto& c : v.certificate) {
    const auto& kids = tree.node(c.node).children;
    ASSERT_EQ(c.weights.size(), kids.size());
    double sum = 0.0;
    std::vector<double> drift(static_cast<std::size_t>(m.dim()), 0.0);
    for (std::size_t k = 0; k < kids.size(); ++k) {
      EXPECT_GT(c.weights[k], 0.0);
      sum += c.weights[k];
      for (int j = 0; j < m.dim(); ++j) {
        const auto jj = static_cast<std::size_t>(j);
        drift[jj] += c.weights[k] * (m.prices()[static_cast<std::size_t>(kids[k])][jj] -
                                     m.prices()[static_cast<std::size_t>(c.node)][jj]);
      }
    }
    EXPECT_NEAR(sum, 1.0, 1e-9);
    for (double d : drift) EXPECT_NEAR(d, 0.0, 1e-9);
    EXPECT_TRUE(c.martingale_ok);
    EXPECT_TRUE(c.full_rank);
  }
}

TEST(NaLinearTest, BinomialIsCertified) {
  auto m = frictionless(2.0, 0.5);
  auto v = na_check_linear(recession_analytic(m), m->tree(), 1);
  expect_sound_certificate(v, static_cast<const FrictionlessModel&>(*m));
  ASSERT_EQ(v.certificate.size(), 1u);
  EXPECT_NEAR(v.certificate[0].weights[0], 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(v.certificate[0].weights[1], 2.0 / 3.0, 1e-12);
}

TEST(NaLinearTest, MonotoneTreeHasOneStepArbitrage) {
  auto m = frictionless(2.0, 1.5);
  auto rec = recession_analytic(m);
  auto v = na_check_linear(rec, m->tree(), 1);
  expect_valid_witness(v, rec, m->tree());
  EXPECT_EQ(v.witness_kind, "one-step");
  EXPECT_GT(v.witness->raw()[0], 0.0);
}

TEST(NaLinearTest, DuplicateAssetIsRedundant) {
  auto tree = binomial(1);
  NodeVectors prices;
  for (const auto& p : testing::binomial_prices(*tree, 1.0, 2.0, 0.5)) prices.push_back({p[0], p[0]});
  auto m = std::make_shared<FrictionlessModel>(tree, prices);
  auto rec = recession_analytic(m);
  auto v = na_check_linear(rec, *tree, 2);
  expect_valid_witness(v, rec, *tree);
  EXPECT_EQ(v.witness_kind, "redundancy");
  const auto& w = v.witness->raw();
  EXPECT_NEAR(w[0], -w[1], 1e-12);
  for (double x : v.witness_values) EXPECT_NEAR(x, 0.0, 1e-12);
}

TEST(NaHomogeneousTest, TwoStateNoArbitrageFound) {
  auto m = std::make_shared<TwoStateModel>();
  auto v = na_check_homogeneous(recession_analytic(m), m->tree(), 1);
  EXPECT_EQ(v.status, NaStatus::kNaUpToSearch);
  EXPECT_LT(v.margin, 0.0);
  EXPECT_FALSE(analytic_na_certificate(m).empty());
}

TEST(NaHomogeneousTest, MonotoneTreeFindsArbitrage) {
  auto m = frictionless(2.0, 1.5);
  auto rec = recession_analytic(m);
  expect_valid_witness(na_check_homogeneous(rec, m->tree(), 1), rec, m->tree());
}

TEST(NaHomogeneousTest, LobMarginIsMinusInfinity) {
  auto tree = binomial(2);
  LobParams p;
  p.kappa = 0.25;
  p.depth.assign(tree->num_nodes(), 1.0);
  auto m = std::make_shared<LobModel>(tree, testing::binomial_prices(*tree, 1.0, 1.5, 0.75), p);
  auto v = na_check_homogeneous(recession_analytic(m), *tree, 1);
  EXPECT_EQ(v.status, NaStatus::kNaUpToSearch);
  EXPECT_TRUE(ext::is_neg_inf(v.margin));
}

TEST(CheckNaTest, DispatchesByModel) {
  EXPECT_EQ(check_na(frictionless(2.0, 0.5)).status, NaStatus::kNaCertified);
  EXPECT_EQ(check_na(frictionless(2.0, 1.5)).status, NaStatus::kArbitrage);
  EXPECT_EQ(check_na(zero_model()).status, NaStatus::kArbitrage);
}

TEST(ViabilityTest, BinomialIsBounded) {
  auto m = frictionless(2.0, 0.5);
  std::vector<double> f = {-1.0, -1.0};
  auto rep = viability_probe(*m, f, 200, 1);
  EXPECT_FALSE(rep.unbounded_suspect);
  EXPECT_GT(rep.admissible, 0u);
}

TEST(ViabilityTest, MonotoneIsUnboundedSuspect) {
  auto m = frictionless(2.0, 1.5);
  std::vector<double> f = {-1.0, -1.0};
  auto rep = viability_probe(*m, f, 200, 1);
  EXPECT_TRUE(rep.unbounded_suspect);
  ASSERT_TRUE(rep.witness.has_value());
}

TEST(ViabilityTest, ZeroModelIsViableWithoutNa) {
  auto m = zero_model();
  std::vector<double> f = {0.0, 0.0};
  auto rep = viability_probe(*m, f, 200, 1);
  EXPECT_FALSE(rep.unbounded_suspect);
  EXPECT_EQ(rep.sup_max_gain, 0.0);
}

TEST(DominationTest, ProportionalBelowFrictionless) {
  auto tree = binomial(2);
  auto prices = testing::binomial_prices(*tree, 1.0, 2.0, 0.5);
  FrictionlessModel base(tree, prices);
  AdditiveModel cost(tree, prices, {CostFunction::proportional(*tree, 0.05)});
  auto rep = domination_check(cost, base, 1.0, 11);
  EXPECT_TRUE(rep.dominated);
  EXPECT_EQ(rep.points, 121u * 4u);
  auto back = domination_check(base, cost, 1.0, 11);
  EXPECT_FALSE(back.dominated);
  ASSERT_TRUE(back.violation.has_value());
  EXPECT_GT(back.violation->a, back.violation->b);
}

TEST(DominationTest, Reflexive) {
  TwoStateModel m;
  EXPECT_TRUE(domination_check(m, m, 2.0, 21).dominated);
}

TEST(DominationTest, TwoStateHasNoLinearDominator) {
  TwoStateModel m;
  EXPECT_EQ(linear_dominator_search(m, 1.0, 21).dominator, DominatorStatus::kNoLinearDominator);
}

TEST(DominationTest, FixedCostHasNaDominator) {
  auto tree = binomial(1);
  AdditiveModel m(tree, testing::binomial_prices(*tree, 1.0, 2.0, 0.5), {CostFunction::fixed(*tree, 0.1)});
  auto rep = linear_dominator_search(m, 1.0, 21);
  EXPECT_EQ(rep.dominator, DominatorStatus::kFoundNaDominator);
}

// Properties.

TEST(NaPropertyTest, LinearAndSearchAgreeOnFrictionless) {
  Gen g(21);
  int arbitrage = 0, certified = 0;
  for (int trial = 0; trial < 40; ++trial) {
    auto tree = testing::random_tree(g, 3, 2);
    if (tree->num_decision_nodes() > 7) continue;
    const int d = g.integer(1, 2);
    auto m = std::make_shared<FrictionlessModel>(tree, testing::random_prices(g, *tree, d));
    auto rec = recession_analytic(m);
    auto lin = na_check_linear(rec, *tree, d);
    auto hom = na_check_homogeneous(rec, *tree, d);
    if (lin.status == NaStatus::kNaCertified) {
      ++certified;
      expect_sound_certificate(lin, *m);
      EXPECT_EQ(hom.status, NaStatus::kNaUpToSearch) << "trial " << trial;
      EXPECT_LT(hom.margin, 0.0);
    } else {
      ++arbitrage;
      expect_valid_witness(lin, rec, *tree);
      EXPECT_EQ(hom.status, NaStatus::kArbitrage) << "trial " << trial;
    }
  }
  EXPECT_GT(arbitrage, 0);
  EXPECT_GT(certified, 0);
}

TEST(NaPropertyTest, SearchVerdictScaleInvariant) {
  Gen g(22);
  for (int trial = 0; trial < 15; ++trial) {
    auto tree = testing::random_tree(g, 2, 2);
    auto prices = testing::random_prices(g, *tree, 1);
    auto m = std::make_shared<AdditiveModel>(tree, prices,
                                             std::vector<CostFunction>{CostFunction::proportional(*tree, g.uniform(0, 0.3))});
    auto rec = recession_analytic(m);
    const double s = g.uniform(0.1, 10.0);
    RecessionIntegrand scaled{[rec, s](std::size_t l, std::span<const double> z) {
                                std::vector<double> y(z.begin(), z.end());
                                for (double& v : y) v *= s;
                                return rec.eval(l, y);
                              },
                              "analytic", true};
    EXPECT_EQ(na_check_homogeneous(rec, *tree, 1).status, na_check_homogeneous(scaled, *tree, 1).status)
        << "trial " << trial;
  }
}

TEST(NaPropertyTest, DominatedByNaModelIsNa) {
  Gen g(23);
  for (int trial = 0; trial < 20; ++trial) {
    auto tree = testing::random_tree(g, 2, 3);
    auto prices = testing::random_prices(g, *tree, 1);
    auto base = std::make_shared<FrictionlessModel>(tree, prices);
    if (check_na(base).status != NaStatus::kNaCertified) continue;
    auto cost = std::make_shared<AdditiveModel>(
        tree, prices, std::vector<CostFunction>{CostFunction::proportional(*tree, g.uniform(0, 0.3))});
    ASSERT_TRUE(domination_check(*cost, *base, 1.0, 3).dominated);
    EXPECT_NE(check_na(cost).status, NaStatus::kArbitrage) << "trial " << trial;
  }
}

}  // namespace
}  // namespace nccm
