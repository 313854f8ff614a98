#include "nccm/superhedging.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "nccm/arbitrage.hpp"
#include "nccm/error.hpp"
#include "nccm/extended.hpp"
#include "oracles.hpp"

namespace nccm {
namespace {

using testing::Gen;

std::shared_ptr<const ScenarioTree> binomial(int t) { return testing::shared(ScenarioTree::binomial(t)); }

SuperhedgeConfig config(double box, int grid) {
  SuperhedgeConfig c;
  c.box = box;
  c.grid = grid;
  return c;
}

// min over enumerated grid strategies of max over leaves of f - V.
double enumeration_price(const MarketModel& m, const std::vector<double>& f, double box, int grid) {
  AdaptedGridEnumerator e(m.tree(), uniform_node_grids(m.tree(), m.dim(), box, grid), m.dim());
  AdaptedStrategy s;
  double best = ext::kPosInf;
  while (e.next(s)) {
    const auto v = m.evaluate_hat(s);
    double worst = ext::kNegInf;
    for (std::size_t l = 0; l < f.size(); ++l) worst = std::max(worst, ext::is_neg_inf(v[l]) ? ext::kPosInf : f[l] - v[l]);
    best = std::min(best, worst);
  }
  return best;
}

ModelPtr random_additive(Gen& g, std::shared_ptr<const ScenarioTree> tree) {
  auto prices = testing::random_prices(g, *tree, 1);
  if (g.coin()) return std::make_shared<FrictionlessModel>(tree, prices);
  auto cost = g.coin() ? CostFunction::proportional(*tree, g.dyadic(0.0, 0.25, 4))
                       : CostFunction::fixed(*tree, g.dyadic(0.0, 0.25, 4));
  return std::make_shared<AdditiveModel>(tree, prices, std::vector<CostFunction>{cost});
}

std::vector<double> random_claim(Gen& g, std::size_t n) {
  std::vector<double> f(n);
  for (double& v : f) v = g.dyadic(-1.0, 1.0, 6);
  return f;
}

TEST(SuperhedgePriceTest, BinomialCall) {
  auto tree = binomial(1);
  auto prices = testing::binomial_prices(*tree, 1.0, 2.0, 0.5);
  FrictionlessModel m(tree, prices);
  std::vector<double> f = {1.0, 0.0};
  double argmin = 0.0;
  const double oracle = testing::one_period_superhedge_oracle(f, {1.0, -0.5}, 2.0, &argmin);
  EXPECT_NEAR(oracle, 1.0 / 3.0, 1e-15);
  auto r = superhedge_price(m, f, config(2.0, 601));
  EXPECT_EQ(r.method, "additive-dp");
  EXPECT_NEAR(r.price, oracle, 1e-12);
  EXPECT_NEAR(r.witness.raw()[0], argmin, 1e-12);
  ASSERT_TRUE(r.price_lower.has_value());
  EXPECT_LE(*r.price_lower, r.price);
  for (double s : r.slack) EXPECT_NEAR(s, 0.0, 1e-12);
}

TEST(SuperhedgePriceTest, OffGridCallIsBracketed) {
  auto tree = binomial(1);
  FrictionlessModel m(tree, testing::binomial_prices(*tree, 1.0, 2.0, 0.5));
  std::vector<double> f = {1.0, 0.0};
  auto r = superhedge_price(m, f, config(1.0, 401));
  EXPECT_NEAR(r.price, 0.335, 1e-12);
  EXPECT_NEAR(r.witness.raw()[0], 0.665, 1e-12);
  EXPECT_LE(*r.price_lower, 1.0 / 3.0);
}

TEST(SuperhedgePriceTest, ZeroClaimOnA1Model) {
  auto tree = binomial(2);
  auto prices = testing::binomial_prices(*tree, 1.0, 1.5, 0.75);
  AdditiveModel m(tree, prices, {CostFunction::fixed(*tree, 0.1)});
  std::vector<double> f(tree->num_leaves(), 0.0);
  auto r = superhedge_price(m, f, config(1.0, 5));
  EXPECT_EQ(r.price, 0.0);
  EXPECT_TRUE(r.witness.is_zero());
}

TEST(SuperhedgePriceTest, FixedCostCallMatchesEnumeration) {
  auto tree = binomial(1);
  AdditiveModel m(tree, testing::binomial_prices(*tree, 1.0, 2.0, 0.5), {CostFunction::fixed(*tree, 0.1)});
  std::vector<double> f = {1.0, 0.0};
  auto r = superhedge_price(m, f, config(1.0, 2001));
  const double oracle = enumeration_price(m, f, 1.0, 2001);
  EXPECT_EQ(r.price, oracle);
  EXPECT_NEAR(r.price, 1.0 / 3.0 + 0.1, 1e-3);
}

TEST(SuperhedgePriceTest, HistoryDpMatchesAdditiveDp) {
  auto tree = binomial(2);
  auto prices = testing::binomial_prices(*tree, 1.0, 1.5, 0.75);
  auto add = std::make_shared<AdditiveModel>(tree, prices,
                                             std::vector<CostFunction>{CostFunction::proportional(*tree, 0.05)});
  FunctionModel generic(
      tree, 1, [add](std::size_t l, std::span<const double> x) { return add->eval(l, x); },
      ModelFlags{false, false, false, true}, "wrapped");
  std::vector<double> f = {0.5, 0.125, 0.0, 0.0};
  auto a = superhedge_price(*add, f, config(1.0, 9));
  auto h = superhedge_price(generic, f, config(1.0, 9));
  EXPECT_EQ(h.method, "history-dp");
  EXPECT_NEAR(a.price, h.price, 1e-12);
}

TEST(SuperhedgePriceTest, InfeasibleEverywhere) {
  auto tree = binomial(1);
  AdditiveModel m(tree, testing::binomial_prices(*tree, 1.0, 2.0, 0.5),
                  {CostFunction::constraint(*tree, {Box{{2.0}, {3.0}}})});
  std::vector<double> f = {0.0, 0.0};
  auto r = superhedge_price(m, f, config(1.0, 5));
  EXPECT_TRUE(r.infeasible);
  EXPECT_TRUE(ext::is_pos_inf(r.price));
  auto c = config(1.0, 5);
  c.throw_if_infeasible = true;
  try {
    superhedge_price(m, f, c);
    FAIL() << "expected InfeasibleEverywhere";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInfeasibleEverywhere);
  }
}

TEST(SuperhedgePriceTest, RefinementCheckFlagsCoarseGrid) {
  auto tree = binomial(1);
  FrictionlessModel m(tree, testing::binomial_prices(*tree, 1.0, 2.0, 0.5));
  std::vector<double> f = {1.0, 0.0};
  auto c = config(1.0, 7);
  c.refinement_tol = 1e-6;
  try {
    superhedge_price(m, f, c);
    FAIL() << "expected GridTooCoarse";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kGridTooCoarse);
  }
  c.grid = 601;
  c.box = 2.0;
  EXPECT_NO_THROW(superhedge_price(m, f, c));
}

TEST(SuperhedgeFeasibleTest, AttainedClaim) {
  auto tree = binomial(2);
  AdditiveModel m(tree, testing::binomial_prices(*tree, 1.0, 1.5, 0.75), {CostFunction::proportional(*tree, 0.05)});
  AdaptedStrategy bar(*tree, 1);
  bar.raw() = {0.5, -0.25, 1.0};
  auto g = m.evaluate_hat(bar);
  auto r = superhedge_feasible(m, g, config(1.0, 9));
  ASSERT_TRUE(r.feasible);
  ASSERT_TRUE(r.witness.has_value());
  const auto v = m.evaluate_hat(*r.witness);
  for (std::size_t l = 0; l < g.size(); ++l) EXPECT_GE(v[l], g[l] - 1e-12);
}

TEST(SuperhedgeFeasibleTest, ConstantClaims) {
  auto tree = binomial(1);
  FrictionlessModel m(tree, testing::binomial_prices(*tree, 1.0, 2.0, 0.5));
  std::vector<double> one = {1.0, 1.0}, minus = {-1.0, -1.0};
  auto up = superhedge_feasible(m, one, config(1.0, 11));
  EXPECT_FALSE(up.feasible);
  EXPECT_NEAR(up.price, 1.0, 1e-12);
  auto down = superhedge_feasible(m, minus, config(1.0, 11));
  EXPECT_TRUE(down.feasible);
  EXPECT_TRUE(down.witness->is_zero());
}

TEST(StrategyBoundsTest, UniqueSuperhedger) {
  auto tree = binomial(1);
  FrictionlessModel m(tree, testing::binomial_prices(*tree, 1.0, 2.0, 0.5));
  std::vector<double> f = {1.0 - 1.0 / 3.0 - 1e-6, -1.0 / 3.0 - 1e-6};
  auto b = strategy_bounds(m, f, config(2.0, 601));
  ASSERT_EQ(b.m.size(), 1u);
  EXPECT_NEAR(b.m[0], 2.0 / 3.0, 1e-12);
  EXPECT_EQ(b.k_f, (std::vector<double>{b.m[0], b.m[0]}));
}

TEST(StrategyBoundsTest, SaturatesBox) {
  auto tree = binomial(1);
  FrictionlessModel m(tree, testing::binomial_prices(*tree, 1.0, 2.0, 0.5));
  std::vector<double> f = {-1e6, -1e6};
  EXPECT_EQ(strategy_bounds(m, f, config(1.0, 11)).m[0], 1.0);
}

TEST(StrategyBoundsTest, ForcedZero) {
  auto tree = binomial(1);
  AdditiveModel m(tree, testing::binomial_prices(*tree, 1.0, 2.0, 0.5),
                  {CostFunction::constraint(*tree, {Box{{0.0}, {0.0}}})});
  std::vector<double> f = {-0.5, 0.0};
  EXPECT_EQ(strategy_bounds(m, f, config(1.0, 11)).m[0], 0.0);
}

TEST(StrategyBoundsTest, EmptyFeasibleSetThrows) {
  auto tree = binomial(1);
  FrictionlessModel m(tree, testing::binomial_prices(*tree, 1.0, 2.0, 0.5));
  std::vector<double> f = {1.0, 1.0};
  try {
    strategy_bounds(m, f, config(1.0, 11));
    FAIL() << "expected EmptyFeasibleSet";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyFeasibleSet);
  }
}

TEST(ClosednessTest, AttainedLimit) {
  auto tree = binomial(1);
  FrictionlessModel m(tree, testing::binomial_prices(*tree, 1.0, 2.0, 0.5));
  AdaptedStrategy star(*tree, 1);
  star.raw()[0] = 0.5;
  ConvergentSequence seq;
  seq.limit = m.evaluate_hat(star);
  for (int k = 1; k <= 8; ++k) {
    auto h = seq.limit;
    for (double& v : h) v -= 1.0 / k;
    seq.terms.push_back(h);
  }
  auto rep = closedness_probe(m, {seq}, config(1.0, 5));
  EXPECT_TRUE(rep.pass());
  EXPECT_EQ(rep.terms_outside, 0u);
  EXPECT_EQ(rep.limits_in_c, 1u);
}

TEST(ClosednessTest, PriceSequence) {
  auto tree = binomial(1);
  FrictionlessModel m(tree, testing::binomial_prices(*tree, 1.0, 2.0, 0.5));
  std::vector<double> f = {1.0, 0.0};
  auto c = config(2.0, 601);
  auto rep = closedness_probe(m, {price_sequence(m, f, c)}, c);
  EXPECT_TRUE(rep.pass());
  EXPECT_EQ(rep.limits_in_c, 1u);
}

TEST(ClosednessTest, RandomSequences) {
  auto tree = binomial(2);
  AdditiveModel m(tree, testing::binomial_prices(*tree, 1.0, 1.5, 0.75), {CostFunction::fixed(*tree, 0.05)});
  auto c = config(1.0, 9);
  auto seqs = random_convergent_sequences(m, 50, 5, c);
  auto rep = closedness_probe(m, seqs, c);
  EXPECT_EQ(rep.sequences, 50u);
  EXPECT_EQ(rep.terms_outside, 0u);
  EXPECT_EQ(rep.limits_in_c, 50u);
  EXPECT_TRUE(rep.pass());
}

// Properties.

TEST(SuperhedgePropertyTest, DpMatchesEnumeration) {
  Gen g(31);
  for (int trial = 0; trial < 30; ++trial) {
    auto tree = testing::random_tree(g, 2, 2);
    auto m = random_additive(g, tree);
    const auto f = random_claim(g, tree->num_leaves());
    EXPECT_EQ(superhedge_price(*m, f, config(1.0, 5)).price, enumeration_price(*m, f, 1.0, 5)) << "trial " << trial;
  }
}

TEST(SuperhedgePropertyTest, WitnessSlackNonnegative) {
  Gen g(32);
  for (int trial = 0; trial < 40; ++trial) {
    auto tree = testing::random_tree(g, 3, 2);
    auto m = random_additive(g, tree);
    auto r = superhedge_price(*m, random_claim(g, tree->num_leaves()), config(1.0, 7));
    for (double s : r.slack) EXPECT_GE(s, -1e-9);
  }
}

TEST(SuperhedgePropertyTest, MonotoneInClaim) {
  Gen g(33);
  for (int trial = 0; trial < 40; ++trial) {
    auto tree = testing::random_tree(g, 3, 2);
    auto m = random_additive(g, tree);
    auto f = random_claim(g, tree->num_leaves());
    auto fp = f;
    for (double& v : fp) v += g.dyadic(0.0, 0.5, 4);
    EXPECT_LE(superhedge_price(*m, f, config(1.0, 7)).price, superhedge_price(*m, fp, config(1.0, 7)).price);
  }
}

TEST(SuperhedgePropertyTest, TranslationExact) {
  Gen g(34);
  for (int trial = 0; trial < 40; ++trial) {
    auto tree = testing::random_tree(g, 3, 2);
    auto m = random_additive(g, tree);
    auto f = random_claim(g, tree->num_leaves());
    const double c = g.dyadic(-2.0, 2.0, 4);
    auto fc = f;
    for (double& v : fc) v += c;
    EXPECT_EQ(superhedge_price(*m, fc, config(1.0, 5)).price, superhedge_price(*m, f, config(1.0, 5)).price + c)
        << "trial " << trial;
  }
}

TEST(SuperhedgePropertyTest, RefinementNeverIncreasesPrice) {
  Gen g(35);
  for (int trial = 0; trial < 30; ++trial) {
    auto tree = testing::random_tree(g, 2, 2);
    auto m = random_additive(g, tree);
    auto f = random_claim(g, tree->num_leaves());
    double prev = ext::kPosInf;
    for (int grid : {3, 5, 9, 17}) {
      const double p = superhedge_price(*m, f, config(1.0, grid)).price;
      EXPECT_LE(p, prev);
      prev = p;
    }
  }
}

TEST(SuperhedgePropertyTest, NoFreeLunchUnderNa) {
  Gen g(36);
  int certified = 0;
  for (int trial = 0; trial < 40; ++trial) {
    auto tree = testing::random_tree(g, 3, 2);
    auto m = std::make_shared<FrictionlessModel>(tree, testing::random_prices(g, *tree, 1));
    if (check_na(m).status != NaStatus::kNaCertified) continue;
    ++certified;
    std::vector<double> zero(tree->num_leaves(), 0.0);
    EXPECT_NEAR(superhedge_price(*m, zero, config(1.0, 9)).price, 0.0, 1e-12);
  }
  EXPECT_GT(certified, 0);
}

}  // namespace
}  // namespace nccm
