#include "nccm/utility.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "nccm/error.hpp"
#include "nccm/extended.hpp"
#include "oracles.hpp"

namespace nccm {
namespace {

using testing::Gen;

UtilityConfig config(double box, int grid) {
  UtilityConfig c;
  c.box = box;
  c.grid = grid;
  return c;
}

ModelPtr binomial_model(double p_up) {
  auto tree = testing::shared(ScenarioTree::binomial(1, p_up));
  return std::make_shared<FrictionlessModel>(tree, testing::binomial_prices(*tree, 1.0, 2.0, 0.5));
}

ModelPtr random_model(Gen& g) {
  auto tree = testing::random_tree(g, 3, 2);
  const int d = tree->num_decision_nodes() > 3 ? 1 : g.integer(1, 2);
  auto prices = testing::random_prices(g, *tree, d);
  switch (g.integer(0, 3)) {
    case 0:
      return std::make_shared<FrictionlessModel>(tree, prices);
    case 1:
      return std::make_shared<AdditiveModel>(
          tree, prices, std::vector<CostFunction>{CostFunction::proportional(*tree, g.dyadic(0.0, 0.25, 4))});
    case 2:
      return std::make_shared<AdditiveModel>(
          tree, prices, std::vector<CostFunction>{CostFunction::fixed(*tree, g.dyadic(0.0, 0.25, 4))});
    default: {
      auto base = std::make_shared<FrictionlessModel>(tree, prices);
      return std::make_shared<FunctionModel>(
          tree, d, [base](std::size_t l, std::span<const double> x) { return base->eval(l, x) - 0.125 * x[0] * x[0]; },
          ModelFlags{false, false, false, true}, "generic");
    }
  }
}

UtilityIntegrand random_utility(Gen& g) {
  switch (g.integer(0, 3)) {
    case 0:
      return linear_utility();
    case 1:
      return exp_utility(g.uniform(0.5, 2.0));
    case 2:
      return log_utility();
    default:
      return digital_utility(g.dyadic(-0.5, 0.5, 3));
  }
}

TEST(MaximizeUtilityTest, LinearUnderMartingaleWeights) {
  auto m = binomial_model(1.0 / 3.0);
  auto r = maximize_utility(*m, linear_utility(), config(1.0, 11));
  EXPECT_NEAR(r.value, 0.0, 1e-15);
}

TEST(MaximizeUtilityTest, LinearWithDriftHitsBox) {
  auto m = binomial_model(0.5);
  for (double box : {0.5, 1.0, 2.0}) {
    auto r = maximize_utility(*m, linear_utility(), config(box, 11));
    EXPECT_DOUBLE_EQ(r.value, box * (0.5 * 1.0 + 0.5 * -0.5));
    EXPECT_EQ(r.witness.raw()[0], box);
  }
}

TEST(MaximizeUtilityTest, ExpOnTwoStatePicksZero) {
  TwoStateModel m;
  auto u = exp_utility(1.0);
  double argmax = 1.0;
  const double oracle = testing::grid_max_1d(
      [](double x) { return -(std::exp(-std::abs(x)) + std::exp(std::abs(x))) / 2.0; }, 1.0, 21, &argmax);
  auto r = maximize_utility(m, u, config(1.0, 21));
  EXPECT_EQ(r.witness.raw()[0], 0.0);
  EXPECT_EQ(argmax, 0.0);
  EXPECT_DOUBLE_EQ(r.value, oracle);
  EXPECT_DOUBLE_EQ(r.value, -1.0);
}

TEST(MaximizeUtilityTest, LargeFeeBlocksTrading) {
  auto tree = testing::shared(ScenarioTree::binomial(1));
  AdditiveModel m(tree, testing::binomial_prices(*tree, 1.0, 2.0, 0.5), {CostFunction::fixed(*tree, 10.0)});
  auto r = maximize_utility(m, linear_utility(), config(1.0, 21));
  EXPECT_TRUE(r.witness.is_zero());
  EXPECT_EQ(r.value, 0.0);
}

TEST(MaximizeUtilityTest, SingleDecisionMatchesGridOracle) {
  auto m = binomial_model(0.25);
  auto u = log_utility();
  const double oracle = testing::grid_max_1d(
      [&](double x) {
        std::vector<double> v = {x};
        return testing::flat_expected_utility(m->tree(), u.eval, m->evaluate_hat(constant_strategy(m->tree(), 1, v)));
      },
      1.0, 41);
  EXPECT_DOUBLE_EQ(maximize_utility(*m, u, config(1.0, 41)).value, oracle);
}

TEST(MaximizeUtilityTest, AllInfeasible) {
  auto tree = testing::shared(ScenarioTree::binomial(1));
  AdditiveModel m(tree, testing::binomial_prices(*tree, 1.0, 2.0, 0.5),
                  {CostFunction::constraint(*tree, {Box{{2.0}, {3.0}}})});
  try {
    maximize_utility(m, linear_utility(), config(1.0, 5));
    FAIL() << "expected AllInfeasible";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kAllInfeasible);
  }
  auto c = config(1.0, 5);
  c.allow_all_infeasible = true;
  EXPECT_TRUE(ext::is_neg_inf(maximize_utility(m, linear_utility(), c).value));
  EXPECT_TRUE(ext::is_neg_inf(brute_force_value(m, linear_utility(), c).value));
}

TEST(MaximizeUtilityTest, ExcludesMinusInfinityLeaves) {
  auto tree = testing::shared(ScenarioTree::binomial(1));
  AdditiveModel m(tree, testing::binomial_prices(*tree, 1.0, 2.0, 0.5),
                  {CostFunction::constraint(*tree, {Box{{-1.0}, {0.0}}})});
  auto r = maximize_utility(m, linear_utility(), config(1.0, 5));
  EXPECT_TRUE(std::isfinite(r.value));
  EXPECT_LE(r.witness.raw()[0], 0.0);
}

TEST(MaximizeUtilityTest, BudgetExceeded) {
  auto m = std::make_shared<FunctionModel>(
      testing::shared(ScenarioTree::binomial(3)), 2, [](std::size_t, std::span<const double>) { return 0.0; },
      ModelFlags{false, false, false, true}, "flat");
  auto c = config(1.0, 11);
  c.budget = 1000;
  try {
    brute_force_value(*m, linear_utility(), c);
    FAIL() << "expected BudgetExceeded";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kBudgetExceeded);
  }
}

TEST(MaximizeUtilityTest, DigitalUtility) {
  auto tree = testing::shared(ScenarioTree::binomial(2));
  AdditiveModel m(tree, testing::binomial_prices(*tree, 1.0, 1.5, 0.75), {CostFunction::fixed(*tree, 0.0625)});
  auto u = digital_utility(0.5);
  auto c = config(1.0, 9);
  auto dp = maximize_utility(m, u, c);
  EXPECT_EQ(dp.value, brute_force_value(m, u, c).value);
  EXPECT_GT(dp.value, 0.0);
  EXPECT_EQ(testing::flat_expected_utility(*tree, u.eval, m.evaluate_hat(dp.witness)), dp.value);
}

TEST(ParseUtilityTest, Specs) {
  EXPECT_EQ(parse_utility("linear").eval(0, 2.5), 2.5);
  EXPECT_DOUBLE_EQ(parse_utility("exp:2").eval(0, 1.0), -std::exp(-2.0));
  EXPECT_TRUE(ext::is_neg_inf(parse_utility("log").eval(0, -0.5)));
  EXPECT_EQ(parse_utility("digital:1").eval(0, 1.0), 1.0);
  EXPECT_EQ(parse_utility("digital:1").eval(0, 0.5), 0.0);
  EXPECT_THROW(parse_utility("cubic"), Error);
  EXPECT_THROW(parse_utility("exp:abc"), Error);
}

TEST(UtilityAxiomsTest, Cases) {
  auto tree = ScenarioTree::binomial(1);
  std::vector<double> grid;
  for (int i = -8; i <= 8; ++i) grid.push_back(i * 0.5);
  EXPECT_TRUE(check_utility_axioms(log_utility(), tree, grid).pass);
  EXPECT_TRUE(check_utility_axioms(linear_utility(), tree, grid).pass);
  auto sq = check_utility_axioms(square_utility(), tree, {-2.0, -1.0, 0.0, 1.0});
  EXPECT_FALSE(sq.pass);
  ASSERT_TRUE(sq.violation.has_value());
  EXPECT_EQ(sq.violation->w_lo, -2.0);
  EXPECT_EQ(sq.violation->w_hi, -1.0);
  EXPECT_GT(sq.violation->u_lo, sq.violation->u_hi);
}

// Properties.

TEST(UtilityPropertyTest, DpEqualsBruteForce) {
  Gen g(41);
  int checked = 0;
  for (int trial = 0; trial < 60; ++trial) {
    auto m = random_model(g);
    auto u = random_utility(g);
    auto c = config(1.0, g.coin() ? 3 : 5);
    c.allow_all_infeasible = true;
    UtilityResult bf;
    try {
      bf = brute_force_value(*m, u, c);
    } catch (const Error& e) {
      ASSERT_EQ(e.code(), ErrorCode::kBudgetExceeded);
      continue;
    }
    ++checked;
    auto dp = maximize_utility(*m, u, c);
    EXPECT_EQ(dp.value, bf.value) << "trial " << trial << " " << m->name() << " " << u.name;
    if (std::isfinite(dp.value)) {
      EXPECT_EQ(expected_utility(m->tree(), u, m->evaluate_hat(dp.witness)), dp.value);
    }
  }
  EXPECT_GT(checked, 30);
}

TEST(UtilityPropertyTest, NondecreasingInBoxAndGrid) {
  Gen g(42);
  for (int trial = 0; trial < 30; ++trial) {
    auto m = random_model(g);
    auto u = random_utility(g);
    auto small = config(0.5, 3), big = config(1.0, 5), fine = config(1.0, 9);
    for (auto* c : {&small, &big, &fine}) c->allow_all_infeasible = true;
    const double a = maximize_utility(*m, u, small).value;
    const double b = maximize_utility(*m, u, big).value;
    const double f = maximize_utility(*m, u, fine).value;
    EXPECT_LE(a, b) << "trial " << trial;
    EXPECT_LE(b, f) << "trial " << trial;
  }
}

TEST(UtilityPropertyTest, DominationOrdersValues) {
  Gen g(43);
  for (int trial = 0; trial < 30; ++trial) {
    auto tree = testing::random_tree(g, 3, 2);
    auto prices = testing::random_prices(g, *tree, 1);
    FrictionlessModel base(tree, prices);
    AdditiveModel cost(tree, prices, {CostFunction::proportional(*tree, g.dyadic(0.0, 0.25, 4))});
    auto u = random_utility(g);
    auto c = config(1.0, 5);
    c.allow_all_infeasible = true;
    EXPECT_LE(maximize_utility(cost, u, c).value, maximize_utility(base, u, c).value) << "trial " << trial;
  }
}

TEST(UtilityPropertyTest, RandomUtilitiesAreMonotone) {
  Gen g(44);
  auto tree = ScenarioTree::binomial(1);
  std::vector<double> grid;
  for (int i = 0; i <= 40; ++i) grid.push_back(-2.0 + 0.1 * i);
  for (int trial = 0; trial < 20; ++trial) {
    EXPECT_TRUE(check_utility_axioms(random_utility(g), tree, grid).pass);
  }
}

}  // namespace
}  // namespace nccm
