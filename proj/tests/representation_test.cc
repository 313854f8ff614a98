#include "nccm/representation.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "nccm/extended.hpp"
#include "oracles.hpp"

namespace nccm {
namespace {

using testing::Gen;

std::shared_ptr<const ScenarioTree> binomial1() { return testing::shared(ScenarioTree::binomial(1)); }

ModelPtr frictionless() {
  auto tree = binomial1();
  return std::make_shared<FrictionlessModel>(tree, testing::binomial_prices(*tree, 1.0, 2.0, 0.5));
}

ModelPtr fixed_cost(double lambda) {
  auto tree = binomial1();
  return std::make_shared<AdditiveModel>(tree, testing::binomial_prices(*tree, 1.0, 2.0, 0.5),
                                         std::vector<CostFunction>{CostFunction::fixed(*tree, lambda)});
}

ReconstructionConfig small_config(int points = 21, int depth = 6) {
  ReconstructionConfig c;
  c.box = 1.0;
  c.lattice_points = points;
  c.ladder_depth = depth;
  return c;
}

TEST(AxiomCheckTest, BuiltinsPass) {
  auto tree = testing::shared(ScenarioTree::binomial(2));
  auto prices = testing::binomial_prices(*tree, 1.0, 1.5, 0.75);
  for (ModelPtr m : {ModelPtr(std::make_shared<FrictionlessModel>(tree, prices)),
                     ModelPtr(std::make_shared<AdditiveModel>(
                         tree, prices, std::vector<CostFunction>{CostFunction::fixed(*tree, 0.1)}))}) {
    auto rep = check_axioms(as_functional(m), 200, 1);
    EXPECT_TRUE(rep.pass()) << m->name();
    EXPECT_EQ(rep.a2_checks, 3u * 200u);
  }
}

TEST(AxiomCheckTest, DetectsOtherBranchDependence) {
  auto tree = testing::shared(ScenarioTree::binomial(2));
  FrictionlessModel base(tree, testing::binomial_prices(*tree, 1.0, 1.5, 0.75));
  const int up = *tree->find("u"), down = *tree->find("d");
  LocalFunctional f;
  f.tree = tree;
  f.dim = 1;
  f.name = "broken";
  f.hat = [&, up, down](const AdaptedStrategy& s) {
    auto v = base.evaluate_hat(s);
    for (std::size_t l : tree->leaves_under(up)) v[l] += s.at(*tree, down)[0];
    return v;
  };
  auto rep = check_axioms(f, 50, 2);
  EXPECT_TRUE(rep.a1_pass);
  EXPECT_FALSE(rep.a2_pass);
  ASSERT_TRUE(rep.a2_witness.has_value());
  EXPECT_EQ(rep.a2_witness->time, 1);
  EXPECT_EQ(rep.a2_witness->atom_node, up);
}

TEST(AxiomCheckTest, DetectsNonzeroAtOrigin) {
  auto m = frictionless();
  LocalFunctional f = as_functional(m);
  f.hat = [m](const AdaptedStrategy& s) {
    auto v = m->evaluate_hat(s);
    for (double& x : v) x += 1.0;
    return v;
  };
  auto rep = check_axioms(f, 10, 3);
  EXPECT_FALSE(rep.a1_pass);
  EXPECT_EQ(rep.at_zero, (std::vector<double>{1.0, 1.0}));
}

TEST(BallSupremumTest, FrictionlessUnitBall) {
  std::vector<double> q = {0.0};
  auto p = p_qr(as_functional(frictionless()), q, 1.0);
  EXPECT_NEAR(p[0], 1.0, 1e-8);
  EXPECT_LT(p[0], 1.0);
  EXPECT_NEAR(p[1], 0.5, 1e-8);
}

TEST(BallSupremumTest, FixedCostMatchesGridOracle) {
  auto m = fixed_cost(0.1);
  std::vector<double> q = {0.0};
  auto p = p_qr(as_functional(m), q, 1.0);
  for (std::size_t l = 0; l < 2; ++l) {
    // Open ball: the oracle grid stops just short of the boundary.
    const double oracle = testing::grid_max_1d(
        [&](double x) {
          std::vector<double> v = {x};
          return m->eval(l, v);
        },
        1.0 - 1e-9, 200001);
    EXPECT_NEAR(p[l], oracle, 1e-8) << "leaf " << l;
  }
  EXPECT_NEAR(p[0], 0.9, 1e-8);
  EXPECT_NEAR(p[1], 0.4, 1e-8);
}

TEST(BallSupremumTest, ShrinkingRadiusDecreasesToValue) {
  auto f = as_functional(fixed_cost(0.1));
  std::vector<double> q = {0.25};
  double prev = ext::kPosInf;
  for (int k = 0; k <= 20; ++k) {
    const double p = p_qr(f, q, std::ldexp(1.0, -k))[0];
    EXPECT_LE(p, prev);
    prev = p;
  }
  EXPECT_NEAR(prev, 0.25 - 0.1, 1e-5);
}

TEST(ReconstructionTest, FrictionlessRecovered) {
  auto f = as_functional(frictionless());
  auto rec = Reconstruction::build(f, small_config());
  auto rep = recovery_report(f, rec);
  EXPECT_LE(rep.max_limit_error, 1e-6);
  EXPECT_FALSE(rep.infinity_mismatch);
}

TEST(ReconstructionTest, TwoStateRecoversAbsoluteValue) {
  auto f = as_functional(std::make_shared<TwoStateModel>());
  auto rec = Reconstruction::build(f, small_config());
  for (std::size_t q = 0; q < rec.lattice_size(); ++q) {
    const double x = rec.lattice_point(q)[0];
    EXPECT_NEAR(rec.limit_value(0, q), std::abs(x), 1e-6);
    EXPECT_NEAR(rec.limit_value(1, q), -std::abs(x), 1e-6);
  }
}

TEST(ReconstructionTest, FixedCostZeroAtOrigin) {
  auto f = as_functional(fixed_cost(0.1));
  auto rec = Reconstruction::build(f, small_config());
  const std::size_t origin = 10;
  ASSERT_EQ(rec.lattice_point(origin)[0], 0.0);
  for (std::size_t l = 0; l < 2; ++l) EXPECT_NEAR(rec.limit_value(l, origin), 0.0, 1e-9);
}

TEST(ReconstructionTest, ConstraintKeepsMinusInfinity) {
  auto tree = binomial1();
  auto m = std::make_shared<AdditiveModel>(tree, testing::binomial_prices(*tree, 1.0, 2.0, 0.5),
                                           std::vector<CostFunction>{CostFunction::constraint(*tree, {Box{{0.0}, {1.0}}})});
  auto f = as_functional(m);
  auto rec = Reconstruction::build(f, small_config());
  auto rep = recovery_report(f, rec);
  EXPECT_FALSE(rep.infinity_mismatch);
  EXPECT_TRUE(ext::is_neg_inf(rec.limit_value(0, 0)));
}

TEST(UscCheckTest, ContinuousModelPasses) {
  EXPECT_TRUE(check_usc(as_functional(frictionless()), 20, 1).pass);
}

TEST(UscCheckTest, FixedCostPassesAtOrigin) {
  auto f = as_functional(fixed_cost(0.1));
  AdaptedStrategy zero(*f.tree, 1), dir(*f.tree, 1);
  dir.raw()[0] = 1.0;
  EXPECT_TRUE(check_usc_sequence(f, zero, dir).pass);
  EXPECT_TRUE(check_usc(f, 20, 2).pass);
}

TEST(UscCheckTest, LowerSemicontinuousStepFails) {
  auto tree = binomial1();
  auto step = std::make_shared<FunctionModel>(
      tree, 1, [](std::size_t, std::span<const double> x) { return x[0] > 0.0 ? 1.0 : 0.0; },
      ModelFlags{false, false, false, false}, "step");
  auto rep = check_usc(as_functional(step), 0, 1);
  EXPECT_FALSE(rep.pass);
  ASSERT_TRUE(rep.witness.has_value());
  EXPECT_TRUE(rep.witness->target.is_zero());
  EXPECT_GT(rep.witness->direction.raw()[0], 0.0);
  EXPECT_EQ(rep.witness->limsup, 1.0);
}

TEST(EnvelopeTest, GapsMatchContinuity) {
  auto cfg = small_config();
  const std::size_t origin = 10;
  auto fr = envelopes(as_functional(frictionless()), cfg);
  for (double g : fr.max_gap) EXPECT_LE(g, 1e-6);
  auto ts = envelopes(as_functional(std::make_shared<TwoStateModel>()), cfg);
  for (double g : ts.max_gap) EXPECT_LE(g, 1e-6);
  auto fx = envelopes(as_functional(fixed_cost(0.1)), cfg);
  for (std::size_t l = 0; l < 2; ++l) EXPECT_NEAR(fx.gap[l][origin], 0.1, 1e-6);
}

// Properties.

TEST(ReconstructionPropertyTest, TableMonotoneInBalls) {
  for (auto m : {frictionless(), fixed_cost(0.1)}) {
    auto rec = Reconstruction::build(as_functional(m), small_config(11, 4));
    const auto& radii = rec.radii();
    for (std::size_t l = 0; l < rec.num_leaves(); ++l) {
      for (std::size_t q = 0; q < rec.lattice_size(); ++q) {
        for (std::size_t qp = 0; qp < rec.lattice_size(); ++qp) {
          const double dist = std::abs(rec.lattice_point(q)[0] - rec.lattice_point(qp)[0]);
          for (std::size_t k = 0; k < radii.size(); ++k) {
            for (std::size_t j = 0; j < radii.size(); ++j) {
              if (radii[j] < radii[k] + dist) continue;
              EXPECT_LE(rec.table(l, q, k), rec.table(l, qp, j)) << m->name();
            }
          }
        }
      }
    }
  }
}

TEST(ReconstructionPropertyTest, EnvelopeDominatesOnLattice) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Gen g(seed);
    auto tree = testing::shared(ScenarioTree::binomial(2));
    auto prices = testing::random_prices(g, *tree, 1);
    auto m = std::make_shared<AdditiveModel>(tree, prices,
                                             std::vector<CostFunction>{CostFunction::fixed(*tree, g.uniform(0, 0.3))});
    auto f = as_functional(m);
    auto rec = Reconstruction::build(f, small_config(5, 3));
    const auto axis = rec.axis();
    for (int s = 0; s < 20; ++s) {
      AdaptedStrategy th(*tree, 1);
      for (double& v : th.raw()) v = axis[static_cast<std::size_t>(g.integer(0, 4))];
      const auto vals = m->evaluate_hat(th);
      for (std::size_t l = 0; l < tree->num_leaves(); ++l) {
        EXPECT_GE(rec.ladder_value(l, restrict_to_path(*tree, th, l)), vals[l]);
      }
    }
  }
}

TEST(ReconstructionPropertyTest, LadderErrorShrinksWithDepth) {
  auto f = as_functional(frictionless());
  double prev = ext::kPosInf;
  for (int depth : {2, 4, 6, 8}) {
    auto rep = recovery_report(f, Reconstruction::build(f, small_config(11, depth)));
    EXPECT_LE(rep.max_ladder_error, prev);
    prev = rep.max_ladder_error;
  }
  EXPECT_LE(prev, 0.01);
}

TEST(ReconstructionPropertyTest, EnvelopeUpperSemicontinuousAlongLattice) {
  auto f = as_functional(fixed_cost(0.1));
  auto rec = Reconstruction::build(f, small_config(21, 6));
  for (std::size_t l = 0; l < rec.num_leaves(); ++l) {
    for (std::size_t q = 1; q + 1 < rec.lattice_size(); ++q) {
      const double x = rec.lattice_point(q)[0];
      const double here = rec.ladder_value(l, rec.lattice_point(q));
      for (int e = 20; e <= 40; e += 4) {
        for (double sgn : {-1.0, 1.0}) {
          std::vector<double> y = {x + sgn * std::ldexp(1.0, -e)};
          EXPECT_LE(rec.ladder_value(l, y), here);
        }
      }
    }
  }
}

}  // namespace
}  // namespace nccm
