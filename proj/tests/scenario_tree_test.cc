#include "nccm/scenario_tree.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "nccm/error.hpp"
#include "oracles.hpp"

namespace nccm {
namespace {

using testing::Gen;

TEST(ScenarioTreeTest, OneStepBinomial) {
  TreeSpec spec;
  spec.nodes = {{"root", 0, std::nullopt, 1.0}, {"up", 1, "root", 0.5}, {"down", 1, "root", 0.5}};
  auto tree = ScenarioTree::build(spec);
  EXPECT_EQ(tree.horizon(), 1);
  ASSERT_EQ(tree.num_leaves(), 2u);
  EXPECT_DOUBLE_EQ(tree.leaf_prob(0), 0.5);
  EXPECT_DOUBLE_EQ(tree.leaf_prob(1), 0.5);
  EXPECT_EQ(tree.num_decision_nodes(), 1u);
}

TEST(ScenarioTreeTest, SinglePathHasProbabilityOne) {
  auto tree = ScenarioTree::single_path(3);
  EXPECT_EQ(tree.horizon(), 3);
  ASSERT_EQ(tree.num_leaves(), 1u);
  EXPECT_EQ(tree.leaf_prob(0), 1.0);
}

TEST(ScenarioTreeTest, TrinomialLeafProbabilitiesAreProducts) {
  TreeSpec spec;
  spec.nodes.push_back({"r", 0, std::nullopt, 1.0});
  const double p[3] = {0.2, 0.3, 0.5};
  for (int a = 0; a < 3; ++a) spec.nodes.push_back({"a" + std::to_string(a), 1, "r", p[a]});
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) {
      spec.nodes.push_back({"a" + std::to_string(a) + std::to_string(b), 2, "a" + std::to_string(a), p[b]});
    }
  }
  auto tree = ScenarioTree::build(spec);
  ASSERT_EQ(tree.num_leaves(), 9u);
  double sum = 0.0;
  for (std::size_t l = 0; l < 9; ++l) {
    const auto path = tree.path(l);
    const double want = p[std::stoi(tree.node(path[1]).id.substr(1))] * p[tree.node(path[2]).id.back() - '0'];
    EXPECT_NEAR(tree.leaf_prob(l), want, 1e-15);
    sum += tree.leaf_prob(l);
  }
  EXPECT_NEAR(sum, 1.0, 1e-12);
}

TEST(ScenarioTreeTest, RejectsMalformedSpecs) {
  TreeSpec dangling;
  dangling.nodes = {{"r", 0, std::nullopt, 1.0}, {"a", 1, "missing", 1.0}};
  EXPECT_THROW(ScenarioTree::build(dangling), Error);

  TreeSpec two_roots;
  two_roots.nodes = {{"r", 0, std::nullopt, 1.0}, {"s", 0, std::nullopt, 1.0}};
  EXPECT_THROW(ScenarioTree::build(two_roots), Error);

  TreeSpec bad_sum;
  bad_sum.nodes = {{"r", 0, std::nullopt, 1.0}, {"a", 1, "r", 0.5}, {"b", 1, "r", 0.4}};
  EXPECT_THROW(ScenarioTree::build(bad_sum), Error);

  TreeSpec early_leaf;
  early_leaf.nodes = {{"r", 0, std::nullopt, 1.0}, {"a", 1, "r", 0.5}, {"b", 1, "r", 0.5}, {"c", 2, "a", 1.0}};
  EXPECT_THROW(ScenarioTree::build(early_leaf), Error);

  TreeSpec duplicate;
  duplicate.nodes = {{"r", 0, std::nullopt, 1.0}, {"a", 1, "r", 0.5}, {"a", 1, "r", 0.5}};
  EXPECT_THROW(ScenarioTree::build(duplicate), Error);
}

TEST(ScenarioTreeTest, ConstantStrategyRestrictsToItself) {
  auto tree = ScenarioTree::binomial(1);
  std::vector<double> q = {0.75};
  auto s = constant_strategy(tree, 1, q);
  for (std::size_t l = 0; l < tree.num_leaves(); ++l) EXPECT_EQ(restrict_to_path(tree, s, l), q);
}

TEST(ScenarioTreeTest, ZeroStrategyRestrictsToZeroVector) {
  auto tree = ScenarioTree::binomial(3);
  AdaptedStrategy s(tree, 2);
  EXPECT_TRUE(s.is_zero());
  for (std::size_t l = 0; l < tree.num_leaves(); ++l) {
    EXPECT_EQ(restrict_to_path(tree, s, l), std::vector<double>(6, 0.0));
  }
}

TEST(ScenarioTreeTest, PathRestrictionFollowsNodes) {
  auto tree = ScenarioTree::binomial(2);
  AdaptedStrategy s(tree, 1);
  for (int n : tree.decision_nodes()) s.at(tree, n)[0] = n;
  const auto uu = *tree.find("uu");
  std::size_t leaf = static_cast<std::size_t>(tree.node(uu).leaf_index);
  const auto root = tree.root();
  const auto up = *tree.find("u");
  EXPECT_EQ(restrict_to_path(tree, s, leaf), (std::vector<double>{static_cast<double>(root), static_cast<double>(up)}));
}

TEST(ScenarioTreeTest, EnumeratorCounts) {
  auto t1 = ScenarioTree::binomial(1);
  AdaptedGridEnumerator e1(t1, uniform_node_grids(t1, 1, 1.0, 3), 1);
  EXPECT_EQ(e1.count(), 3u);
  AdaptedStrategy s;
  std::set<double> seen;
  while (e1.next(s)) seen.insert(s.raw()[0]);
  EXPECT_EQ(seen, (std::set<double>{-1.0, 0.0, 1.0}));

  auto t2 = ScenarioTree::binomial(2);
  AdaptedGridEnumerator e2(t2, uniform_node_grids(t2, 1, 1.0, 2), 1);
  EXPECT_EQ(e2.count(), 8u);
  std::size_t n = 0;
  while (e2.next(s)) ++n;
  EXPECT_EQ(n, 8u);
  e2.reset();
  EXPECT_TRUE(e2.next(s));
}

TEST(ScenarioTreeTest, EmptyGridIsRejected) {
  auto tree = ScenarioTree::binomial(1);
  NodeGrids grids(1);
  EXPECT_THROW(AdaptedGridEnumerator(tree, grids, 1), Error);
}

TEST(ScenarioTreeTest, EnumeratorCapIsEnforced) {
  auto tree = ScenarioTree::binomial(3);
  EXPECT_THROW(AdaptedGridEnumerator(tree, uniform_node_grids(tree, 1, 1.0, 11), 1, 1000), Error);
}

TEST(ScenarioTreeTest, FiltrationAtoms) {
  auto bin = ScenarioTree::binomial(1);
  ASSERT_EQ(bin.ft_sets(0).size(), 1u);
  EXPECT_EQ(bin.ft_sets(0)[0], (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(bin.ft_sets(1).size(), 2u);

  auto tri = ScenarioTree::uniform(2, 3);
  auto atoms = tri.ft_sets(1);
  ASSERT_EQ(atoms.size(), 3u);
  for (const auto& a : atoms) EXPECT_EQ(a.size(), 3u);
}

TEST(ScenarioTreeTest, AxisAndProductGrids) {
  EXPECT_EQ(axis_grid(1.0, 1), std::vector<double>{0.0});
  EXPECT_EQ(axis_grid(1.0, 3), (std::vector<double>{-1.0, 0.0, 1.0}));
  auto g = product_grid({0.0, 1.0}, 2);
  ASSERT_EQ(g.size(), 4u);
  EXPECT_EQ(g[1], (std::vector<double>{0.0, 1.0}));
}

// Properties over random trees.

TEST(ScenarioTreePropertyTest, LeafProbabilitiesPositiveAndSumToOne) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Gen g(seed);
    auto tree = testing::random_tree(g, 4, 3);
    double sum = 0.0;
    for (std::size_t l = 0; l < tree->num_leaves(); ++l) {
      EXPECT_GT(tree->leaf_prob(l), 0.0);
      sum += tree->leaf_prob(l);
    }
    EXPECT_NEAR(sum, 1.0, 1e-10) << "seed " << seed;
  }
}

TEST(ScenarioTreePropertyTest, AtomsPartitionAndRefine) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Gen g(seed);
    auto tree = testing::random_tree(g, 4, 3);
    std::vector<std::size_t> prev_owner;
    for (int t = 0; t <= tree->horizon(); ++t) {
      auto atoms = tree->ft_sets(t);
      std::vector<std::size_t> owner(tree->num_leaves(), atoms.size());
      for (std::size_t a = 0; a < atoms.size(); ++a) {
        for (std::size_t l : atoms[a]) {
          EXPECT_EQ(owner[l], atoms.size()) << "leaf in two atoms";
          owner[l] = a;
        }
      }
      for (std::size_t o : owner) EXPECT_LT(o, atoms.size()) << "leaf in no atom";
      if (!prev_owner.empty()) {
        // Leaves sharing a time-t atom share their time-(t-1) atom.
        for (std::size_t i = 0; i < owner.size(); ++i) {
          for (std::size_t j = 0; j < owner.size(); ++j) {
            if (owner[i] == owner[j]) {
              EXPECT_EQ(prev_owner[i], prev_owner[j]);
            }
          }
        }
      }
      prev_owner = owner;
    }
  }
}

TEST(ScenarioTreePropertyTest, EqualOnPathGivesEqualRestriction) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Gen g(seed);
    auto tree = testing::random_tree(g, 3, 3);
    AdaptedStrategy a(*tree, 2);
    for (double& v : a.raw()) v = g.uniform(-1, 1);
    const auto leaf = static_cast<std::size_t>(g.integer(0, static_cast<int>(tree->num_leaves()) - 1));
    AdaptedStrategy b = a;
    const auto path = tree->path(leaf);
    for (int n : tree->decision_nodes()) {
      if (std::find(path.begin(), path.end(), n) == path.end()) {
        for (double& v : b.at(*tree, n)) v = g.uniform(-5, 5);
      }
    }
    EXPECT_EQ(restrict_to_path(*tree, a, leaf), restrict_to_path(*tree, b, leaf));
  }
}

}  // namespace
}  // namespace nccm
