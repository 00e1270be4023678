#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "helpers.hpp"

using namespace dbay;
using testing_helpers::constant_fn;
using testing_helpers::graph_instance;
using testing_helpers::make_fn;
using testing_helpers::unit_domains;

namespace {

// Checks the structural pseudo-tree invariants against the graph.
void expect_valid_tree(const ConstraintGraph& g, const PseudoTree& t) {
  std::size_t parentless = 0;
  for (AgentId a = 0; a < g.agent_count; ++a) {
    if (t.is_root(a)) ++parentless;
    for (AgentId c : t.node(a).children) EXPECT_EQ(t.node(c).parent, a);
    for (AgentId pp : t.node(a).pseudo_parents) EXPECT_TRUE(t.is_ancestor(pp, a));
  }
  EXPECT_EQ(parentless, t.roots().size());
  for (const auto& [a, b] : g.edges) {
    EXPECT_TRUE(t.is_ancestor(a, b) || t.is_ancestor(b, a)) << a << "-" << b;
    const bool tree_edge = t.node(a).parent == b || t.node(b).parent == a;
    const bool back_edge = std::ranges::count(t.node(a).pseudo_parents, b) +
                               std::ranges::count(t.node(b).pseudo_parents, a) ==
                           1;
    EXPECT_NE(tree_edge, back_edge) << a << "-" << b;
  }
}

// The five-agent example: a0 root, leaves a1, a3, a4, back edge a0-a3 (0-based ids).
DcopInstance five_agent_instance() {
  return graph_instance(5, {{0, 1}, {0, 2}, {2, 3}, {2, 4}, {0, 3}});
}

}  // namespace

TEST(ContinuousDomain, RejectsEmptyInterval) {
  EXPECT_THROW(ContinuousDomain(1.0, 1.0), Error);
  EXPECT_THROW(ContinuousDomain(2.0, 1.0), Error);
}

TEST(ContinuousDomain, UnitMappingHitsEndpointsExactly) {
  ContinuousDomain d(-180.0, 180.0);
  EXPECT_EQ(d.from_unit(0.0), -180.0);
  EXPECT_EQ(d.from_unit(1.0), 180.0);
  EXPECT_DOUBLE_EQ(d.from_unit(0.5), 0.0);
  EXPECT_DOUBLE_EQ(d.to_unit(90.0), 0.75);
}

TEST(GridUnit, EndpointsAndMidpoint) {
  EXPECT_EQ(grid_unit(0, 1), 0.5);
  EXPECT_EQ(grid_unit(0, 5), 0.0);
  EXPECT_EQ(grid_unit(4, 5), 1.0);
  EXPECT_EQ(grid_unit(2, 5), 0.5);
}

TEST(DcopInstance, ValidatesScopes) {
  EXPECT_THROW(DcopInstance(unit_domains(2), {constant_fn({0, 0}, 1.0)}, Aggregation::sum), Error);
  EXPECT_THROW(DcopInstance(unit_domains(2), {constant_fn({2}, 1.0)}, Aggregation::sum), Error);
  EXPECT_THROW(DcopInstance(unit_domains(2), {constant_fn({}, 1.0)}, Aggregation::sum), Error);
  try {
    DcopInstance(unit_domains(2), {}, Aggregation::sum, {0, 0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::invalid_instance);
  }
}

TEST(ConstraintGraph, SingleBinaryFunctionGivesOneEdge) {
  auto g = build_constraint_graph(graph_instance(2, {{0, 1}}));
  ASSERT_EQ(g.edges.size(), 1u);
  EXPECT_EQ(g.edges[0], (std::pair<AgentId, AgentId>{0, 1}));
}

TEST(ConstraintGraph, NoFunctionsGivesEdgelessGraph) {
  DcopInstance inst(unit_domains(3), {}, Aggregation::sum);
  EXPECT_TRUE(build_constraint_graph(inst).edges.empty());
}

TEST(ConstraintGraph, FiveAgentExampleHasFiveEdges) {
  auto g = build_constraint_graph(five_agent_instance());
  const std::vector<std::pair<AgentId, AgentId>> expected{{0, 1}, {0, 2}, {0, 3}, {2, 3}, {2, 4}};
  EXPECT_EQ(g.edges, expected);
}

TEST(ConstraintGraph, TernaryFunctionContributesClique) {
  DcopInstance inst(unit_domains(3), {constant_fn({0, 1, 2}, 0.0)}, Aggregation::sum);
  EXPECT_EQ(build_constraint_graph(inst).edges.size(), 3u);
}

TEST(PseudoTree, PathGraphIsChain) {
  auto g = build_constraint_graph(graph_instance(3, {{0, 1}, {1, 2}}));
  auto t = build_pseudo_tree(g, 0);
  EXPECT_EQ(t.root(), 0u);
  EXPECT_EQ(t.node(1).parent, 0u);
  EXPECT_EQ(t.node(2).parent, 1u);
  for (AgentId a = 0; a < 3; ++a) EXPECT_TRUE(t.node(a).pseudo_parents.empty());
}

TEST(PseudoTree, TriangleHasOneBackEdge) {
  auto g = build_constraint_graph(graph_instance(3, {{0, 1}, {1, 2}, {0, 2}}));
  auto t = build_pseudo_tree(g, 0);
  EXPECT_EQ(t.node(1).parent, 0u);
  EXPECT_EQ(t.node(2).parent, 1u);
  EXPECT_EQ(t.node(2).pseudo_parents, std::vector<AgentId>{0});
  EXPECT_EQ(t.node(0).pseudo_children, std::vector<AgentId>{2});
}

TEST(PseudoTree, FiveAgentExampleHierarchy) {
  auto g = build_constraint_graph(five_agent_instance());
  auto t = build_pseudo_tree(g, 0);
  EXPECT_EQ(t.root(), 0u);
  EXPECT_EQ(t.node(0).children, (std::vector<AgentId>{1, 2}));
  EXPECT_EQ(t.node(2).children, (std::vector<AgentId>{3, 4}));
  EXPECT_TRUE(t.is_leaf(1));
  EXPECT_TRUE(t.is_leaf(3));
  EXPECT_TRUE(t.is_leaf(4));
  EXPECT_EQ(t.node(3).pseudo_parents, std::vector<AgentId>{0});
  EXPECT_EQ(t.node(0).pseudo_children, std::vector<AgentId>{3});
  expect_valid_tree(g, t);
}

TEST(PseudoTree, DisconnectedGraphRaisesForSingleRoot) {
  auto g = build_constraint_graph(graph_instance(4, {{0, 1}, {2, 3}}));
  try {
    build_pseudo_tree(g, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::disconnected_graph);
  }
  auto forest = build_pseudo_forest(g);
  EXPECT_EQ(forest.roots(), (std::vector<AgentId>{0, 2}));
  expect_valid_tree(g, forest);
}

TEST(PseudoTree, RandomGraphsHaveNoCrossEdges) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng() % 12;
    auto edges = testing_helpers::random_connected_edges(rng, n);
    auto g = ConstraintGraph::from_edges(n, {edges.begin(), edges.end()});
    const AgentId root = rng() % n;
    auto t = build_pseudo_tree(g, root);
    EXPECT_EQ(t.root(), root);
    EXPECT_EQ(t.preorder().size(), n);
    expect_valid_tree(g, t);
    if (::testing::Test::HasFailure()) break;
  }
}

TEST(PseudoTree, DeterministicRebuild) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng() % 10;
    auto edges = testing_helpers::random_connected_edges(rng, n);
    std::vector<testing_helpers::UtilityFunction> fs;
    for (auto [a, b] : edges) fs.push_back(constant_fn({a, b}, 1.0));
    DcopInstance inst(unit_domains(n), fs, Aggregation::sum);
    EXPECT_EQ(prepare_pseudo_tree(inst), prepare_pseudo_tree(inst));
  }
}

TEST(FunctionAllocation, UnaryIsLocal) {
  DcopInstance inst(unit_domains(3), {constant_fn({1, 0}, 0.0), constant_fn({1}, 0.0)},
                    Aggregation::sum);
  auto t = prepare_pseudo_tree(inst);
  EXPECT_EQ(t.node(1).local_functions, std::vector<std::size_t>{1});
  EXPECT_EQ(t.node(1).shared_functions, std::vector<std::size_t>{0});
  EXPECT_TRUE(t.node(0).shared_functions.empty());
}

TEST(FunctionAllocation, TernaryGoesToDeepestAgent) {
  auto inst = five_agent_instance();
  std::vector<testing_helpers::UtilityFunction> fs(inst.functions().begin(), inst.functions().end());
  fs.push_back(constant_fn({0, 2, 3}, 0.0));
  DcopInstance with_ternary(unit_domains(5), fs, Aggregation::sum);
  auto t = prepare_pseudo_tree(with_ternary);
  const auto& shared = t.node(3).shared_functions;
  EXPECT_NE(std::ranges::find(shared, fs.size() - 1), shared.end());
}

TEST(FunctionAllocation, CrossBranchScopeRejected) {
  // Tree 0-1, 0-2 from binary functions; a ternary over {1,2} alone would add an edge,
  // so allocate against a tree built without it.
  DcopInstance inst(unit_domains(3), {constant_fn({0, 1}, 0.0), constant_fn({0, 2}, 0.0)},
                    Aggregation::sum);
  auto t = build_pseudo_forest(build_constraint_graph(inst));
  DcopInstance other(unit_domains(3), {constant_fn({1, 2}, 0.0)}, Aggregation::sum);
  try {
    allocate_functions(other, t);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::scope_not_on_branch);
  }
}

TEST(FunctionAllocation, PartitionAndAncestorScopes) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng() % 10;
    std::vector<testing_helpers::UtilityFunction> fs;
    const std::size_t k = rng() % 15;
    for (std::size_t i = 0; i < k; ++i) {
      std::vector<VariableId> scope;
      for (VariableId v = 0; v < n; ++v) {
        if (rng() % 3 == 0) scope.push_back(v);
      }
      if (scope.empty()) scope.push_back(rng() % n);
      std::shuffle(scope.begin(), scope.end(), rng);
      fs.push_back(constant_fn(scope, 0.0));
    }
    DcopInstance inst(unit_domains(n), fs, Aggregation::sum);
    auto t = prepare_pseudo_tree(inst);
    std::vector<int> seen(k, 0);
    for (AgentId a = 0; a < n; ++a) {
      for (std::size_t f : t.functions_of(a)) {
        ++seen[f];
        for (VariableId v : inst.function(f).scope) {
          const AgentId b = inst.agent_of(v);
          EXPECT_TRUE(b == a || t.is_ancestor(b, a));
          if (b != a) {
            EXPECT_NE(std::ranges::find(t.node(a).separator, b), t.node(a).separator.end());
          }
        }
      }
    }
    for (std::size_t f = 0; f < k; ++f) EXPECT_EQ(seen[f], 1);
  }
}

TEST(EvaluateObjective, EmptySumIsZero) {
  DcopInstance inst(unit_domains(2), {}, Aggregation::sum);
  Assignment a(2);
  a.set(0, 0.1);
  a.set(1, 0.2);
  EXPECT_EQ(evaluate_objective(inst, a), 0.0);
}

TEST(EvaluateObjective, MaxPicksLargest) {
  DcopInstance inst(unit_domains(1), {constant_fn({0}, 2.0), constant_fn({0}, 5.0)}, Aggregation::max);
  Assignment a(1);
  a.set(0, 0.5);
  EXPECT_EQ(evaluate_objective(inst, a), 5.0);
}

TEST(EvaluateObjective, RejectsIncompleteAndOutOfDomain) {
  DcopInstance inst(unit_domains(2), {constant_fn({0, 1}, 1.0)}, Aggregation::sum);
  Assignment a(2);
  a.set(0, 0.5);
  try {
    evaluate_objective(inst, a);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::incomplete_assignment);
  }
  a.set(1, 1.5);
  try {
    evaluate_objective(inst, a);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::out_of_domain);
  }
}

TEST(EvaluateObjective, SumIsPermutationInvariant) {
  std::mt19937_64 rng(14);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 4;
    std::vector<testing_helpers::UtilityFunction> fs;
    for (int i = 0; i < 20; ++i) {
      const double a = u(rng), b = u(rng);
      const VariableId v = rng() % n, w = (v + 1 + rng() % (n - 1)) % n;
      fs.push_back(make_fn({v, w}, [a, b](std::span<const double> x) { return a * x[0] + b * x[1] * x[1]; }));
    }
    Assignment asg(n);
    for (VariableId v = 0; v < n; ++v) asg.set(v, (u(rng) + 10.0) / 20.0);
    const double base = evaluate_objective(DcopInstance(unit_domains(n), fs, Aggregation::sum), asg);
    std::shuffle(fs.begin(), fs.end(), rng);
    const double shuffled = evaluate_objective(DcopInstance(unit_domains(n), fs, Aggregation::sum), asg);
    EXPECT_NEAR(base, shuffled, 1e-12 * std::max(1.0, std::abs(base)));
  }
}
