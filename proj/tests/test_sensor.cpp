#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "dbay/dbay.hpp"

using namespace dbay;

TEST(TargetUtility, Examples) {
  const Point s{0, 0};
  EXPECT_EQ(target_utility(0.0, s, {0.5, 0.0}, 36, 1), 1.0);
  EXPECT_EQ(target_utility(90.0, s, {0.0, 0.7}, 36, 1), 1.0);
  EXPECT_EQ(target_utility(0.0, s, {1.5, 0.0}, 36, 1), 0.0);
  EXPECT_DOUBLE_EQ(target_utility(18.0, s, {0.5, 0.0}, 36, 1), 0.5);
  EXPECT_DOUBLE_EQ(target_utility(-18.0, s, {0.5, 0.0}, 36, 1), 0.5);
  EXPECT_EQ(target_utility(40.0, s, {0.5, 0.0}, 36, 1), 0.0);
}

TEST(TargetUtility, WrapAwareAcrossPlusMinus180) {
  const Point s{0, 0}, t{-0.5, 0.0};  // bearing 180
  EXPECT_DOUBLE_EQ(target_utility(-171.0, s, t, 36, 1, true), 0.75);
  EXPECT_EQ(target_utility(-171.0, s, t, 36, 1, false), 0.0);
  EXPECT_DOUBLE_EQ(wrap_deg(350.0), -10.0);
  EXPECT_DOUBLE_EQ(wrap_deg(-190.0), 170.0);
  EXPECT_DOUBLE_EQ(wrap_deg(-180.0), 180.0);
}

TEST(SensorGrid, SpacingLeavesNoGap) {
  auto g = sensor_grid(6, 1.0);
  ASSERT_EQ(g.size(), 6u);
  EXPECT_DOUBLE_EQ(distance(g[0], g[1]), std::sqrt(2.0));
  // Centre of a cell is exactly at range from all four corners.
  const Point centre{std::sqrt(2.0) / 2, std::sqrt(2.0) / 2};
  EXPECT_NEAR(distance(g[0], centre), 1.0, 1e-12);
  EXPECT_EQ(sensor_grid(7, 1.0).size(), 7u);
  EXPECT_EQ(sensor_grid(1, 1.0).size(), 1u);
}

TEST(Generate, SingleSensorSingleTarget) {
  auto p = generate_problem(1, SensorParams{1, 1});
  auto inst = compile(p);
  ASSERT_EQ(inst.functions().size(), 1u);
  EXPECT_EQ(inst.function(0).scope, std::vector<VariableId>{0});
  EXPECT_EQ(inst.domain(0).lower, -180.0);
  EXPECT_EQ(inst.domain(0).upper, 180.0);
}

TEST(Generate, DeterministicPerSeed) {
  auto a = generate_problem(9), b = generate_problem(9), c = generate_problem(10);
  ASSERT_EQ(a.targets.size(), 12u);
  for (std::size_t n = 0; n < a.targets.size(); ++n) {
    EXPECT_EQ(a.targets[n].x, b.targets[n].x);
    EXPECT_EQ(a.targets[n].y, b.targets[n].y);
  }
  EXPECT_NE(a.targets[0].x, c.targets[0].x);
}

TEST(Generate, TargetsInsideObservationDiscs) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    auto p = generate_problem(seed);
    for (std::size_t n = 0; n < p.targets.size(); ++n) EXPECT_FALSE(p.observers(n).empty());
  }
}

TEST(Generate, RejectsBadParameters) {
  EXPECT_THROW(generate_problem(1, SensorParams{0, 3}), Error);
  SensorParams p;
  p.view_angle = 0;
  EXPECT_THROW(generate_problem(1, p), Error);
}

TEST(Compile, ObjectiveMatchesDirectSummation) {
  std::mt19937_64 rng(61);
  std::uniform_real_distribution<double> u(-180.0, 180.0);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto p = generate_problem(seed);
    auto inst = compile(p);
    for (int t = 0; t < 50; ++t) {
      std::vector<double> w(p.sensors.size());
      Assignment a(w.size());
      for (std::size_t i = 0; i < w.size(); ++i) a.set(i, w[i] = u(rng));
      // Independent oracle: per target, max over in-range sensors of the triangular score.
      double oracle = 0.0;
      for (const auto& t : p.targets) {
        double best = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) {
          const double dx = t.x - p.sensors[i].x, dy = t.y - p.sensors[i].y;
          if (std::sqrt(dx * dx + dy * dy) > 1.0) continue;
          double d = std::abs(w[i] - std::atan2(dy, dx) * 180.0 / M_PI);
          if (d > 180.0) d = 360.0 - d;
          best = std::max(best, std::max(0.0, 1.0 - d / 36.0));
        }
        oracle += best;
      }
      ASSERT_NEAR(evaluate_objective(inst, a), oracle, 1e-9);
      ASSERT_NEAR(p.total_utility(w), oracle, 1e-9);
    }
  }
}

TEST(Compile, UtilityBounds) {
  std::mt19937_64 rng(62);
  std::uniform_real_distribution<double> u(-180.0, 180.0);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto p = generate_problem(seed);
    auto inst = compile(p);
    for (int t = 0; t < 100; ++t) {
      Assignment a(p.sensors.size());
      for (std::size_t i = 0; i < p.sensors.size(); ++i) a.set(i, u(rng));
      for (const auto& f : inst.functions()) {
        const double v = evaluate_function(f, a);
        ASSERT_GE(v, 0.0);
        ASSERT_LE(v, 1.0);
      }
      ASSERT_LE(evaluate_objective(inst, a), static_cast<double>(p.targets.size()));
    }
  }
}

TEST(Compile, PerfectCoverageReachesTargetCount) {
  SensorProblem p;
  p.sensors = {{0, 0}, {1.4, 0}};
  p.targets = {{0.5, 0.5}, {1.4, -0.6}};
  std::vector<double> w{45.0, -90.0};
  EXPECT_DOUBLE_EQ(p.total_utility(w), 2.0);
  Assignment a(2);
  a.set(0, 45.0);
  a.set(1, -90.0);
  EXPECT_DOUBLE_EQ(evaluate_objective(compile(p), a), 2.0);
}

TEST(LipschitzBound, Examples) {
  SensorProblem p;
  p.sensors = {{0, 0}};
  p.targets = {{5, 5}};
  EXPECT_EQ(lipschitz_bound(p, 0), 0.0);
  p.targets = {{0.5, 0}};
  EXPECT_DOUBLE_EQ(lipschitz_bound_per_degree(p, 0), 1.0 / 36.0);
  EXPECT_DOUBLE_EQ(lipschitz_bound(p, 0), 10.0);
}

TEST(LipschitzBound, FiniteDifferencesStayBelowBound) {
  std::mt19937_64 rng(63);
  std::uniform_real_distribution<double> u(-180.0, 180.0), h(1e-3, 30.0);
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    auto p = generate_problem(seed);
    auto inst = compile(p);
    for (int t = 0; t < 200; ++t) {
      const std::size_t i = rng() % p.sensors.size();
      Assignment a(p.sensors.size());
      for (std::size_t j = 0; j < p.sensors.size(); ++j) a.set(j, u(rng));
      const double x0 = a.at(i);
      const double x1 = std::clamp(x0 + (rng() % 2 ? 1 : -1) * h(rng), -180.0, 180.0);
      if (x1 == x0) continue;
      const double g0 = evaluate_objective(inst, a);
      a.set(i, x1);
      const double g1 = evaluate_objective(inst, a);
      ASSERT_LE(std::abs(g1 - g0) / std::abs(x1 - x0), lipschitz_bound_per_degree(p, i) * (1 + 1e-9));
    }
  }
}

TEST(LipschitzBound, CompiledFunctionsCarryMatchingSlopes) {
  auto p = generate_problem(4);
  auto inst = compile(p);
  for (std::size_t i = 0; i < p.sensors.size(); ++i) {
    EXPECT_NEAR(agent_lipschitz(inst, i), lipschitz_bound(p, i), 1e-9);
  }
}

TEST(RelativeUtility, Examples) {
  EXPECT_EQ(relative_utility(3.0, 3.0), 1.0);
  EXPECT_EQ(relative_utility(6.0, 12.0), 0.5);
  try {
    relative_utility(1.0, 0.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::zero_reference);
  }
}

TEST(SampleEfficiency, Examples) {
  std::map<std::size_t, double> grid{{2, 0.4}, {3, 0.6}, {4, 0.7}, {5, 0.9}};
  auto e = sample_efficiency({{3, 0.6}, {4, 0.0}, {5, 0.8}, {6, 0.95}}, grid);
  EXPECT_EQ(e[0].k, 3u);
  EXPECT_EQ(e[1].k, 2u);
  EXPECT_EQ(e[2].k, 5u);
  EXPECT_TRUE(e[3].censored);
  EXPECT_EQ(e[3].k, 5u);
}

TEST(Experiment, SingleSeedBudgetThreeMatchesGrid) {
  ExperimentConfig c;
  c.seeds = {5};
  c.budgets = {3};
  c.grid_k_max = 10;
  c.reference_k = 91;  // contains the k = 3 grid
  auto r = run_experiment(c);
  ASSERT_EQ(r.records.size(), 2u);
  EXPECT_EQ(r.records[0].solver, "dbay");
  EXPECT_EQ(r.records[1].solver, "grid");
  EXPECT_NEAR(r.records[0].relative, r.records[1].relative, 1e-9);
  EXPECT_LE(r.records[0].relative, 1 + 1e-9);
}

TEST(Experiment, ParallelMatchesSerial) {
  ExperimentConfig c;
  c.seeds = {1, 2, 3, 4};
  c.budgets = {3, 5, 8};
  c.grid_k_max = 12;
  c.reference_k = 60;
  c.jobs = 1;
  auto a = run_experiment(c);
  c.jobs = 3;
  auto b = run_experiment(c);
  std::ostringstream sa, sb;
  write_records_csv(sa, a.records);
  write_records_csv(sb, b.records);
  EXPECT_EQ(sa.str(), sb.str());
  EXPECT_EQ(sa.str().substr(0, sa.str().find('\n')),
            "seed,solver,budget_or_k,achieved,reference,relative,samples,messages");
}
