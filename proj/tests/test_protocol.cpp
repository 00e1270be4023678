#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"

using namespace dbay;
using testing_helpers::constant_fn;
using testing_helpers::make_fn;
using testing_helpers::unit_domains;

namespace {

struct Sent {
  AgentId from, to;
  Payload payload;
};

class RecordingOutbox : public Outbox {
 public:
  std::vector<Sent> sent;
  void send(AgentId from, AgentId to, Payload payload) override {
    sent.push_back({from, to, std::move(payload)});
  }
};

// f(x0, x1) = sin(3 x0) cos(2 x1) + x1 / 2 on [0,1]^2, with slope bounds.
UtilityFunction wavy(VariableId a, VariableId b) {
  return make_fn({a, b}, [](std::span<const double> x) { return std::sin(3 * x[0]) * std::cos(2 * x[1]) + 0.5 * x[1]; },
                 {3.0, 2.5});
}

DcopInstance chain(std::size_t n, std::vector<ContinuousDomain> domains = {}) {
  std::vector<UtilityFunction> fs;
  for (VariableId v = 0; v + 1 < n; ++v) fs.push_back(wavy(v, v + 1));
  if (domains.empty()) domains = unit_domains(n);
  return DcopInstance(std::move(domains), fs, Aggregation::sum);
}

RunSettings grid_settings(std::size_t k, KeyPolicy policy = KeyPolicy::separator) {
  RunSettings s;
  s.defaults.budget = k;
  s.defaults.sampling = GridSampling{k};
  s.defaults.key_policy = policy;
  return s;
}

double root_total(const RunResult& r) {
  double t = 0.0;
  for (const auto& [root, best] : r.root_best) t += best;
  return t;
}

}  // namespace

TEST(AgentLipschitz, SumsSlopesScaledByWidth) {
  auto inst = chain(3, {ContinuousDomain(0, 2), ContinuousDomain(0, 1), ContinuousDomain(-1, 1)});
  EXPECT_DOUBLE_EQ(agent_lipschitz(inst, 0), 3.0 * 2);
  EXPECT_DOUBLE_EQ(agent_lipschitz(inst, 1), 2.5 + 3.0);
  EXPECT_DOUBLE_EQ(agent_lipschitz(inst, 2), 2.5 * 2);
}

TEST(Quantize, TwelveDigits) {
  EXPECT_EQ(quantize(0.1 + 0.2), quantize(0.3));
  EXPECT_NE(quantize(0.3), quantize(0.3 + 1e-11));
}

TEST(Agent, LeafBootstrapsAtLowerEndpoint) {
  auto inst = chain(2, {ContinuousDomain(-2, 3), ContinuousDomain(-180, 180)});
  auto tree = prepare_pseudo_tree(inst);
  AgentSettings s;
  s.budget = 1;
  Agent leaf(inst, tree, 1, s);
  RecordingOutbox out;
  leaf.on_sample(0, SampleMessage{{{0, 1.0}}}, out);
  const auto* obs = leaf.observations_for({{0, 1.0}});
  ASSERT_NE(obs, nullptr);
  ASSERT_EQ(obs->size(), 1u);
  EXPECT_EQ((*obs)[0].x, 0.0);
  ASSERT_EQ(out.sent.size(), 1u);
  const double expected = evaluate_function(inst.function(0), [] {
    Assignment a(2);
    a.set(0, 1.0);
    a.set(1, -180.0);
    return a;
  }());
  EXPECT_EQ(std::get<UtilityMessage>(out.sent[0].payload).utility, expected);
}

TEST(Agent, BootstrapOrderLowerUpperMid) {
  auto inst = chain(2);
  auto tree = prepare_pseudo_tree(inst);
  AgentSettings s;
  s.budget = 3;
  Agent leaf(inst, tree, 1, s);
  RecordingOutbox out;
  leaf.on_sample(0, SampleMessage{{{0, 0.25}}}, out);
  const auto& e = leaf.observations_for({{0, 0.25}})->entries();
  std::vector<double> xs;
  for (const auto& o : e) xs.push_back(o.x);
  EXPECT_EQ(xs, (std::vector<double>{0.0, 0.5, 1.0}));
  EXPECT_EQ(leaf.samples_taken(), 3u);
}

TEST(Agent, ConstantObjectiveRepliesConstant) {
  DcopInstance inst(unit_domains(2), {constant_fn({0, 1}, 4.5)}, Aggregation::sum);
  auto tree = prepare_pseudo_tree(inst);
  Agent leaf(inst, tree, 1, AgentSettings{});
  RecordingOutbox out;
  for (double v : {0.1, 0.2, 0.9}) leaf.on_sample(0, SampleMessage{{{0, v}}}, out);
  ASSERT_EQ(out.sent.size(), 3u);
  for (const auto& m : out.sent) EXPECT_EQ(std::get<UtilityMessage>(m.payload).utility, 4.5);
  EXPECT_EQ(leaf.effective_budget(), 1u);  // zero-Lipschitz short circuit
}

TEST(Agent, IdenticalSampleGetsIdenticalReply) {
  auto inst = chain(2);
  auto tree = prepare_pseudo_tree(inst);
  Agent leaf(inst, tree, 1, AgentSettings{});
  RecordingOutbox out;
  leaf.on_sample(0, SampleMessage{{{0, 0.7}}}, out);
  const auto taken = leaf.samples_taken();
  leaf.on_sample(0, SampleMessage{{{0, 0.3}}}, out);
  leaf.on_sample(0, SampleMessage{{{0, 0.7}}}, out);
  ASSERT_EQ(out.sent.size(), 3u);
  EXPECT_EQ(std::get<UtilityMessage>(out.sent[0].payload), std::get<UtilityMessage>(out.sent[2].payload));
  EXPECT_EQ(leaf.samples_taken(), 2 * taken);  // replay took no samples

  // A fresh agent fed the same message also replies identically.
  Agent twin(inst, tree, 1, AgentSettings{});
  RecordingOutbox out2;
  twin.on_sample(0, SampleMessage{{{0, 0.7}}}, out2);
  EXPECT_EQ(std::get<UtilityMessage>(out2.sent[0].payload), std::get<UtilityMessage>(out.sent[0].payload));
}

TEST(Agent, MissingAncestorSampleRaises) {
  auto inst = chain(2);
  auto tree = prepare_pseudo_tree(inst);
  Agent leaf(inst, tree, 1, AgentSettings{});
  RecordingOutbox out;
  try {
    leaf.on_sample(0, SampleMessage{}, out);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::missing_ancestor_sample);
    EXPECT_EQ(e.agent(), 1u);
  }
}

TEST(Agent, SampleFromNonParentRejected) {
  auto inst = chain(3);
  auto tree = prepare_pseudo_tree(inst);
  Agent leaf(inst, tree, 2, AgentSettings{});
  RecordingOutbox out;
  try {
    leaf.on_sample(0, SampleMessage{{{0, 0.1}, {1, 0.1}}}, out);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::invalid_route);
  }
}

TEST(Agent, LeafUtilityIsSharedFunctionValue) {
  auto inst = chain(2);
  auto tree = prepare_pseudo_tree(inst);
  AgentSettings s;
  s.budget = 2;
  Agent leaf(inst, tree, 1, s);
  RecordingOutbox out;
  leaf.on_sample(0, SampleMessage{{{0, 0.4}}}, out);
  for (const auto& o : leaf.observations_for({{0, 0.4}})->entries()) {
    const double args[2] = {0.4, o.x};
    EXPECT_EQ(o.y, inst.function(0)(args));
  }
}

TEST(Agent, LocalUtilityCombinesFunctions) {
  DcopInstance inst(unit_domains(1), {constant_fn({0}, 2.0), constant_fn({0}, 3.0)}, Aggregation::sum);
  auto tree = prepare_pseudo_tree(inst);
  Agent a(inst, tree, 0, AgentSettings{});
  EXPECT_EQ(a.local_utility(SampleMessage{{{0, 0.5}}}), 5.0);
  auto r = run_to_completion(inst, tree, RunSettings{});
  EXPECT_EQ(r.root_best.at(0), 5.0);
}

TEST(Agent, ChildAggregation) {
  for (auto op : {Aggregation::sum, Aggregation::max}) {
    DcopInstance one(unit_domains(2), {constant_fn({0, 1}, 7.0)}, op);
    EXPECT_EQ(run_to_completion(one, prepare_pseudo_tree(one), RunSettings{}).root_best.at(0), 7.0);
    DcopInstance two(unit_domains(3), {constant_fn({0, 1}, 3.0), constant_fn({0, 2}, 4.0)}, op);
    const double expected = op == Aggregation::sum ? 7.0 : 4.0;
    EXPECT_EQ(run_to_completion(two, prepare_pseudo_tree(two), RunSettings{}).root_best.at(0), expected);
  }
}

TEST(Agent, FinalOnUnknownSampleRaises) {
  auto inst = chain(2);
  auto tree = prepare_pseudo_tree(inst);
  Agent leaf(inst, tree, 1, AgentSettings{});
  RecordingOutbox out;
  leaf.on_sample(0, SampleMessage{{{0, 0.4}}}, out);
  try {
    leaf.on_final(0, FinalMessage{{{0, 0.41}}}, out);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::unknown_parent_sample);
  }
}

TEST(Agent, LeafFinalAppendsIncumbent) {
  auto inst = chain(2);
  auto tree = prepare_pseudo_tree(inst);
  Agent leaf(inst, tree, 1, AgentSettings{});
  RecordingOutbox out;
  leaf.on_sample(0, SampleMessage{{{0, 0.4}}}, out);
  out.sent.clear();
  auto next = leaf.process_final(FinalMessage{{{0, 0.4}}}, out);
  const double incumbent = leaf.observations_for({{0, 0.4}})->incumbent().x;
  EXPECT_EQ(next.assignments.at(1), inst.domain(1).from_unit(incumbent));
  EXPECT_EQ(next.assignments.at(0), 0.4);
  EXPECT_TRUE(out.sent.empty());
  EXPECT_EQ(leaf.assignment(), next.assignments.at(1));
}

TEST(Agent, LipschitzViolationAtLeafCarriesAgentId) {
  auto inst = chain(2);
  auto tree = prepare_pseudo_tree(inst);
  RunSettings s;
  s.defaults.budget = 5;
  s.overrides[1] = s.defaults;
  s.overrides[1].lipschitz = 1e-3;
  try {
    run_to_completion(inst, tree, s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::lipschitz_violated);
    EXPECT_EQ(e.agent(), 1u);
  }
  s.overrides[1].lipschitz_check = LipschitzCheck::off;
  EXPECT_NO_THROW(run_to_completion(inst, tree, s));
}

TEST(Protocol, SingleAgentReturnsBestSample) {
  DcopInstance inst({ContinuousDomain(-1, 3)},
                    {make_fn({0}, [](std::span<const double> x) { return -(x[0] - 1.2) * (x[0] - 1.2); }, {8.0})},
                    Aggregation::sum);
  RunSettings s;
  s.defaults.budget = 20;
  auto r = run_to_completion(inst, prepare_pseudo_tree(inst), s);
  EXPECT_EQ(r.metrics.total_messages(), 0u);
  EXPECT_LE(r.metrics.total_samples(), 20u);
  EXPECT_EQ(r.utility, r.root_best.at(0));
  EXPECT_NEAR(r.assignment.at(0), 1.2, 0.05);
}

TEST(Protocol, RootBudgetThreePicksBetterEndpoint) {
  for (double slope : {1.0, -1.0}) {
    DcopInstance inst(unit_domains(1),
                      {make_fn({0}, [slope](std::span<const double> x) { return slope * x[0]; }, {1.0})},
                      Aggregation::sum);
    RunSettings s;
    s.defaults.budget = 3;
    auto r = run_to_completion(inst, prepare_pseudo_tree(inst), s);
    EXPECT_EQ(r.assignment.at(0), slope > 0 ? 1.0 : 0.0);
  }
}

TEST(Protocol, TwoAgentForcedGridMatchesNestedGrid) {
  auto inst = chain(2);
  auto r = run_to_completion(inst, prepare_pseudo_tree(inst), grid_settings(9));
  double best = -1e300;
  for (int i = 0; i < 9; ++i) {
    for (int j = 0; j < 9; ++j) {
      const double args[2] = {grid_unit(i, 9), grid_unit(j, 9)};
      best = std::max(best, inst.function(0)(args));
    }
  }
  EXPECT_EQ(r.root_best.at(0), best);
  EXPECT_EQ(r.utility, best);
}

TEST(Protocol, ForcedGridMatchesExhaustiveOnChainsAndTrees) {
  std::mt19937_64 rng(41);
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = 2 + rng() % 3;
    std::vector<UtilityFunction> fs;
    for (VariableId v = 1; v < n; ++v) fs.push_back(wavy(rng() % v, v));
    if (n > 2 && rng() % 2) fs.push_back(wavy(0, n - 1));
    DcopInstance inst(unit_domains(n), fs, rng() % 2 ? Aggregation::sum : Aggregation::max);
    const std::size_t k = 3 + rng() % 4;
    auto r = run_to_completion(inst, prepare_pseudo_tree(inst), grid_settings(k));
    auto ex = exhaustive_solve(inst, Grid::equidistant(inst, k));
    EXPECT_NEAR(r.utility, ex.utility, 1e-9);
    EXPECT_NEAR(root_total(r), ex.utility, 1e-9);
  }
}

TEST(Protocol, ThreeAgentRootAssignmentMatchesExhaustiveArgmax) {
  auto inst = chain(3);
  auto r = run_to_completion(inst, prepare_pseudo_tree(inst), grid_settings(7));
  auto ex = exhaustive_solve(inst, Grid::equidistant(inst, 7));
  EXPECT_EQ(r.assignment.at(0), ex.assignment.at(0));
}

TEST(Protocol, MessageCountsOnChain) {
  for (std::size_t d = 2; d <= 4; ++d) {
    for (std::size_t b = 3; b <= 5; ++b) {
      auto inst = chain(d);
      auto r = run_to_completion(inst, prepare_pseudo_tree(inst), grid_settings(b, KeyPolicy::full_ancestors));
      std::size_t expected = 0, pow = 1;
      for (std::size_t k = 1; k < d; ++k) expected += (pow *= b);
      EXPECT_EQ(r.metrics.messages(MessageKind::sample), expected) << d << " " << b;
      EXPECT_EQ(r.metrics.messages(MessageKind::utility), expected);
      EXPECT_EQ(r.metrics.messages(MessageKind::final_assignment), d - 1);
    }
  }
}

TEST(Protocol, TwoAgentChainBayesianBudget) {
  auto inst = chain(2);
  for (std::size_t b : {3u, 6u, 10u}) {
    RunSettings s;
    s.defaults.budget = b;
    auto r = run_to_completion(inst, prepare_pseudo_tree(inst), s);
    EXPECT_EQ(r.metrics.messages(MessageKind::sample), b);
    EXPECT_EQ(r.metrics.messages(MessageKind::utility), b);
  }
}

TEST(Protocol, SeparatorKeysGiveSameResultAsFullAncestors) {
  auto inst = chain(4);
  auto tree = prepare_pseudo_tree(inst);
  RunSettings sep, full;
  sep.defaults.budget = full.defaults.budget = 5;
  full.defaults.key_policy = KeyPolicy::full_ancestors;
  auto a = run_to_completion(inst, tree, sep);
  auto b = run_to_completion(inst, tree, full);
  EXPECT_EQ(a.assignment, b.assignment);
  EXPECT_EQ(a.root_best, b.root_best);
  EXPECT_LE(a.metrics.total_messages(), b.metrics.total_messages());
}

TEST(Protocol, SensorRunIsConsistent) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto inst = compile(generate_problem(seed));
    auto tree = prepare_pseudo_tree(inst);
    RunSettings s;
    s.defaults.budget = 8;
    auto r = run_to_completion(inst, tree, s);
    EXPECT_NEAR(r.utility, root_total(r), 1e-9);
    EXPECT_GE(r.metrics.utility_evaluations, 1u);
  }
}
