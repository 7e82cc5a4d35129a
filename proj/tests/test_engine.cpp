#include <cmath>
#include <map>

#include "doctest.h"
#include "fixtures.hpp"
#include "flowplan/engine.hpp"
#include "flowplan/errors.hpp"

using namespace flowplan;
using namespace fixtures;

namespace {

// Three independent nodes with p = 0.5, 0.25, 1.0; unit cost and latency.
WorkflowInstance antichain3() {
  const std::vector<double> p{0.5, 0.25, 1.0};
  return parametric(3, {}, 1, [&](NodeIndex v, ModelIndex) { return raw_profile(p[v], 1, 1); }, 100, 100);
}

AllocationAction all_width(const WorkflowInstance& inst, int k) {
  std::vector<Assignment> as;
  ready_set(inst.graph(), NodeSet{}).for_each([&](NodeIndex v) { as.push_back({v, 0, k}); });
  return AllocationAction(as);
}

}  // namespace

TEST_CASE("success_prob examples") {
  CHECK(success_prob(0.5, 4) == 0.9375);
  CHECK(success_prob(0.0, 7) == 0.0);
  CHECK(success_prob(1.0, 1) == 1.0);
  CHECK_THROWS_AS(success_prob(0.5, 0), InputError);
  CHECK_THROWS_AS(success_prob(1.5, 1), InputError);
  CHECK_THROWS_AS(success_prob(-0.1, 1), InputError);
}

TEST_CASE("success_prob marginal identity and monotonicity") {
  for (int i = 0; i <= 10; ++i) {
    const double p = i / 10.0;
    for (int k = 1; k <= 64; ++k) {
      const double gain = success_prob(p, k + 1) - success_prob(p, k);
      CHECK(std::abs(gain - p * std::pow(1.0 - p, k)) <= 1e-12);
      CHECK(gain >= -1e-15);
      if (i > 0) CHECK(success_prob(p, k) >= success_prob((i - 1) / 10.0, k));
    }
  }
  // Tiny p keeps relative precision.
  CHECK(success_prob(1e-12, 3) == doctest::Approx(3e-12).epsilon(1e-9));
}

TEST_CASE("action_cost examples") {
  const auto inst = parametric(2, {}, 1,
                               [](NodeIndex v, ModelIndex) { return raw_profile(0.5, v == 0 ? 2000 : 500, 1); }, 1, 1);
  CHECK(action_cost(AllocationAction({{0, 0, 4}}), inst.profiles()) == MicroUsd(8000));
  const auto two = parametric(2, {}, 1,
                              [](NodeIndex v, ModelIndex) { return raw_profile(0.5, v == 0 ? 1000 : 500, 1); }, 1, 1);
  CHECK(action_cost(AllocationAction({{0, 0, 1}, {1, 0, 2}}), two.profiles()) == MicroUsd(2000));
  CHECK(action_cost(AllocationAction(), two.profiles()) == MicroUsd(0));

  ProfileTable empty(1, 1);
  CHECK_THROWS_AS(action_cost(AllocationAction({{0, 0, 1}}), empty), InputError);
}

TEST_CASE("action_duration examples") {
  const auto inst = parametric(2, {}, 1,
                               [](NodeIndex v, ModelIndex) { return raw_profile(0.5, 1, v == 0 ? 2000 : 5000); }, 1, 1);
  CHECK(action_duration(AllocationAction({{0, 0, 1}, {1, 0, 1}}), inst.profiles()) == Millis(5000));
  const auto one = single_node(0.5, 1, 3000, 1, 1);
  for (int k : {1, 4, 64}) CHECK(action_duration(AllocationAction({{0, 0, k}}), one.profiles()) == Millis(3000));
  CHECK(action_duration(AllocationAction(), one.profiles()) == Millis(0));
}

TEST_CASE("batch latency hook") {
  const auto base = single_node(0.5, 1, 1000, 10, 10);
  const auto slowed = base.with_batch_latency([](Millis single, int width) { return single * width; });
  CHECK(action_duration(AllocationAction({{0, 0, 4}}), base) == Millis(1000));
  CHECK(action_duration(AllocationAction({{0, 0, 4}}), slowed) == Millis(4000));
}

TEST_CASE("is_feasible is inclusive at the boundary") {
  const auto inst = single_node(0.5, 2000, 5000, 0, 0);
  const AllocationAction a({{0, 0, 4}});  // C = 8000, Delta = 5000
  CHECK(is_feasible(ExecState::at(NodeSet{}, MicroUsd(8000), Millis(5000)), a, inst));
  CHECK_FALSE(is_feasible(ExecState::at(NodeSet{}, MicroUsd(7999), Millis(5000)), a, inst));
  CHECK_FALSE(is_feasible(ExecState::at(NodeSet{}, MicroUsd(8000), Millis(4999)), a, inst));
}

TEST_CASE("AllocationAction rejects bad input") {
  CHECK_THROWS_AS(AllocationAction({{0, 0, 0}}), InputError);
  CHECK_THROWS_AS(AllocationAction({{0, 0, 1}, {0, 1, 1}}), InputError);
  const AllocationAction a({{2, 0, 1}, {1, 0, 4}});
  CHECK(a.assignments()[0].node == 1);
}

TEST_CASE("subset_probability examples") {
  const auto half = parametric(2, {}, 1, [](NodeIndex, ModelIndex) { return raw_profile(0.5, 1, 1); }, 10, 10);
  const ExecState s0 = ExecState::initial(half);
  const AllocationAction a = all_width(half, 1);
  CHECK(subset_probability(s0, a, NodeSet(0b11), half) == 0.25);
  CHECK(subset_probability(s0, a, NodeSet{}, half) == 0.25);

  const auto three = antichain3();
  const AllocationAction b = all_width(three, 1);
  const ExecState t0 = ExecState::initial(three);
  CHECK(subset_probability(t0, b, NodeSet::single(2), three) == doctest::Approx(0.375).epsilon(1e-15));
  double total = 0.0;
  for (std::uint64_t u = 0; u < 8; ++u) total += subset_probability(t0, b, NodeSet(u), three);
  CHECK(std::abs(total - 1.0) <= 1e-12);

  CHECK_THROWS_AS(subset_probability(ExecState::at(NodeSet::single(0), MicroUsd(1), Millis(1)), AllocationAction({{1, 0, 1}, {2, 0, 1}}), NodeSet::single(0), three),
                  InputError);
}

TEST_CASE("subset probabilities sum to one") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    RngStream rng = RngStream::derive(seed, {3});
    const int n = 1 + static_cast<int>(rng.below(10));
    std::vector<double> p;
    for (int v = 0; v < n; ++v) p.push_back(rng.uniform());
    const auto inst = parametric(n, {}, 1, [&](NodeIndex v, ModelIndex) { return raw_profile(p[v], 1, 1); }, 1, 1);
    const AllocationAction a = all_width(inst, 1 + static_cast<int>(rng.below(4)));
    double total = 0.0;
    for (std::uint64_t u = 0; u < (std::uint64_t{1} << n); ++u) {
      total += subset_probability(ExecState::initial(inst), a, NodeSet(u), inst);
    }
    CHECK(std::abs(total - 1.0) <= 1e-12);
  }
}

TEST_CASE("parametric sampling extremes and determinism") {
  const auto sure = parametric(2, {}, 1, [](NodeIndex, ModelIndex) { return raw_profile(1.0, 1, 1); }, 10, 10);
  RngStream rng(7);
  CHECK(sample_transition(ExecState::initial(sure), all_width(sure, 1), sure, rng).completed_now == NodeSet(0b11));

  const auto never = parametric(2, {}, 1, [](NodeIndex, ModelIndex) { return raw_profile(0.0, 1, 1); }, 10, 10);
  const auto out = sample_transition(ExecState::initial(never), all_width(never, 3), never, rng);
  CHECK(out.completed_now.empty());
  CHECK(out.cost == MicroUsd(6));
  CHECK(out.duration == Millis(1));

  const auto three = antichain3();
  RngStream r1(99);
  RngStream r2(99);
  CHECK(sample_transition(ExecState::initial(three), all_width(three, 2), three, r1) ==
        sample_transition(ExecState::initial(three), all_width(three, 2), three, r2));
}

TEST_CASE("sample_transition contract violations") {
  const auto chain = parametric(2, chain_edges(2), 1, [](NodeIndex, ModelIndex) { return raw_profile(0.5, 5, 5); }, 4, 10);
  RngStream rng(1);
  const ExecState s0 = ExecState::initial(chain);
  CHECK_THROWS_AS(sample_transition(s0, AllocationAction({{1, 0, 1}}), chain, rng), ContractViolation);
  CHECK_THROWS_AS(sample_transition(s0, AllocationAction({{0, 0, 1}}), chain, rng), ContractViolation);  // cost 5 > 4
}

TEST_CASE("parametric sampling frequency matches q(k)") {
  const auto inst = single_node(0.5, 1, 1, 10, 10);
  const AllocationAction a({{0, 0, 2}});
  const int n = 100000;
  int hits = 0;
  for (int i = 0; i < n; ++i) {
    RngStream rng = RngStream::derive(5, {static_cast<std::uint64_t>(i)});
    hits += sample_transition(ExecState::initial(inst), a, inst, rng).completed_now.empty() ? 0 : 1;
  }
  CHECK(within_3sigma(static_cast<double>(hits) / n, 0.75, n));
}

TEST_CASE("empirical sampling: OR success, max latency, token cost") {
  // Exactly half the records succeed, so the resampled rate is exactly q(0.5, 4).
  RolloutPool pool(1, 1);
  for (int i = 0; i < 512; ++i) pool.add(0, 0, {i % 2 == 0, 100 + i % 3, 1.0 + 0.5 * (i % 4)});
  const ModelCatalog cat({{"m0", 2.0, 100.0}});
  const auto inst = WorkflowInstance::empirical(WorkflowGraph(1, {}), cat, pool, MicroUsd(1000000000), Millis(1000000));
  const AllocationAction a({{0, 0, 4}});
  const int n = 100000;
  int hits = 0;
  for (int i = 0; i < n; ++i) {
    RngStream rng = RngStream::derive(8, {static_cast<std::uint64_t>(i)});
    const TransitionOutcome out = sample_transition(ExecState::initial(inst), a, inst, rng);
    hits += out.completed_now.empty() ? 0 : 1;
    REQUIRE(out.detail.size() == 1);
    CHECK(out.detail[0].samples == 4);
    CHECK((out.detail[0].successes > 0) == !out.completed_now.empty());
    CHECK(out.duration >= Millis(1000));
    CHECK(out.duration <= Millis(2500));
    // 4 draws of 100-102 tokens at $2 per 1k tokens = 2000 micro-dollars per token.
    CHECK(out.cost >= MicroUsd(4 * 100 * 2000));
    CHECK(out.cost <= MicroUsd(4 * 102 * 2000));
  }
  CHECK(within_3sigma(static_cast<double>(hits) / n, 0.9375, n));
}

TEST_CASE("empirical transition frequencies converge to subset probabilities") {
  const std::vector<double> p{0.3, 0.6, 0.8};
  const auto inst = bernoulli_pools(3, {}, p, 512, 10, 1.0, 1000000000, 1000000, 21);
  const AllocationAction a({{0, 0, 1}, {1, 0, 2}, {2, 0, 1}});
  const ExecState s0 = ExecState::initial(inst);
  const int n = 100000;
  std::map<std::uint64_t, int> counts;
  for (int i = 0; i < n; ++i) {
    RngStream rng = RngStream::derive(13, {static_cast<std::uint64_t>(i)});
    ++counts[sample_transition(s0, a, inst, rng).completed_now.bits()];
  }
  // subset_probability uses the pool-derived p, which is what resampling realizes.
  for (std::uint64_t u = 0; u < 8; ++u) {
    CHECK(within_3sigma(counts[u] / static_cast<double>(n), subset_probability(s0, a, NodeSet(u), inst), n));
  }
}

TEST_CASE("empirical mode skips the feasibility precondition") {
  const auto inst = bernoulli_pools(1, {}, {0.5}, 16, 10, 1.0, 0, 0, 1);
  RngStream rng(3);
  const auto out = sample_transition(ExecState::initial(inst), AllocationAction({{0, 0, 1}}), inst, rng);
  CHECK(out.duration == Millis(1000));
}

TEST_CASE("apply_outcome examples") {
  const ExecState s = ExecState::at(NodeSet{}, MicroUsd(10000), Millis(6000));
  TransitionOutcome o;
  o.completed_now = NodeSet::single(0);
  o.cost = MicroUsd(8000);
  o.duration = Millis(5000);
  const ExecState t = apply_outcome(s, o);
  CHECK(t.completed == NodeSet::single(0));
  CHECK(t.remaining_budget == MicroUsd(2000));
  CHECK(t.remaining_time == Millis(1000));
  CHECK(t.spent == MicroUsd(8000));
  CHECK(t.elapsed == Millis(5000));
  CHECK(s.completed.empty());  // value semantics

  o.completed_now = NodeSet{};
  const ExecState u = apply_outcome(s, o);
  CHECK(u.completed.empty());
  CHECK(u.remaining_budget == MicroUsd(2000));

  const WorkflowGraph g(1, {});
  o.completed_now = NodeSet::single(0);
  CHECK(ready_set(g, apply_outcome(s, o).completed).empty());
}
