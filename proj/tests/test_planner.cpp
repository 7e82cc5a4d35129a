#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "fixtures.hpp"
#include "flowplan/errors.hpp"
#include "flowplan/oracle.hpp"
#include "flowplan/planner.hpp"

using namespace flowplan;
using namespace fixtures;

namespace {

PlannerConfig small_config(int sims) {
  PlannerConfig c;
  c.widths = {1, 2};
  c.sims_per_pair = sims;
  return c;
}

// One node, p = 0.5, unit cost and latency, budget 2 and deadline 1: exactly
// one round, so width 1 is worth 0.5 and width 2 is worth 0.75.
WorkflowInstance one_round() { return single_node(0.5, 1, 1, 2, 1); }

// Random non-terminal state of an instance, reached by a short random walk.
ExecState random_state(const WorkflowInstance& inst, RngStream& rng) {
  ExecState s = ExecState::initial(inst);
  const int steps = static_cast<int>(rng.below(3));
  for (int i = 0; i < steps; ++i) {
    const NodeSet r = ready_set(inst.graph(), s.completed);
    NodeSet done;
    r.for_each([&](NodeIndex v) {
      if (rng.bernoulli(0.5)) done.insert(v);
    });
    if ((s.completed | done) == inst.graph().all()) break;
    s = ExecState::at(s.completed | done, s.remaining_budget - MicroUsd(static_cast<std::int64_t>(rng.below(2))),
                      s.remaining_time - Millis(static_cast<std::int64_t>(rng.below(2))));
  }
  return s;
}

}  // namespace

TEST_CASE("candidate counts") {
  const std::vector<int> k2{1, 4};
  CHECK(full_action_space(NodeSet::single(0), 2, k2).size() == 4);
  const std::vector<int> k4{1, 4, 16, 64};
  CHECK(full_action_space(NodeSet(0b11), 3, k4).size() == 144);
  CHECK(action_space_size(2, 3, 4) == 144);
  CHECK(action_space_size(40, 3, 4) == SIZE_MAX);

  const auto wide = parametric(8, {}, 3, [](NodeIndex, ModelIndex) { return raw_profile(0.5, 1, 1); }, 100, 100);
  PlannerConfig cfg;
  const auto cands = candidates(ExecState::initial(wide), wide, cfg);
  CHECK(cands.size() == 12 * (1 + 8 * 11));
  CHECK(std::is_sorted(cands.begin(), cands.end()));
  for (const BasePolicy& mu : make_portfolio(3, cfg.widths)) {
    CHECK(std::binary_search(cands.begin(), cands.end(), base_action(mu, wide.graph(), ExecState::initial(wide))));
  }
}

TEST_CASE("full space is sorted and unique") {
  const std::vector<int> k{1, 2, 8};
  const auto space = full_action_space(NodeSet(0b1011), 2, k);
  CHECK(space.size() == 216);
  CHECK(std::adjacent_find(space.begin(), space.end(), [](const auto& a, const auto& b) { return !(a < b); }) ==
        space.end());
}

TEST_CASE("Assumption 1: every base action is a candidate") {
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    const auto inst = random_small(seed);
    RngStream rng = RngStream::derive(seed, {0xa1});
    for (std::size_t cap : {std::size_t{4096}, std::size_t{1}}) {
      PlannerConfig cfg = small_config(8);
      cfg.enumeration_cap = cap;
      const ExecState s = random_state(inst, rng);
      const auto cands = candidates(s, inst, cfg);
      for (const BasePolicy& mu : make_portfolio(2, cfg.widths)) {
        CHECK(std::binary_search(cands.begin(), cands.end(), base_action(mu, inst.graph(), s)));
      }
    }
  }
}

TEST_CASE("mc_value examples") {
  const auto last = parametric(2, chain_edges(2), 1, [](NodeIndex, ModelIndex) { return raw_profile(1.0, 1, 1); }, 5, 5);
  const ExecState s = ExecState::at(NodeSet::single(0), MicroUsd(5), Millis(5));
  const RngStream stream(1);
  CHECK(mc_value(s, AllocationAction({{1, 0, 1}}), {0, 1}, 64, last, stream) == 1.0);
  CHECK(mc_value(s, AllocationAction({{1, 0, 6}}), {0, 1}, 64, last, stream) == 0.0);
  CHECK_THROWS_AS(mc_value(ExecState::at(NodeSet::all_of(2), MicroUsd(5), Millis(5)), AllocationAction(), {0, 1}, 4,
                           last, stream),
                  ContractViolation);
}

TEST_CASE("mc_value is unbiased against the oracle") {
  const auto inst = one_round();
  const ExecState s0 = ExecState::initial(inst);
  ExactOracle<double> oracle(inst, {1, 2});
  const AllocationAction a({{0, 0, 2}});
  REQUIRE(oracle.q(s0, a, {0, 1}) == 0.75);
  double sum = 0.0;
  for (std::uint64_t i = 0; i < 1000; ++i) sum += mc_value(s0, a, {0, 1}, 64, inst, RngStream::derive(33, {i}));
  CHECK(std::abs(sum / 1000 - 0.75) <= 3 * std::sqrt(0.75 * 0.25 / (64 * 1000.0)));
}

TEST_CASE("mc_value agrees with exact Q on random states") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto inst = random_small(seed, 4);
    ExactOracle<double> oracle(inst, {1, 2});
    const ExecState s0 = ExecState::initial(inst);
    const auto cands = candidates(s0, inst, small_config(1));
    const AllocationAction& a = cands[cands.size() / 2];
    const int n = 20000;
    const double est = mc_value(s0, a, {1, 1}, n, inst, RngStream::derive(seed, {0x5}));
    const double exact = oracle.q(s0, a, {1, 1});
    CHECK(within_3sigma(est, exact, n));
  }
}

TEST_CASE("select_action prefers the better action") {
  const auto inst = one_round();
  PlannerConfig cfg = small_config(4096);
  cfg.widths = {1, 2};
  int hits = 0;
  for (std::uint64_t t = 0; t < 100; ++t) {
    const auto sel = select_action(ExecState::initial(inst), inst, cfg, RngStream::derive(t, {0x99}));
    REQUIRE(sel.has_value());
    hits += sel->action == AllocationAction({{0, 0, 2}}) ? 1 : 0;
  }
  CHECK(hits >= 99);
}

TEST_CASE("select_action with no feasible candidate") {
  const auto broke = single_node(0.5, 1, 1, 0, 10);
  CHECK_FALSE(select_action(ExecState::initial(broke), broke, small_config(4), RngStream(1)).has_value());
}

TEST_CASE("ties go to the smallest encoding") {
  const auto sure = single_node(1.0, 1, 1, 10, 10);
  const auto sel = select_action(ExecState::initial(sure), sure, small_config(16), RngStream(5));
  REQUIRE(sel.has_value());
  CHECK(sel->action == AllocationAction({{0, 0, 1}}));
  CHECK(sel->portfolio_value == 1.0);
  CHECK(sel->best_continuation == BasePolicy{0, 1});
  PlannerConfig dup = small_config(16);
  dup.widths = {1, 1, 2};
  CHECK_THROWS_AS(dup.validate(), InputError);
}

TEST_CASE("selection table and radius") {
  const auto inst = random_small(4);
  const auto sel = select_action(ExecState::initial(inst), inst, small_config(32), RngStream(2));
  REQUIRE(sel.has_value());
  CHECK(sel->table.size() == sel->feasible_count);
  CHECK(sel->radius == hoeffding_radius(sel->feasible_count * 4, 32, 0.05));
  for (const ActionScore& row : sel->table) {
    CHECK(row.portfolio_value >= 0.0);
    CHECK(row.portfolio_value <= 1.0);
    CHECK(row.portfolio_value <= sel->portfolio_value);
    CHECK(row.complete);
  }
}

TEST_CASE("hoeffding_radius examples") {
  CHECK(std::abs(hoeffding_radius(12, 64, 0.05) - 0.2196) <= 1e-4);
  CHECK(hoeffding_radius(1, 400, 0.05) == doctest::Approx(hoeffding_radius(1, 100, 0.05) / 2).epsilon(1e-12));
  CHECK(hoeffding_radius(5, 64, 0.01) > hoeffding_radius(5, 64, 0.05));
  CHECK_THROWS_AS(hoeffding_radius(0, 64, 0.05), InputError);
  CHECK_THROWS_AS(hoeffding_radius(1, 0, 0.05), InputError);
  CHECK_THROWS_AS(hoeffding_radius(1, 64, 1.0), InputError);
}

TEST_CASE("selection does not depend on workers or bounded scoring") {
  for (std::uint64_t seed = 0; seed < 15; ++seed) {
    const auto inst = random_small(seed);
    PlannerConfig base = small_config(48);
    const RngStream stream = RngStream::derive(seed, {0x77});
    const auto ref = select_action(ExecState::initial(inst), inst, base, stream);
    for (int workers : {2, 4}) {
      for (bool skip : {false, true}) {
        PlannerConfig cfg = base;
        cfg.workers = workers;
        cfg.skip_dominated = skip;
        const auto got = select_action(ExecState::initial(inst), inst, cfg, stream);
        REQUIRE(got.has_value() == ref.has_value());
        if (!ref) continue;
        CHECK(got->action == ref->action);
        CHECK(got->portfolio_value == ref->portfolio_value);
        CHECK(got->best_continuation == ref->best_continuation);
        if (!skip) {
          for (std::size_t i = 0; i < ref->table.size(); ++i) {
            CHECK(got->table[i].continuation_values == ref->table[i].continuation_values);
          }
        }
      }
    }
  }
}

TEST_CASE("run_mcpp examples") {
  const auto sure = single_node(1.0, 1, 1, 10, 10);
  const McppRun ok = run_mcpp(sure, small_config(8), {1, 0, true});
  CHECK(ok.run.succeeded());
  CHECK(ok.run.rounds == 1);
  CHECK(ok.selections.size() == 1);

  const auto broke = single_node(1.0, 1, 1, 0, 10);
  const McppRun fail = run_mcpp(broke, small_config(8), {1, 0, true});
  CHECK_FALSE(fail.run.succeeded());
  CHECK(fail.run.reason == FailureReason::kNoFeasibleAction);
  CHECK(fail.selections.empty());
}

TEST_CASE("run_mcpp is deterministic") {
  const auto inst = random_small(8);
  PlannerConfig one = small_config(32);
  PlannerConfig four = one;
  four.workers = 4;
  for (std::uint64_t run = 0; run < 10; ++run) {
    const McppRun a = run_mcpp(inst, one, {5, run, true});
    const McppRun b = run_mcpp(inst, four, {5, run, true});
    CHECK(a.run.final_state == b.run.final_state);
    REQUIRE(a.run.trace.size() == b.run.trace.size());
    for (std::size_t i = 0; i < a.run.trace.size(); ++i) {
      CHECK(a.run.trace[i].action == b.run.trace[i].action);
      CHECK(a.run.trace[i].outcome == b.run.trace[i].outcome);
    }
  }
}

TEST_CASE("closed-loop MCPP matches the best base policy on a 3-node chain") {
  const std::vector<double> p{0.5, 0.25, 0.75};
  const auto inst = parametric(3, chain_edges(3), 2,
                               [&](NodeIndex v, ModelIndex m) {
                                 return raw_profile(m == 0 ? p[v] : std::min(1.0, p[v] + 0.2), m == 0 ? 1 : 2, 1);
                               },
                               12, 6);
  ExactOracle<double> oracle(inst, {1, 2});
  const ExecState s0 = ExecState::initial(inst);
  double best = 0.0;
  for (const BasePolicy& mu : oracle.portfolio()) best = std::max(best, oracle.policy_value(s0, mu));
  CHECK(oracle.exact_planner_value(s0) >= best);

  const int n = 2000;
  int hits = 0;
  for (std::uint64_t run = 0; run < n; ++run) hits += run_mcpp(inst, small_config(256), {3, run, false}).run.succeeded();
  CHECK(static_cast<double>(hits) / n >= best - 3 * std::sqrt(best * (1 - best) / n));
}

TEST_CASE("finite-sample event on small states") {
  int events = 0;
  int trials = 0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const auto inst = random_small(seed, 4);
    ExactOracle<double> oracle(inst, {1, 2});
    const ExecState s0 = ExecState::initial(inst);
    const auto plan = oracle.portfolio_plan(s0, candidates(s0, inst, small_config(1)));
    if (!plan) continue;
    for (std::uint64_t t = 0; t < 5; ++t) {
      const auto sel = select_action(s0, inst, small_config(64), RngStream::derive(seed, {t}));
      REQUIRE(sel.has_value());
      const double got = oracle.q(s0, sel->action, sel->best_continuation);
      ++trials;
      events += got >= plan->value - 2 * sel->radius ? 1 : 0;
    }
  }
  CHECK(trials > 100);
  CHECK(static_cast<double>(events) / trials >= 0.95);
}
