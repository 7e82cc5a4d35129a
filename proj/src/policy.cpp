#include "flowplan/policy.hpp"

#include <algorithm>
#include <chrono>

#include "flowplan/errors.hpp"

namespace flowplan {

std::vector<BasePolicy> make_portfolio(int model_count, std::span<const int> widths) {
  std::vector<BasePolicy> out;
  out.reserve(static_cast<std::size_t>(model_count) * widths.size());
  for (ModelIndex m = 0; m < model_count; ++m) {
    for (int k : widths) out.push_back({m, k});
  }
  return out;
}

AllocationAction base_action(const BasePolicy& policy, const WorkflowGraph& graph, const ExecState& state) {
  const NodeSet ready = ready_set(graph, state.completed);
  if (ready.empty()) throw ContractViolation("base_action called on a completed workflow");
  std::vector<Assignment> assignments;
  assignments.reserve(static_cast<std::size_t>(ready.size()));
  ready.for_each([&](NodeIndex v) { assignments.push_back({v, policy.model, policy.width}); });
  return AllocationAction(std::move(assignments));
}

bool UniformPlan::feasible() const {
  return std::all_of(widths.begin(), widths.end(), [](int k) { return k > 0; });
}

UniformPlan uniform_plan(const WorkflowInstance& instance, ModelIndex model, int max_width) {
  UniformPlan plan;
  plan.model = model;
  const std::int64_t nodes = instance.node_count();
  for (NodeIndex v = 0; v < instance.node_count(); ++v) {
    const std::int64_t cost = instance.profiles().at(v, model).cost.value;
    std::int64_t k = max_width;
    // floor((B / |V|) / c) == floor(B / (|V| * c)) for positive integers.
    if (cost > 0) k = std::min<std::int64_t>(max_width, std::max<std::int64_t>(0, instance.budget().value) / (nodes * cost));
    plan.widths.push_back(static_cast<int>(k));
  }
  return plan;
}

const char* to_string(FailureReason reason) {
  switch (reason) {
    case FailureReason::kNone: return "none";
    case FailureReason::kNoFeasibleAction: return "no-feasible-action";
    case FailureReason::kBudgetExceeded: return "budget-exceeded";
    case FailureReason::kDeadlineExceeded: return "deadline-exceeded";
    case FailureReason::kDispatchFailed: return "dispatch-failed";
    case FailureReason::kInfeasiblePlan: return "infeasible-plan";
  }
  return "unknown";
}

std::optional<AllocationAction> BasePolicyRule::decide(const ExecState& state, int) {
  return base_action(policy_, graph_, state);
}

std::optional<AllocationAction> UniformRule::decide(const ExecState& state, int) {
  if (!plan_.feasible()) return std::nullopt;
  const NodeSet ready = ready_set(graph_, state.completed);
  std::vector<Assignment> assignments;
  ready.for_each([&](NodeIndex v) {
    assignments.push_back({v, plan_.model, plan_.widths[static_cast<std::size_t>(v)]});
  });
  return AllocationAction(std::move(assignments));
}

RngStream execution_stream(std::uint64_t seed, std::uint64_t run_id, int round) {
  return RngStream::derive(seed, StreamDomain::kExecution, {run_id, static_cast<std::uint64_t>(round)});
}

RunResult run_policy(const WorkflowInstance& instance, Policy& policy, const RunOptions& options) {
  using Clock = std::chrono::steady_clock;
  RunResult result;
  ExecState state = ExecState::initial(instance);
  const NodeSet all = instance.graph().all();
  const WorkflowInstance& estimates = policy.estimate_source() ? *policy.estimate_source() : instance;
  double planner_total = 0.0;
  int round = 0;

  const auto finish = [&](RunStatus status, FailureReason reason) {
    result.status = status;
    result.reason = reason;
    result.final_state = state;
    result.rounds = round;
    result.mean_planner_seconds = round > 0 ? planner_total / round : 0.0;
    return result;
  };

  while (state.completed != all) {
    const auto t0 = Clock::now();
    std::optional<AllocationAction> action = policy.decide(state, round);
    const double planner_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    planner_total += planner_seconds;
    if (!action || action->empty() || !is_feasible(state, *action, estimates)) {
      // The decision round still counts toward the planner-time average.
      ++round;
      return finish(RunStatus::kFailure, FailureReason::kNoFeasibleAction);
    }
    RngStream rng = execution_stream(options.seed, options.run_id, round);
    TransitionOutcome outcome = sample_transition(state, *action, instance, rng);
    const ExecState before = state;
    state = apply_outcome(state, outcome);
    const bool dispatch_failed = policy.aborts_on_failed_dispatch() && outcome.completed_now != action->nodes();
    if (options.record_trace) {
      result.trace.push_back({round, before, std::move(*action), std::move(outcome), planner_seconds});
    }
    ++round;
    if (state.remaining_budget < MicroUsd(0)) return finish(RunStatus::kFailure, FailureReason::kBudgetExceeded);
    if (state.remaining_time < Millis(0)) return finish(RunStatus::kFailure, FailureReason::kDeadlineExceeded);
    if (dispatch_failed) return finish(RunStatus::kFailure, FailureReason::kDispatchFailed);
  }
  return finish(RunStatus::kSuccess, FailureReason::kNone);
}

RunResult run_policy(const WorkflowInstance& instance, const BasePolicy& policy, const RunOptions& options) {
  BasePolicyRule rule(instance.graph(), policy);
  return run_policy(instance, rule, options);
}

RunResult run_policy(const WorkflowInstance& instance, const UniformPlan& plan, const RunOptions& options) {
  if (!plan.feasible()) {
    RunResult result;
    result.final_state = ExecState::initial(instance);
    result.reason = FailureReason::kInfeasiblePlan;
    return result;
  }
  UniformRule rule(instance.graph(), plan);
  return run_policy(instance, rule, options);
}

}  // namespace flowplan
