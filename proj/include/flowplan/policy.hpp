#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "flowplan/engine.hpp"
#include "flowplan/workflow.hpp"

namespace flowplan {

/// Retry-(m, k): assign model m with width k to every ready node, every round.
struct BasePolicy {
  ModelIndex model = 0;
  int width = 1;

  friend auto operator<=>(const BasePolicy&, const BasePolicy&) = default;
};

/// All (model, width) base policies, model-major.
std::vector<BasePolicy> make_portfolio(int model_count, std::span<const int> widths);

/// Throws ContractViolation when the workflow is already complete.
AllocationAction base_action(const BasePolicy& policy, const WorkflowGraph& graph, const ExecState& state);

/// Static budget split: width floor((B / |V|) / c_{v,m}) per node, fixed before
/// execution. Each node is dispatched once.
struct UniformPlan {
  ModelIndex model = 0;
  std::vector<int> widths;

  /// False when some node got width 0; such a plan fails immediately.
  bool feasible() const;
};

/// Nodes with zero attempt cost get `max_width`.
UniformPlan uniform_plan(const WorkflowInstance& instance, ModelIndex model, int max_width = 1024);

enum class RunStatus { kSuccess, kFailure };

enum class FailureReason {
  kNone,
  kNoFeasibleAction,
  kBudgetExceeded,
  kDeadlineExceeded,
  kDispatchFailed,
  kInfeasiblePlan,
};

const char* to_string(FailureReason reason);

struct TraceStep {
  int round = 0;
  ExecState before;
  AllocationAction action;
  TransitionOutcome outcome;
  double planner_seconds = 0.0;
};

struct RunResult {
  RunStatus status = RunStatus::kFailure;
  FailureReason reason = FailureReason::kNone;
  ExecState final_state;
  int rounds = 0;
  /// Mean wall-clock seconds spent deciding per round.
  double mean_planner_seconds = 0.0;
  std::vector<TraceStep> trace;

  bool succeeded() const { return status == RunStatus::kSuccess; }
};

/// Closed-loop decision rule driven by run_policy.
class Policy {
 public:
  virtual ~Policy() = default;
  /// Next action for a non-terminal state, or nullopt when there is none.
  virtual std::optional<AllocationAction> decide(const ExecState& state, int round) = 0;
  /// A dispatched node that fails ends the run (static plans).
  virtual bool aborts_on_failed_dispatch() const { return false; }
  /// Instance whose estimates gate feasibility; null means the executed one.
  virtual const WorkflowInstance* estimate_source() const { return nullptr; }
};

class BasePolicyRule : public Policy {
 public:
  BasePolicyRule(const WorkflowGraph& graph, BasePolicy policy) : graph_(graph), policy_(policy) {}
  std::optional<AllocationAction> decide(const ExecState& state, int round) override;

 private:
  const WorkflowGraph& graph_;
  BasePolicy policy_;
};

class UniformRule : public Policy {
 public:
  UniformRule(const WorkflowGraph& graph, UniformPlan plan) : graph_(graph), plan_(std::move(plan)) {}
  std::optional<AllocationAction> decide(const ExecState& state, int round) override;
  bool aborts_on_failed_dispatch() const override { return true; }

 private:
  const WorkflowGraph& graph_;
  UniformPlan plan_;
};

class CallableRule : public Policy {
 public:
  using Fn = std::function<std::optional<AllocationAction>(const ExecState&, int)>;
  explicit CallableRule(Fn fn) : fn_(std::move(fn)) {}
  std::optional<AllocationAction> decide(const ExecState& state, int round) override { return fn_(state, round); }

 private:
  Fn fn_;
};

struct RunOptions {
  std::uint64_t seed = 0;
  std::uint64_t run_id = 0;
  bool record_trace = true;
};

/// Executes the closed loop against `instance`. Round r draws its outcome from
/// the execution stream (seed, run_id, r). Succeeds iff every node completes
/// with spent <= B and elapsed <= D.
RunResult run_policy(const WorkflowInstance& instance, Policy& policy, const RunOptions& options);
RunResult run_policy(const WorkflowInstance& instance, const BasePolicy& policy, const RunOptions& options);
RunResult run_policy(const WorkflowInstance& instance, const UniformPlan& plan, const RunOptions& options);

/// Execution stream for one round of one run.
RngStream execution_stream(std::uint64_t seed, std::uint64_t run_id, int round);

}  // namespace flowplan
