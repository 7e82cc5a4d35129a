#pragma once

#include <compare>
#include <span>
#include <string>
#include <vector>

#include "flowplan/node_set.hpp"
#include "flowplan/rng.hpp"
#include "flowplan/units.hpp"
#include "flowplan/workflow.hpp"

namespace flowplan {

/// Execution state: completed set, remaining budget and time, plus the
/// consumed amounts (spent + remaining_budget == B, elapsed + remaining_time == D).
struct ExecState {
  NodeSet completed;
  MicroUsd remaining_budget;
  Millis remaining_time;
  Millis elapsed;
  MicroUsd spent;

  static ExecState initial(const WorkflowInstance& instance);
  static ExecState at(NodeSet completed, MicroUsd remaining_budget, Millis remaining_time);

  bool within_limits() const { return remaining_budget >= MicroUsd(0) && remaining_time >= Millis(0); }

  friend bool operator==(const ExecState&, const ExecState&) = default;
};

struct Assignment {
  NodeIndex node = 0;
  ModelIndex model = 0;
  int width = 1;

  friend auto operator<=>(const Assignment&, const Assignment&) = default;
};

/// Model and width per ready node, kept sorted by node. The ordering of
/// actions is lexicographic on the (node, model, width) sequence; the planner
/// uses it to break ties.
class AllocationAction {
 public:
  AllocationAction() = default;
  /// Throws InputError on duplicate nodes or non-positive widths.
  explicit AllocationAction(std::vector<Assignment> assignments);

  std::span<const Assignment> assignments() const { return assignments_; }
  std::size_t size() const { return assignments_.size(); }
  bool empty() const { return assignments_.empty(); }
  NodeSet nodes() const;

  std::string to_string(const ModelCatalog& catalog) const;

  friend auto operator<=>(const AllocationAction&, const AllocationAction&) = default;
  friend bool operator==(const AllocationAction&, const AllocationAction&) = default;

 private:
  std::vector<Assignment> assignments_;
};

struct NodeOutcome {
  NodeIndex node = 0;
  int samples = 0;
  int successes = 0;
  MicroUsd cost;
  Millis duration;

  friend bool operator==(const NodeOutcome&, const NodeOutcome&) = default;
};

struct TransitionOutcome {
  NodeSet completed_now;
  MicroUsd cost;
  Millis duration;
  std::vector<NodeOutcome> detail;

  friend bool operator==(const TransitionOutcome&, const TransitionOutcome&) = default;
};

/// Probability that at least one of k independent attempts succeeds.
double success_prob(double p, int k);

MicroUsd action_cost(const AllocationAction& action, const ProfileTable& profiles);

/// Ideal-parallelism duration: the slowest assigned node's single latency.
Millis action_duration(const AllocationAction& action, const ProfileTable& profiles);
/// Same, honouring the instance's batch-latency model when one is set.
Millis action_duration(const AllocationAction& action, const WorkflowInstance& instance);

/// Estimated cost and duration fit in the remaining budget and time (inclusive).
bool is_feasible(const ExecState& state, const AllocationAction& action, const WorkflowInstance& instance);

/// Probability that exactly `subset` of the action's nodes complete this round.
/// Throws InputError unless subset is within R(S) and the action covers R(S).
double subset_probability(const ExecState& state, const AllocationAction& action, NodeSet subset,
                          const WorkflowInstance& instance);

/// Draws one round. Parametric: node v succeeds with probability q(k_v) and the
/// estimated cost and duration are charged. Empirical: k_v pool records are drawn
/// with replacement per node; success is any success, duration the slowest draw,
/// cost the drawn tokens at the model price.
/// Throws ContractViolation when the action does not cover exactly R(S), or, in
/// parametric mode, when it is infeasible. Empirical callers pre-check
/// feasibility on whatever estimates they plan with.
TransitionOutcome sample_transition(const ExecState& state, const AllocationAction& action,
                                    const WorkflowInstance& instance, RngStream& rng);

ExecState apply_outcome(const ExecState& state, const TransitionOutcome& outcome);

}  // namespace flowplan
