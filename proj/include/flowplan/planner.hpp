#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "flowplan/engine.hpp"
#include "flowplan/policy.hpp"
#include "flowplan/rng.hpp"
#include "flowplan/workflow.hpp"

namespace flowplan {

/// Lexicographic on the (node, model index, width) sequence; the only rule so far.
enum class TieBreak { kSmallestEncoding };

struct PlannerConfig {
  std::vector<int> widths{1, 4, 16, 64};
  int sims_per_pair = 64;
  std::size_t enumeration_cap = 4096;
  double delta = 0.05;
  TieBreak tie_break = TieBreak::kSmallestEncoding;
  /// Stop simulating a (candidate, continuation) pair as soon as its success
  /// count can no longer beat the best completed pair. The selected action and
  /// its score are unchanged; only losing rows of the table are left partial.
  bool skip_dominated = false;
  /// Threads used to score one decision. Selection does not depend on it.
  int workers = 1;

  /// Throws InputError on an empty or unsorted width grid, or N_sim < 1.
  void validate() const;
};

struct ActionScore {
  AllocationAction action;
  /// Q-hat per portfolio entry (make_portfolio order). NaN when the pair was
  /// abandoned as dominated.
  std::vector<double> continuation_values;
  double portfolio_value = 0.0;
  int best_continuation = 0;
  double radius = 0.0;
  /// False when some pair was abandoned; portfolio_value is then a lower bound
  /// that is already known to lose.
  bool complete = true;
};

struct Selection {
  AllocationAction action;
  double portfolio_value = 0.0;
  BasePolicy best_continuation;
  /// Hoeffding radius with L = feasible candidates x portfolio size.
  double radius = 0.0;
  std::size_t candidate_count = 0;
  std::size_t feasible_count = 0;
  /// Feasible candidates in encoding order.
  std::vector<ActionScore> table;
};

/// Number of actions in the full log-scale space, saturating at SIZE_MAX.
std::size_t action_space_size(int ready_count, int model_count, std::size_t width_count);

/// Every (model, width) combination for every ready node, sorted.
std::vector<AllocationAction> full_action_space(NodeSet ready, int model_count, std::span<const int> widths);

/// Full space when it fits under the cap; otherwise the homogeneous actions
/// plus every single-node deviation from them. Sorted and deduplicated.
/// Throws ContractViolation when the workflow is complete.
std::vector<AllocationAction> candidates(const ExecState& state, const WorkflowInstance& instance,
                                         const PlannerConfig& config);

/// Fraction of `sims` simulations that complete the workflow after applying
/// `action` and then following `continuation`. Replicate i draws from
/// stream.child(i). An infeasible action scores 0.
double mc_value(const ExecState& state, const AllocationAction& action, const BasePolicy& continuation, int sims,
                const WorkflowInstance& instance, const RngStream& stream);

/// Scores every feasible candidate against every base policy and returns the
/// argmax, or nullopt when no candidate is feasible. The pair (candidate i,
/// continuation j) simulates from stream.child(i).child(j).
std::optional<Selection> select_action(const ExecState& state, const WorkflowInstance& instance,
                                       const PlannerConfig& config, const RngStream& stream);

/// sqrt(ln(2L/delta) / (2N)). Throws InputError outside L >= 1, N >= 1, 0 < delta < 1.
double hoeffding_radius(std::size_t pairs, std::size_t sims, double delta);

RngStream planning_stream(std::uint64_t seed, std::uint64_t run_id, int round);

/// Replans at every round by select_action on `planning`, which may differ
/// from the executed instance (noisy planner-visible pools).
class McppRule : public Policy {
 public:
  McppRule(const WorkflowInstance& planning, PlannerConfig config, std::uint64_t seed, std::uint64_t run_id,
           std::vector<Selection>* selections = nullptr);

  std::optional<AllocationAction> decide(const ExecState& state, int round) override;
  const WorkflowInstance* estimate_source() const override { return &planning_; }

 private:
  const WorkflowInstance& planning_;
  PlannerConfig config_;
  std::uint64_t seed_;
  std::uint64_t run_id_;
  std::vector<Selection>* selections_;
};

struct McppRun {
  RunResult run;
  /// One entry per decision that found a feasible action.
  std::vector<Selection> selections;
};

McppRun run_mcpp(const WorkflowInstance& execution, const WorkflowInstance& planning, const PlannerConfig& config,
                 const RunOptions& options);
McppRun run_mcpp(const WorkflowInstance& instance, const PlannerConfig& config, const RunOptions& options);

}  // namespace flowplan
