#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "flowplan/engine.hpp"
#include "flowplan/policy.hpp"
#include "flowplan/workflow.hpp"

namespace flowplan {

struct OracleLimits {
  int max_nodes = 12;
  /// Largest full action space allowed at any visited state.
  std::size_t action_cap = 4096;
};

/// Exact dynamic programming over a parametric instance. States are exact
/// integer (S, b, h) triples, so memoization introduces no discretization.
/// Scalar is double or mpq_class; the rational instantiation gives exact
/// values for zero-tolerance comparisons.
template <class Scalar>
class ExactOracle {
 public:
  struct Plan {
    AllocationAction action;
    Scalar value;
    BasePolicy continuation;
  };

  struct Gaps {
    /// Best portfolio value over the full space minus over the pruned set.
    Scalar eta;
    /// Optimal value minus the best portfolio value over the full space.
    Scalar zeta;
  };

  /// Throws UnsupportedModeError for empirical instances and SizeLimitError
  /// above the node limit. Action-space limits are checked lazily per state.
  ExactOracle(const WorkflowInstance& instance, std::vector<int> widths, OracleLimits limits = {});

  const WorkflowInstance& instance() const { return instance_; }
  const std::vector<int>& widths() const { return widths_; }
  const std::vector<BasePolicy>& portfolio() const { return portfolio_; }

  /// V*_K(s).
  Scalar value(const ExecState& state);
  /// V^mu(s) for a base policy.
  Scalar policy_value(const ExecState& state, const BasePolicy& policy);
  /// Q_mu(s, a); 0 for an infeasible action.
  Scalar q(const ExecState& state, const AllocationAction& action, const BasePolicy& continuation);
  /// Q*_K(s, a) = E[V*_K(s')]; 0 for an infeasible action.
  Scalar q_star(const ExecState& state, const AllocationAction& action);
  /// max over the portfolio of Q_mu(s, a), with the first maximizing policy.
  std::pair<Scalar, BasePolicy> portfolio_q(const ExecState& state, const AllocationAction& action);

  /// Exact portfolio planner over the feasible members of `candidates`, which
  /// must be sorted. Ties go to the first. nullopt when none is feasible.
  std::optional<Plan> portfolio_plan(const ExecState& state, std::span<const AllocationAction> candidates);
  /// Same over the full log-scale space.
  std::optional<Plan> portfolio_plan(const ExecState& state);

  /// Closed-loop value of replanning with portfolio_plan over the full space
  /// at every state.
  Scalar exact_planner_value(const ExecState& state);

  Gaps gaps(const ExecState& state, std::span<const AllocationAction> pruned);

  /// Full log-scale space at the state. Throws SizeLimitError above the cap.
  std::vector<AllocationAction> full_action_space(const ExecState& state) const;

  /// Every state reachable from `start` under any feasible action and any
  /// success subset, in discovery order (start first).
  std::vector<ExecState> reachable_states(const ExecState& start);

  /// Success-subset distribution of an action: (U, Pr(U)) for every U.
  const std::vector<std::pair<NodeSet, Scalar>>& outcomes(const AllocationAction& action);

  std::size_t cache_size() const { return cache_.size(); }

 private:
  struct Key {
    std::uint64_t completed;
    std::int64_t budget;
    std::int64_t time;
    std::int64_t tag;

    friend bool operator==(const Key&, const Key&) = default;
  };
  struct KeyHash {
    std::size_t operator()(const Key& k) const;
  };

  static constexpr std::int64_t kOptimalTag = 0;
  static constexpr std::int64_t kPlannerTag = 1;
  static std::int64_t policy_tag(const BasePolicy& p) { return 16 + (std::int64_t{p.model} << 24) + p.width; }

  Scalar expect(const ExecState& state, const AllocationAction& action, std::int64_t tag,
                const BasePolicy* continuation);
  Scalar lookup(const ExecState& state, std::int64_t tag, const BasePolicy* continuation);
  Scalar compute(const ExecState& state, std::int64_t tag, const BasePolicy* continuation);

  WorkflowInstance instance_;
  std::vector<int> widths_;
  OracleLimits limits_;
  std::vector<BasePolicy> portfolio_;
  std::unordered_map<Key, Scalar, KeyHash> cache_;
  std::map<AllocationAction, std::vector<std::pair<NodeSet, Scalar>>> outcomes_;
};

}  // namespace flowplan
