#include "flowplan/oracle.hpp"

#include <gmpxx.h>

#include <algorithm>
#include <deque>
#include <unordered_set>

#include "flowplan/errors.hpp"
#include "flowplan/planner.hpp"
#include "flowplan/rng.hpp"

namespace flowplan {

namespace {

template <class Scalar>
Scalar attempt_success(double p, int k);

template <>
double attempt_success<double>(double p, int k) {
  return success_prob(p, k);
}

template <>
mpq_class attempt_success<mpq_class>(double p, int k) {
  if (k < 1) throw InputError("width must be at least 1");
  const mpq_class fail = 1 - mpq_class(p);
  mpq_class all_fail = 1;
  for (int i = 0; i < k; ++i) all_fail *= fail;
  return 1 - all_fail;
}

ExecState successor(const ExecState& state, NodeSet done, MicroUsd cost, Millis duration) {
  ExecState next = state;
  next.completed = state.completed | done;
  next.remaining_budget -= cost;
  next.remaining_time -= duration;
  next.spent += cost;
  next.elapsed += duration;
  return next;
}

}  // namespace

template <class Scalar>
std::size_t ExactOracle<Scalar>::KeyHash::operator()(const Key& k) const {
  std::uint64_t h = mix64(k.completed);
  h = mix64(h ^ static_cast<std::uint64_t>(k.budget));
  h = mix64(h ^ static_cast<std::uint64_t>(k.time));
  h = mix64(h ^ static_cast<std::uint64_t>(k.tag));
  return static_cast<std::size_t>(h);
}

template <class Scalar>
ExactOracle<Scalar>::ExactOracle(const WorkflowInstance& instance, std::vector<int> widths, OracleLimits limits)
    : instance_(instance), widths_(std::move(widths)), limits_(limits) {
  if (instance_.mode() != ProfileMode::kParametric) {
    throw UnsupportedModeError("the exact oracle supports parametric instances only");
  }
  if (instance_.node_count() > limits_.max_nodes) {
    throw SizeLimitError("instance has " + std::to_string(instance_.node_count()) + " nodes; the oracle limit is " +
                         std::to_string(limits_.max_nodes));
  }
  PlannerConfig check;
  check.widths = widths_;
  check.validate();
  portfolio_ = make_portfolio(instance_.model_count(), widths_);
}

template <class Scalar>
std::vector<AllocationAction> ExactOracle<Scalar>::full_action_space(const ExecState& state) const {
  const NodeSet ready = ready_set(instance_.graph(), state.completed);
  const std::size_t size = action_space_size(ready.size(), instance_.model_count(), widths_.size());
  if (size > limits_.action_cap) {
    throw SizeLimitError("action space of " + std::to_string(size) + " exceeds the oracle cap of " +
                         std::to_string(limits_.action_cap));
  }
  return flowplan::full_action_space(ready, instance_.model_count(), widths_);
}

template <class Scalar>
const std::vector<std::pair<NodeSet, Scalar>>& ExactOracle<Scalar>::outcomes(const AllocationAction& action) {
  auto it = outcomes_.find(action);
  if (it != outcomes_.end()) return it->second;
  const auto assigned = action.assignments();
  std::vector<Scalar> q;
  q.reserve(assigned.size());
  for (const Assignment& a : assigned) {
    q.push_back(attempt_success<Scalar>(instance_.profiles().at(a.node, a.model).success_prob, a.width));
  }
  std::vector<std::pair<NodeSet, Scalar>> dist;
  const std::uint64_t subsets = std::uint64_t{1} << assigned.size();
  dist.reserve(subsets);
  for (std::uint64_t mask = 0; mask < subsets; ++mask) {
    NodeSet u;
    Scalar prob = 1;
    for (std::size_t i = 0; i < assigned.size(); ++i) {
      if ((mask >> i) & 1U) {
        u.insert(assigned[i].node);
        prob *= q[i];
      } else {
        prob *= 1 - q[i];
      }
    }
    dist.emplace_back(u, prob);
  }
  return outcomes_.emplace(action, std::move(dist)).first->second;
}

template <class Scalar>
Scalar ExactOracle<Scalar>::expect(const ExecState& state, const AllocationAction& action, std::int64_t tag,
                                   const BasePolicy* continuation) {
  const MicroUsd cost = action_cost(action, instance_.profiles());
  const Millis duration = action_duration(action, instance_);
  Scalar total = 0;
  for (const auto& [u, prob] : outcomes(action)) {
    if (prob == 0) continue;
    total += prob * lookup(successor(state, u, cost, duration), tag, continuation);
  }
  return total;
}

template <class Scalar>
Scalar ExactOracle<Scalar>::lookup(const ExecState& state, std::int64_t tag, const BasePolicy* continuation) {
  const Key key{state.completed.bits(), state.remaining_budget.value, state.remaining_time.value, tag};
  if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  Scalar v = compute(state, tag, continuation);
  cache_.emplace(key, v);
  return v;
}

template <class Scalar>
Scalar ExactOracle<Scalar>::compute(const ExecState& state, std::int64_t tag, const BasePolicy* continuation) {
  if (state.completed == instance_.graph().all()) return Scalar(1);
  if (tag == kOptimalTag) {
    Scalar best = 0;
    for (const AllocationAction& a : full_action_space(state)) {
      if (!is_feasible(state, a, instance_)) continue;
      Scalar v = expect(state, a, kOptimalTag, nullptr);
      if (v > best) best = v;
    }
    return best;
  }
  if (tag == kPlannerTag) {
    const std::optional<Plan> plan = portfolio_plan(state);
    if (!plan) return Scalar(0);
    return expect(state, plan->action, kPlannerTag, nullptr);
  }
  const AllocationAction a = base_action(*continuation, instance_.graph(), state);
  if (!is_feasible(state, a, instance_)) return Scalar(0);
  return expect(state, a, tag, continuation);
}

template <class Scalar>
Scalar ExactOracle<Scalar>::value(const ExecState& state) {
  return lookup(state, kOptimalTag, nullptr);
}

template <class Scalar>
Scalar ExactOracle<Scalar>::policy_value(const ExecState& state, const BasePolicy& policy) {
  return lookup(state, policy_tag(policy), &policy);
}

template <class Scalar>
Scalar ExactOracle<Scalar>::q(const ExecState& state, const AllocationAction& action, const BasePolicy& continuation) {
  if (action.nodes() != ready_set(instance_.graph(), state.completed)) {
    throw InputError("action must assign exactly the ready set");
  }
  if (!is_feasible(state, action, instance_)) return Scalar(0);
  return expect(state, action, policy_tag(continuation), &continuation);
}

template <class Scalar>
Scalar ExactOracle<Scalar>::q_star(const ExecState& state, const AllocationAction& action) {
  if (action.nodes() != ready_set(instance_.graph(), state.completed)) {
    throw InputError("action must assign exactly the ready set");
  }
  if (!is_feasible(state, action, instance_)) return Scalar(0);
  return expect(state, action, kOptimalTag, nullptr);
}

template <class Scalar>
std::pair<Scalar, BasePolicy> ExactOracle<Scalar>::portfolio_q(const ExecState& state,
                                                               const AllocationAction& action) {
  Scalar best = -1;
  BasePolicy arg = portfolio_.front();
  for (const BasePolicy& mu : portfolio_) {
    Scalar v = q(state, action, mu);
    if (v > best) {
      best = v;
      arg = mu;
    }
  }
  return {best, arg};
}

template <class Scalar>
std::optional<typename ExactOracle<Scalar>::Plan> ExactOracle<Scalar>::portfolio_plan(
    const ExecState& state, std::span<const AllocationAction> candidates) {
  std::optional<Plan> best;
  for (const AllocationAction& a : candidates) {
    if (!is_feasible(state, a, instance_)) continue;
    auto [v, mu] = portfolio_q(state, a);
    if (!best || v > best->value) best = Plan{a, v, mu};
  }
  return best;
}

template <class Scalar>
std::optional<typename ExactOracle<Scalar>::Plan> ExactOracle<Scalar>::portfolio_plan(const ExecState& state) {
  const std::vector<AllocationAction> all = full_action_space(state);
  return portfolio_plan(state, all);
}

template <class Scalar>
Scalar ExactOracle<Scalar>::exact_planner_value(const ExecState& state) {
  return lookup(state, kPlannerTag, nullptr);
}

template <class Scalar>
typename ExactOracle<Scalar>::Gaps ExactOracle<Scalar>::gaps(const ExecState& state,
                                                             std::span<const AllocationAction> pruned) {
  const auto best_over = [&](std::span<const AllocationAction> actions) {
    Scalar best = 0;
    for (const AllocationAction& a : actions) {
      if (!is_feasible(state, a, instance_)) continue;
      Scalar v = portfolio_q(state, a).first;
      if (v > best) best = v;
    }
    return best;
  };
  const std::vector<AllocationAction> all = full_action_space(state);
  const Scalar full = best_over(all);
  return Gaps{full - best_over(pruned), value(state) - full};
}

template <class Scalar>
std::vector<ExecState> ExactOracle<Scalar>::reachable_states(const ExecState& start) {
  std::vector<ExecState> out;
  std::unordered_set<Key, KeyHash> seen;
  std::deque<ExecState> queue{start};
  seen.insert({start.completed.bits(), start.remaining_budget.value, start.remaining_time.value, 0});
  while (!queue.empty()) {
    ExecState s = queue.front();
    queue.pop_front();
    out.push_back(s);
    if (s.completed == instance_.graph().all()) continue;
    for (const AllocationAction& a : full_action_space(s)) {
      if (!is_feasible(s, a, instance_)) continue;
      const MicroUsd cost = action_cost(a, instance_.profiles());
      const Millis duration = action_duration(a, instance_);
      for (const auto& [u, prob] : outcomes(a)) {
        ExecState next = successor(s, u, cost, duration);
        if (seen.insert({next.completed.bits(), next.remaining_budget.value, next.remaining_time.value, 0}).second) {
          queue.push_back(next);
        }
      }
    }
  }
  return out;
}

template class ExactOracle<double>;
template class ExactOracle<mpq_class>;

}  // namespace flowplan
