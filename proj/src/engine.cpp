#include "flowplan/engine.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "flowplan/errors.hpp"

namespace flowplan {

ExecState ExecState::initial(const WorkflowInstance& instance) {
  return at(NodeSet{}, instance.budget(), instance.deadline());
}

ExecState ExecState::at(NodeSet completed, MicroUsd remaining_budget, Millis remaining_time) {
  ExecState s;
  s.completed = completed;
  s.remaining_budget = remaining_budget;
  s.remaining_time = remaining_time;
  return s;
}

AllocationAction::AllocationAction(std::vector<Assignment> assignments) : assignments_(std::move(assignments)) {
  std::sort(assignments_.begin(), assignments_.end());
  for (std::size_t i = 0; i < assignments_.size(); ++i) {
    if (assignments_[i].width < 1) throw InputError("sampling width must be positive");
    if (assignments_[i].node < 0 || assignments_[i].node >= NodeSet::kMaxNodes) {
      throw InputError("assignment node out of range");
    }
    if (i > 0 && assignments_[i].node == assignments_[i - 1].node) {
      throw InputError("node " + std::to_string(assignments_[i].node) + " assigned twice");
    }
  }
}

NodeSet AllocationAction::nodes() const {
  NodeSet s;
  for (const Assignment& a : assignments_) s.insert(a.node);
  return s;
}

std::string AllocationAction::to_string(const ModelCatalog& catalog) const {
  std::ostringstream out;
  out << '{';
  for (std::size_t i = 0; i < assignments_.size(); ++i) {
    const Assignment& a = assignments_[i];
    if (i > 0) out << ", ";
    out << a.node << ":(" << catalog.at(a.model).id << ',' << a.width << ')';
  }
  out << '}';
  return out.str();
}

double success_prob(double p, int k) {
  if (k < 1) throw InputError("width must be at least 1");
  if (!(p >= 0.0 && p <= 1.0)) throw InputError("probability outside [0,1]");
  if (p == 0.0) return 0.0;
  if (p == 1.0) return 1.0;
  // 1 - p is exact for p >= 0.5; below that, log1p keeps small p accurate.
  if (p >= 0.5) return 1.0 - std::pow(1.0 - p, k);
  return -std::expm1(static_cast<double>(k) * std::log1p(-p));
}

MicroUsd action_cost(const AllocationAction& action, const ProfileTable& profiles) {
  MicroUsd total;
  for (const Assignment& a : action.assignments()) total += profiles.at(a.node, a.model).cost * a.width;
  return total;
}

Millis action_duration(const AllocationAction& action, const ProfileTable& profiles) {
  Millis longest;
  for (const Assignment& a : action.assignments()) {
    longest = std::max(longest, profiles.at(a.node, a.model).latency);
  }
  return longest;
}

Millis action_duration(const AllocationAction& action, const WorkflowInstance& instance) {
  if (!instance.has_batch_latency()) return action_duration(action, instance.profiles());
  Millis longest;
  for (const Assignment& a : action.assignments()) {
    longest = std::max(longest, instance.attempt_duration(a.node, a.model, a.width));
  }
  return longest;
}

bool is_feasible(const ExecState& state, const AllocationAction& action, const WorkflowInstance& instance) {
  return action_cost(action, instance.profiles()) <= state.remaining_budget &&
         action_duration(action, instance) <= state.remaining_time;
}

double subset_probability(const ExecState& state, const AllocationAction& action, NodeSet subset,
                          const WorkflowInstance& instance) {
  const NodeSet ready = ready_set(instance.graph(), state.completed);
  if (!subset.subset_of(ready)) throw InputError("subset is not contained in the ready set");
  if (action.nodes() != ready) throw InputError("action must assign exactly the ready set");
  double prob = 1.0;
  for (const Assignment& a : action.assignments()) {
    const double q = success_prob(instance.profiles().at(a.node, a.model).success_prob, a.width);
    prob *= subset.contains(a.node) ? q : 1.0 - q;
  }
  return prob;
}

TransitionOutcome sample_transition(const ExecState& state, const AllocationAction& action,
                                    const WorkflowInstance& instance, RngStream& rng) {
  if (action.nodes() != ready_set(instance.graph(), state.completed)) {
    throw ContractViolation("action must assign exactly the ready set");
  }
  if (instance.mode() == ProfileMode::kParametric && !is_feasible(state, action, instance)) {
    throw ContractViolation("action exceeds the remaining budget or time");
  }
  TransitionOutcome out;
  out.detail.reserve(action.size());
  if (instance.mode() == ProfileMode::kParametric) {
    for (const Assignment& a : action.assignments()) {
      const Profile& prof = instance.profiles().at(a.node, a.model);
      const bool ok = rng.bernoulli(success_prob(prof.success_prob, a.width));
      const Millis d = instance.attempt_duration(a.node, a.model, a.width);
      if (ok) out.completed_now.insert(a.node);
      out.detail.push_back({a.node, a.width, ok ? 1 : 0, prof.cost * a.width, d});
    }
    out.cost = action_cost(action, instance.profiles());
    out.duration = action_duration(action, instance);
    return out;
  }
  const SamplingTable& table = instance.sampling();
  for (const Assignment& a : action.assignments()) {
    const SamplingTable::Pair& pair = table.pair(a.node, a.model);
    const auto n = static_cast<std::uint32_t>(pair.success.size());
    int successes = 0;
    std::int64_t tokens = 0;
    std::int64_t slowest = 0;
    for (int i = 0; i < a.width; ++i) {
      const std::uint32_t idx = rng.below(n);
      successes += pair.success[idx];
      tokens += pair.tokens[idx];
      slowest = std::max(slowest, pair.latency_ms[idx]);
    }
    const MicroUsd cost(std::llround(static_cast<double>(tokens) * table.price_factor(a.model)));
    if (successes > 0) out.completed_now.insert(a.node);
    out.detail.push_back({a.node, a.width, successes, cost, Millis(slowest)});
    out.cost += cost;
    out.duration = std::max(out.duration, Millis(slowest));
  }
  return out;
}

ExecState apply_outcome(const ExecState& state, const TransitionOutcome& outcome) {
  ExecState next = state;
  next.completed = state.completed | outcome.completed_now;
  next.remaining_budget -= outcome.cost;
  next.remaining_time -= outcome.duration;
  next.spent += outcome.cost;
  next.elapsed += outcome.duration;
  return next;
}

}  // namespace flowplan
