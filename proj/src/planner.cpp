#include "flowplan/planner.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "flowplan/errors.hpp"
#include "flowplan/parallel.hpp"

namespace flowplan {

namespace {

/// One node's assignment with everything the hot loop needs precomputed.
struct Step {
  NodeIndex node = 0;
  ModelIndex model = 0;
  int width = 1;
  double q = 0.0;
  std::int64_t cost = 0;
  std::int64_t duration = 0;
};

struct RoundTotals {
  std::uint64_t done = 0;
  std::int64_t cost = 0;
  std::int64_t duration = 0;
};

/// Rollout simulator over a read-only instance. Draw order and accounting
/// match sample_transition, without building outcome records.
class Simulator {
 public:
  explicit Simulator(const WorkflowInstance& instance)
      : instance_(instance),
        nodes_(instance.node_count()),
        all_(instance.graph().all().bits()),
        table_(instance.mode() == ProfileMode::kEmpirical ? &instance.sampling() : nullptr) {
    preds_.reserve(static_cast<std::size_t>(nodes_));
    for (NodeIndex v = 0; v < nodes_; ++v) preds_.push_back(instance.graph().predecessors(v).bits());
  }

  Step prepare(NodeIndex v, ModelIndex m, int k) const {
    const Profile& prof = instance_.profiles().at(v, m);
    return {v, m, k, success_prob(prof.success_prob, k), (prof.cost * k).value,
            instance_.attempt_duration(v, m, k).value};
  }

  std::vector<Step> prepare(const AllocationAction& action) const {
    std::vector<Step> out;
    out.reserve(action.size());
    for (const Assignment& a : action.assignments()) out.push_back(prepare(a.node, a.model, a.width));
    return out;
  }

  /// Indexed by node.
  std::vector<Step> prepare(const BasePolicy& policy) const {
    std::vector<Step> out;
    out.reserve(static_cast<std::size_t>(nodes_));
    for (NodeIndex v = 0; v < nodes_; ++v) out.push_back(prepare(v, policy.model, policy.width));
    return out;
  }

  /// Applies `first` (assumed feasible on estimates), then the continuation
  /// until the workflow completes or a constraint fails.
  bool rollout(const ExecState& state, std::span<const Step> first, std::span<const Step> continuation,
               RngStream rng) const {
    std::uint64_t done = state.completed.bits();
    std::int64_t budget = state.remaining_budget.value;
    std::int64_t time = state.remaining_time.value;

    RoundTotals round;
    for (const Step& s : first) draw(s, round, rng);
    if (!settle(round, done, budget, time)) return false;

    std::array<const Step*, NodeSet::kMaxNodes> ready{};
    while (done != all_) {
      int count = 0;
      std::int64_t cost = 0;
      std::int64_t duration = 0;
      for (NodeIndex v = 0; v < nodes_; ++v) {
        if ((done >> v) & 1U) continue;
        if ((preds_[static_cast<std::size_t>(v)] & ~done) != 0) continue;
        const Step& s = continuation[static_cast<std::size_t>(v)];
        ready[static_cast<std::size_t>(count++)] = &s;
        cost += s.cost;
        duration = std::max(duration, s.duration);
      }
      if (cost > budget || duration > time) return false;
      RoundTotals next;
      for (int i = 0; i < count; ++i) draw(*ready[static_cast<std::size_t>(i)], next, rng);
      if (!settle(next, done, budget, time)) return false;
    }
    return true;
  }

 private:
  void draw(const Step& s, RoundTotals& round, RngStream& rng) const {
    if (table_ == nullptr) {
      if (rng.bernoulli(s.q)) round.done |= std::uint64_t{1} << s.node;
      round.cost += s.cost;
      round.duration = std::max(round.duration, s.duration);
      return;
    }
    const SamplingTable::Pair& pair = table_->pair(s.node, s.model);
    const auto n = static_cast<std::uint32_t>(pair.success.size());
    bool ok = false;
    std::int64_t tokens = 0;
    std::int64_t slowest = 0;
    for (int i = 0; i < s.width; ++i) {
      const std::uint32_t idx = rng.below(n);
      ok = ok || pair.success[idx] != 0;
      tokens += pair.tokens[idx];
      slowest = std::max(slowest, pair.latency_ms[idx]);
    }
    if (ok) round.done |= std::uint64_t{1} << s.node;
    round.cost += std::llround(static_cast<double>(tokens) * table_->price_factor(s.model));
    round.duration = std::max(round.duration, slowest);
  }

  static bool settle(const RoundTotals& round, std::uint64_t& done, std::int64_t& budget, std::int64_t& time) {
    done |= round.done;
    budget -= round.cost;
    time -= round.duration;
    return budget >= 0 && time >= 0;
  }

  const WorkflowInstance& instance_;
  int nodes_;
  std::uint64_t all_;
  const SamplingTable* table_;
  std::vector<std::uint64_t> preds_;
};

void require_ready_cover(const ExecState& state, const AllocationAction& action, const WorkflowInstance& instance) {
  const NodeSet ready = ready_set(instance.graph(), state.completed);
  if (ready.empty()) throw ContractViolation("the workflow is already complete");
  if (action.nodes() != ready) throw ContractViolation("action must assign exactly the ready set");
}

}  // namespace

void PlannerConfig::validate() const {
  if (widths.empty()) throw InputError("width grid is empty");
  for (std::size_t i = 0; i < widths.size(); ++i) {
    if (widths[i] < 1) throw InputError("widths must be positive");
    if (i > 0 && widths[i] <= widths[i - 1]) throw InputError("widths must be strictly increasing");
  }
  if (sims_per_pair < 1) throw InputError("sims per pair must be at least 1");
  if (enumeration_cap < 1) throw InputError("enumeration cap must be at least 1");
  if (!(delta > 0.0 && delta < 1.0)) throw InputError("delta must lie in (0, 1)");
  if (workers < 1) throw InputError("workers must be at least 1");
}

std::size_t action_space_size(int ready_count, int model_count, std::size_t width_count) {
  const std::size_t options = static_cast<std::size_t>(model_count) * width_count;
  std::size_t total = 1;
  for (int i = 0; i < ready_count; ++i) {
    if (options != 0 && total > std::numeric_limits<std::size_t>::max() / options) {
      return std::numeric_limits<std::size_t>::max();
    }
    total *= options;
  }
  return total;
}

std::vector<AllocationAction> full_action_space(NodeSet ready, int model_count, std::span<const int> widths) {
  const std::vector<NodeIndex> nodes = ready.to_vector();
  const std::size_t options = static_cast<std::size_t>(model_count) * widths.size();
  std::vector<AllocationAction> out;
  if (nodes.empty() || options == 0) return out;
  out.reserve(action_space_size(static_cast<int>(nodes.size()), model_count, widths.size()));
  // Odometer with the first node slowest; options run (model, width) ascending,
  // so the output is already in encoding order.
  std::vector<std::size_t> digit(nodes.size(), 0);
  for (;;) {
    std::vector<Assignment> assignments;
    assignments.reserve(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      assignments.push_back({nodes[i], static_cast<ModelIndex>(digit[i] / widths.size()),
                             widths[digit[i] % widths.size()]});
    }
    out.emplace_back(std::move(assignments));
    std::size_t pos = nodes.size();
    while (pos > 0 && ++digit[pos - 1] == options) digit[--pos] = 0;
    if (pos == 0) break;
  }
  return out;
}

std::vector<AllocationAction> candidates(const ExecState& state, const WorkflowInstance& instance,
                                         const PlannerConfig& config) {
  const NodeSet ready = ready_set(instance.graph(), state.completed);
  if (ready.empty()) throw ContractViolation("no candidates for a completed workflow");
  const int models = instance.model_count();
  if (action_space_size(ready.size(), models, config.widths.size()) <= config.enumeration_cap) {
    return full_action_space(ready, models, config.widths);
  }
  const std::vector<NodeIndex> nodes = ready.to_vector();
  std::vector<AllocationAction> out;
  for (ModelIndex m = 0; m < models; ++m) {
    for (int k : config.widths) {
      std::vector<Assignment> base;
      for (NodeIndex v : nodes) base.push_back({v, m, k});
      out.emplace_back(base);
      for (std::size_t i = 0; i < nodes.size(); ++i) {
        for (ModelIndex m2 = 0; m2 < models; ++m2) {
          for (int k2 : config.widths) {
            if (m2 == m && k2 == k) continue;
            std::vector<Assignment> deviation = base;
            deviation[i] = {nodes[i], m2, k2};
            out.emplace_back(std::move(deviation));
          }
        }
      }
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

double mc_value(const ExecState& state, const AllocationAction& action, const BasePolicy& continuation, int sims,
                const WorkflowInstance& instance, const RngStream& stream) {
  if (sims < 1) throw InputError("sims must be at least 1");
  require_ready_cover(state, action, instance);
  if (!is_feasible(state, action, instance)) return 0.0;
  const Simulator sim(instance);
  const std::vector<Step> first = sim.prepare(action);
  const std::vector<Step> cont = sim.prepare(continuation);
  int successes = 0;
  for (int i = 0; i < sims; ++i) {
    successes += sim.rollout(state, first, cont, stream.child(static_cast<std::uint64_t>(i))) ? 1 : 0;
  }
  return static_cast<double>(successes) / sims;
}

std::optional<Selection> select_action(const ExecState& state, const WorkflowInstance& instance,
                                       const PlannerConfig& config, const RngStream& stream) {
  config.validate();
  const std::vector<AllocationAction> all = candidates(state, instance, config);
  std::vector<std::size_t> feasible;
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (is_feasible(state, all[i], instance)) feasible.push_back(i);
  }
  if (feasible.empty()) return std::nullopt;

  const Simulator sim(instance);
  const std::vector<BasePolicy> portfolio = make_portfolio(instance.model_count(), config.widths);
  std::vector<std::vector<Step>> conts;
  conts.reserve(portfolio.size());
  for (const BasePolicy& mu : portfolio) conts.push_back(sim.prepare(mu));

  const int n = config.sims_per_pair;
  const double radius = hoeffding_radius(feasible.size() * portfolio.size(), static_cast<std::size_t>(n), config.delta);
  std::vector<ActionScore> table(feasible.size());
  std::vector<int> best_count(feasible.size(), -1);

  const auto score = [&](std::size_t f, int& incumbent) {
    const std::size_t ci = feasible[f];
    ActionScore& row = table[f];
    row.action = all[ci];
    row.radius = radius;
    row.best_continuation = -1;
    row.continuation_values.assign(portfolio.size(), std::numeric_limits<double>::quiet_NaN());
    const std::vector<Step> first = sim.prepare(all[ci]);
    const RngStream base = stream.child(ci);
    int best = -1;
    for (std::size_t j = 0; j < portfolio.size(); ++j) {
      const RngStream pair = base.child(j);
      int successes = 0;
      bool abandoned = false;
      for (int t = 0; t < n; ++t) {
        if (config.skip_dominated && successes + (n - t) <= incumbent) {
          abandoned = true;
          break;
        }
        successes += sim.rollout(state, first, conts[j], pair.child(static_cast<std::uint64_t>(t))) ? 1 : 0;
      }
      if (abandoned) {
        row.complete = false;
        continue;
      }
      row.continuation_values[j] = static_cast<double>(successes) / n;
      if (successes > best) {
        best = successes;
        row.best_continuation = static_cast<int>(j);
      }
      incumbent = std::max(incumbent, successes);
    }
    best_count[f] = best;
    row.portfolio_value = best < 0 ? 0.0 : static_cast<double>(best) / n;
  };

  // Contiguous blocks, each with its own incumbent, keep the selection
  // independent of the worker count.
  const std::size_t blocks = std::min<std::size_t>(feasible.size(), static_cast<std::size_t>(config.workers));
  parallel_for(blocks, config.workers, [&](std::size_t b) {
    const std::size_t lo = b * feasible.size() / blocks;
    const std::size_t hi = (b + 1) * feasible.size() / blocks;
    int incumbent = -1;
    for (std::size_t f = lo; f < hi; ++f) score(f, incumbent);
  });

  std::size_t winner = 0;
  for (std::size_t f = 1; f < feasible.size(); ++f) {
    if (best_count[f] > best_count[winner]) winner = f;
  }
  Selection sel;
  sel.action = table[winner].action;
  sel.portfolio_value = table[winner].portfolio_value;
  sel.best_continuation = portfolio[static_cast<std::size_t>(table[winner].best_continuation)];
  sel.radius = radius;
  sel.candidate_count = all.size();
  sel.feasible_count = feasible.size();
  sel.table = std::move(table);
  return sel;
}

double hoeffding_radius(std::size_t pairs, std::size_t sims, double delta) {
  if (pairs < 1) throw InputError("L must be at least 1");
  if (sims < 1) throw InputError("N must be at least 1");
  if (!(delta > 0.0 && delta < 1.0)) throw InputError("delta must lie in (0, 1)");
  return std::sqrt(std::log(2.0 * static_cast<double>(pairs) / delta) / (2.0 * static_cast<double>(sims)));
}

RngStream planning_stream(std::uint64_t seed, std::uint64_t run_id, int round) {
  return RngStream::derive(seed, StreamDomain::kPlanning, {run_id, static_cast<std::uint64_t>(round)});
}

McppRule::McppRule(const WorkflowInstance& planning, PlannerConfig config, std::uint64_t seed, std::uint64_t run_id,
                   std::vector<Selection>* selections)
    : planning_(planning), config_(std::move(config)), seed_(seed), run_id_(run_id), selections_(selections) {
  config_.validate();
}

std::optional<AllocationAction> McppRule::decide(const ExecState& state, int round) {
  std::optional<Selection> sel = select_action(state, planning_, config_, planning_stream(seed_, run_id_, round));
  if (!sel) return std::nullopt;
  AllocationAction action = sel->action;
  if (selections_ != nullptr) selections_->push_back(std::move(*sel));
  return action;
}

McppRun run_mcpp(const WorkflowInstance& execution, const WorkflowInstance& planning, const PlannerConfig& config,
                 const RunOptions& options) {
  if (execution.node_count() != planning.node_count() || execution.model_count() != planning.model_count()) {
    throw InputError("planning and execution instances differ in shape");
  }
  McppRun out;
  McppRule rule(planning, config, options.seed, options.run_id, options.record_trace ? &out.selections : nullptr);
  out.run = run_policy(execution, rule, options);
  return out;
}

McppRun run_mcpp(const WorkflowInstance& instance, const PlannerConfig& config, const RunOptions& options) {
  return run_mcpp(instance, instance, config, options);
}

}  // namespace flowplan
