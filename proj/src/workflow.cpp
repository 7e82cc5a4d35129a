#include "flowplan/workflow.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <utility>

#include "flowplan/errors.hpp"

namespace flowplan {

WorkflowGraph::WorkflowGraph(int node_count, std::vector<Edge> edges, std::vector<std::string> names)
    : node_count_(node_count), edges_(std::move(edges)), names_(std::move(names)) {
  if (node_count < 0) throw InputError("node count must be non-negative");
  if (names_.empty()) {
    for (int v = 0; v < node_count; ++v) names_.push_back("v" + std::to_string(v));
  } else if (static_cast<int>(names_.size()) != node_count) {
    throw InputError("node name list does not match node count");
  }
  preds_.assign(static_cast<std::size_t>(node_count), NodeSet{});
  for (const Edge& e : edges_) {
    const bool in_range = e.from >= 0 && e.from < node_count && e.to >= 0 && e.to < node_count;
    if (in_range && e.from < NodeSet::kMaxNodes && e.to < NodeSet::kMaxNodes) {
      preds_[static_cast<std::size_t>(e.to)].insert(e.from);
    }
  }
}

std::optional<std::vector<NodeIndex>> WorkflowGraph::topological_order() const {
  std::vector<int> indegree(static_cast<std::size_t>(node_count_), 0);
  std::vector<std::vector<NodeIndex>> succ(static_cast<std::size_t>(node_count_));
  for (const Edge& e : edges_) {
    if (e.from < 0 || e.from >= node_count_ || e.to < 0 || e.to >= node_count_) continue;
    succ[static_cast<std::size_t>(e.from)].push_back(e.to);
    ++indegree[static_cast<std::size_t>(e.to)];
  }
  std::vector<NodeIndex> order;
  std::vector<NodeIndex> frontier;
  for (NodeIndex v = 0; v < node_count_; ++v) {
    if (indegree[static_cast<std::size_t>(v)] == 0) frontier.push_back(v);
  }
  while (!frontier.empty()) {
    const NodeIndex v = frontier.back();
    frontier.pop_back();
    order.push_back(v);
    for (NodeIndex w : succ[static_cast<std::size_t>(v)]) {
      if (--indegree[static_cast<std::size_t>(w)] == 0) frontier.push_back(w);
    }
  }
  if (static_cast<int>(order.size()) != node_count_) return std::nullopt;
  return order;
}

NodeSet ready_set(const WorkflowGraph& graph, NodeSet completed) {
  const NodeSet all = graph.all();
  if (!completed.subset_of(all)) {
    throw InputError("completed set references a node outside the graph");
  }
  NodeSet ready;
  (all - completed).for_each([&](NodeIndex v) {
    if (graph.predecessors(v).subset_of(completed)) ready.insert(v);
  });
  return ready;
}

ModelCatalog::ModelCatalog(std::vector<ModelSpec> models) : models_(std::move(models)) {}

std::optional<ModelIndex> ModelCatalog::find(const std::string& id) const {
  for (std::size_t i = 0; i < models_.size(); ++i) {
    if (models_[i].id == id) return static_cast<ModelIndex>(i);
  }
  return std::nullopt;
}

ModelIndex ModelCatalog::index_of(const std::string& id) const {
  if (auto m = find(id)) return *m;
  throw InputError("unknown model id '" + id + "'");
}

Profile make_profile(double success_prob, double mean_tokens, const ModelSpec& model) {
  Profile p;
  p.success_prob = success_prob;
  p.mean_tokens = mean_tokens;
  p.cost = token_cost(mean_tokens, model.price_per_1k_tokens_usd);
  const double seconds = model.tokens_per_second > 0 ? mean_tokens / model.tokens_per_second : 0.0;
  p.latency = Millis(std::max<std::int64_t>(1, std::llround(seconds * 1e3)));
  return p;
}

ProfileTable::ProfileTable(int node_count, int model_count)
    : nodes_(node_count),
      models_(model_count),
      entries_(static_cast<std::size_t>(node_count) * static_cast<std::size_t>(model_count)) {}

std::size_t ProfileTable::slot(NodeIndex v, ModelIndex m) const {
  if (v < 0 || v >= nodes_ || m < 0 || m >= models_) {
    throw InputError("profile lookup out of range: node " + std::to_string(v) + ", model " +
                     std::to_string(m));
  }
  return static_cast<std::size_t>(v) * static_cast<std::size_t>(models_) + static_cast<std::size_t>(m);
}

void ProfileTable::set(NodeIndex v, ModelIndex m, Profile profile) { entries_[slot(v, m)] = profile; }

const std::optional<Profile>& ProfileTable::find(NodeIndex v, ModelIndex m) const {
  return entries_[slot(v, m)];
}

const Profile& ProfileTable::at(NodeIndex v, ModelIndex m) const {
  const auto& entry = find(v, m);
  if (!entry) {
    throw InputError("missing profile for node " + std::to_string(v) + ", model " + std::to_string(m));
  }
  return *entry;
}

RolloutPool::RolloutPool(int node_count, int model_count)
    : nodes_(node_count),
      models_(model_count),
      pairs_(static_cast<std::size_t>(node_count) * static_cast<std::size_t>(model_count)) {}

std::size_t RolloutPool::slot(NodeIndex v, ModelIndex m) const {
  if (v < 0 || v >= nodes_ || m < 0 || m >= models_) {
    throw InputError("pool lookup out of range: node " + std::to_string(v) + ", model " +
                     std::to_string(m));
  }
  return static_cast<std::size_t>(v) * static_cast<std::size_t>(models_) + static_cast<std::size_t>(m);
}

void RolloutPool::add(NodeIndex v, ModelIndex m, PoolRecord record) {
  pairs_[slot(v, m)].push_back(record);
}

std::span<const PoolRecord> RolloutPool::samples(NodeIndex v, ModelIndex m) const {
  return pairs_[slot(v, m)];
}

std::vector<PoolRecord>& RolloutPool::mutable_samples(NodeIndex v, ModelIndex m) {
  return pairs_[slot(v, m)];
}

Profile derive_pair_profile(std::span<const PoolRecord> samples, const ModelSpec& model) {
  if (samples.empty()) throw InputError("cannot derive a profile from an empty pool");
  std::size_t successes = 0;
  double tokens = 0.0;
  for (const PoolRecord& r : samples) {
    successes += r.success ? 1 : 0;
    tokens += static_cast<double>(r.tokens);
  }
  const auto n = static_cast<double>(samples.size());
  return make_profile(static_cast<double>(successes) / n, tokens / n, model);
}

ProfileTable derive_profile(const RolloutPool& pool, const ModelCatalog& catalog) {
  if (pool.model_count() != catalog.size()) {
    throw InputError("pool model count does not match the catalog");
  }
  ProfileTable table(pool.node_count(), pool.model_count());
  for (NodeIndex v = 0; v < pool.node_count(); ++v) {
    for (ModelIndex m = 0; m < pool.model_count(); ++m) {
      const auto samples = pool.samples(v, m);
      if (samples.empty()) {
        throw InputError("empty pool for node " + std::to_string(v) + ", model " + catalog.at(m).id);
      }
      table.set(v, m, derive_pair_profile(samples, catalog.at(m)));
    }
  }
  return table;
}

SamplingTable::SamplingTable(const RolloutPool& pool, const ModelCatalog& catalog)
    : models_(pool.model_count()) {
  pairs_.resize(static_cast<std::size_t>(pool.node_count()) * static_cast<std::size_t>(models_));
  for (ModelIndex m = 0; m < models_; ++m) {
    price_factor_.push_back(catalog.at(m).price_per_1k_tokens_usd * 1000.0);
  }
  for (NodeIndex v = 0; v < pool.node_count(); ++v) {
    for (ModelIndex m = 0; m < models_; ++m) {
      Pair& out = pairs_[static_cast<std::size_t>(v) * static_cast<std::size_t>(models_) +
                         static_cast<std::size_t>(m)];
      for (const PoolRecord& r : pool.samples(v, m)) {
        out.success.push_back(r.success ? 1 : 0);
        out.tokens.push_back(r.tokens);
        out.latency_ms.push_back(std::max<std::int64_t>(1, std::llround(r.latency_s * 1e3)));
      }
    }
  }
}

WorkflowInstance WorkflowInstance::parametric(WorkflowGraph graph, ModelCatalog catalog,
                                              ProfileTable profiles, MicroUsd budget, Millis deadline) {
  WorkflowInstance inst;
  inst.graph_ = std::make_shared<const WorkflowGraph>(std::move(graph));
  inst.catalog_ = std::make_shared<const ModelCatalog>(std::move(catalog));
  inst.mode_ = ProfileMode::kParametric;
  inst.profiles_ = std::make_shared<const ProfileTable>(std::move(profiles));
  inst.budget_ = budget;
  inst.deadline_ = deadline;
  return inst;
}

WorkflowInstance WorkflowInstance::empirical(WorkflowGraph graph, ModelCatalog catalog, RolloutPool pools,
                                             MicroUsd budget, Millis deadline) {
  if (pools.model_count() != catalog.size() || pools.node_count() != graph.node_count()) {
    throw InputError("pool dimensions do not match the graph and catalog");
  }
  WorkflowInstance inst;
  inst.graph_ = std::make_shared<const WorkflowGraph>(std::move(graph));
  inst.catalog_ = std::make_shared<const ModelCatalog>(std::move(catalog));
  inst.mode_ = ProfileMode::kEmpirical;
  inst.budget_ = budget;
  inst.deadline_ = deadline;
  inst.pools_ = std::make_shared<const RolloutPool>(std::move(pools));
  ProfileTable derived(inst.pools_->node_count(), inst.pools_->model_count());
  for (NodeIndex v = 0; v < derived.node_count(); ++v) {
    for (ModelIndex m = 0; m < derived.model_count(); ++m) {
      const auto samples = inst.pools_->samples(v, m);
      if (!samples.empty()) derived.set(v, m, derive_pair_profile(samples, inst.catalog_->at(m)));
    }
  }
  inst.profiles_ = std::make_shared<const ProfileTable>(std::move(derived));
  inst.sampling_ = std::make_shared<const SamplingTable>(*inst.pools_, *inst.catalog_);
  return inst;
}

const RolloutPool& WorkflowInstance::pools() const {
  if (!pools_) throw UnsupportedModeError("parametric instance has no rollout pools");
  return *pools_;
}

const SamplingTable& WorkflowInstance::sampling() const {
  if (!sampling_) throw UnsupportedModeError("parametric instance has no rollout pools");
  return *sampling_;
}

Millis WorkflowInstance::attempt_duration(NodeIndex v, ModelIndex m, int width) const {
  const Millis single = profiles_->at(v, m).latency;
  return batch_latency_ ? batch_latency_(single, width) : single;
}

WorkflowInstance WorkflowInstance::with_constraints(MicroUsd budget, Millis deadline) const {
  WorkflowInstance copy = *this;
  copy.budget_ = budget;
  copy.deadline_ = deadline;
  return copy;
}

WorkflowInstance WorkflowInstance::with_pools(RolloutPool pools) const {
  WorkflowInstance copy = empirical(*graph_, *catalog_, std::move(pools), budget_, deadline_);
  copy.batch_latency_ = batch_latency_;
  return copy;
}

WorkflowInstance WorkflowInstance::with_batch_latency(BatchLatencyModel model) const {
  WorkflowInstance copy = *this;
  copy.batch_latency_ = std::move(model);
  return copy;
}

WorkflowInstance WorkflowInstance::restrict_models(std::span<const std::string> ids) const {
  if (ids.empty()) throw InputError("model subset must not be empty");
  std::vector<ModelIndex> keep;
  std::vector<ModelSpec> specs;
  for (const std::string& id : ids) {
    const ModelIndex m = catalog_->index_of(id);
    if (std::find(keep.begin(), keep.end(), m) != keep.end()) {
      throw InputError("model '" + id + "' listed twice");
    }
    keep.push_back(m);
    specs.push_back(catalog_->at(m));
  }
  const int nodes = graph_->node_count();
  const int kept = static_cast<int>(keep.size());
  WorkflowInstance out;
  if (mode_ == ProfileMode::kEmpirical) {
    RolloutPool sub(nodes, kept);
    for (NodeIndex v = 0; v < nodes; ++v) {
      for (int j = 0; j < kept; ++j) {
        for (const PoolRecord& r : pools_->samples(v, keep[static_cast<std::size_t>(j)])) sub.add(v, j, r);
      }
    }
    out = empirical(*graph_, ModelCatalog(std::move(specs)), std::move(sub), budget_, deadline_);
  } else {
    ProfileTable sub(nodes, kept);
    for (NodeIndex v = 0; v < nodes; ++v) {
      for (int j = 0; j < kept; ++j) {
        if (const auto& p = profiles_->find(v, keep[static_cast<std::size_t>(j)])) sub.set(v, j, *p);
      }
    }
    out = parametric(*graph_, ModelCatalog(std::move(specs)), std::move(sub), budget_, deadline_);
  }
  out.batch_latency_ = batch_latency_;
  return out;
}

namespace {

std::string pair_label(NodeIndex v, const ModelCatalog& catalog, ModelIndex m) {
  return "(node " + std::to_string(v) + ", model " + catalog.at(m).id + ")";
}

void check_graph(const WorkflowGraph& g, std::vector<Violation>& out) {
  const int n = g.node_count();
  if (n == 0) out.push_back({"empty-graph", "workflow has no nodes", {}, {}});
  if (n > NodeSet::kMaxNodes) {
    out.push_back({"too-many-nodes",
                   "workflow has " + std::to_string(n) + " nodes; at most " +
                       std::to_string(NodeSet::kMaxNodes) + " are supported",
                   {}, {}});
  }
  std::set<std::pair<NodeIndex, NodeIndex>> seen;
  for (const Edge& e : g.edges()) {
    const std::string label = "edge (" + std::to_string(e.from) + ", " + std::to_string(e.to) + ")";
    if (e.from < 0 || e.from >= n || e.to < 0 || e.to >= n) {
      out.push_back({"edge-endpoint", label + " references a missing node", {}, {}});
      continue;
    }
    if (e.from == e.to) out.push_back({"self-loop", label + " is a self-loop", e.from, {}});
    if (!seen.insert({e.from, e.to}).second) {
      out.push_back({"duplicate-edge", label + " appears more than once", e.to, {}});
    }
  }
  if (!g.topological_order()) out.push_back({"cycle", "dependency graph contains a cycle", {}, {}});
}

void check_catalog(const ModelCatalog& catalog, std::vector<Violation>& out) {
  if (catalog.size() == 0) out.push_back({"empty-catalog", "model catalog is empty", {}, {}});
  std::set<std::string> ids;
  for (ModelIndex m = 0; m < catalog.size(); ++m) {
    const ModelSpec& spec = catalog.at(m);
    if (!ids.insert(spec.id).second) {
      out.push_back({"duplicate-model", "model id '" + spec.id + "' appears more than once", {}, m});
    }
    if (!(spec.tokens_per_second > 0)) {
      out.push_back({"non-positive-throughput", "model " + spec.id + " has non-positive throughput", {}, m});
    }
    if (!(spec.price_per_1k_tokens_usd >= 0)) {
      out.push_back({"negative-price", "model " + spec.id + " has a negative price", {}, m});
    }
  }
}

}  // namespace

std::vector<Violation> validate(const WorkflowInstance& instance) {
  std::vector<Violation> out;
  const WorkflowGraph& g = instance.graph();
  const ModelCatalog& catalog = instance.catalog();
  check_graph(g, out);
  check_catalog(catalog, out);

  if (instance.budget() < MicroUsd(0)) out.push_back({"negative-budget", "budget is negative", {}, {}});
  if (instance.deadline() < Millis(0)) out.push_back({"negative-deadline", "deadline is negative", {}, {}});

  const ProfileTable& profiles = instance.profiles();
  if (profiles.node_count() != g.node_count() || profiles.model_count() != catalog.size()) {
    out.push_back({"profile-shape", "profile table does not match graph and catalog", {}, {}});
    return out;
  }
  const bool empirical = instance.mode() == ProfileMode::kEmpirical;
  for (NodeIndex v = 0; v < g.node_count(); ++v) {
    for (ModelIndex m = 0; m < catalog.size(); ++m) {
      const std::string where = pair_label(v, catalog, m);
      if (empirical) {
        const auto samples = instance.pools().samples(v, m);
        if (samples.empty()) out.push_back({"empty-pool", "empty rollout pool at " + where, v, m});
        for (std::size_t i = 0; i < samples.size(); ++i) {
          if (samples[i].tokens <= 0) {
            out.push_back({"non-positive-tokens",
                           "record " + std::to_string(i) + " at " + where + " has non-positive tokens", v, m});
          }
          if (!(samples[i].latency_s > 0)) {
            out.push_back({"non-positive-latency",
                           "record " + std::to_string(i) + " at " + where + " has non-positive latency", v,
                           m});
          }
        }
      }
      const auto& profile = profiles.find(v, m);
      if (!profile) {
        if (!empirical) out.push_back({"missing-profile", "no profile for " + where, v, m});
        continue;
      }
      if (!(profile->success_prob >= 0.0 && profile->success_prob <= 1.0)) {
        std::ostringstream msg;
        msg << "success probability " << profile->success_prob << " outside [0,1] at " << where;
        out.push_back({"probability-range", msg.str(), v, m});
      }
      if (!(profile->mean_tokens > 0)) {
        out.push_back({"non-positive-tokens", "mean token count must be positive at " + where, v, m});
      }
      if (profile->latency <= Millis(0)) {
        out.push_back({"non-positive-latency", "derived latency must be positive at " + where, v, m});
      }
      if (profile->cost < MicroUsd(0)) {
        out.push_back({"negative-cost", "derived cost is negative at " + where, v, m});
      }
    }
  }
  return out;
}

}  // namespace flowplan
