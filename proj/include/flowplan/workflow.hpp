#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flowplan/node_set.hpp"
#include "flowplan/units.hpp"

namespace flowplan {

/// `to` may only be attempted after `from` has completed.
struct Edge {
  NodeIndex from = 0;
  NodeIndex to = 0;

  friend bool operator==(const Edge&, const Edge&) = default;
};

class WorkflowGraph {
 public:
  WorkflowGraph() = default;
  WorkflowGraph(int node_count, std::vector<Edge> edges, std::vector<std::string> names = {});

  int node_count() const { return node_count_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::string& name(NodeIndex v) const { return names_.at(static_cast<std::size_t>(v)); }
  NodeSet all() const { return NodeSet::all_of(node_count_); }

  /// Predecessor mask. Edges with out-of-range endpoints are ignored here and
  /// reported by validate().
  NodeSet predecessors(NodeIndex v) const { return preds_[static_cast<std::size_t>(v)]; }

  /// Kahn order, or nullopt when the graph has a cycle.
  std::optional<std::vector<NodeIndex>> topological_order() const;

 private:
  int node_count_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::string> names_;
  std::vector<NodeSet> preds_;
};

/// Nodes outside `completed` whose predecessors are all in `completed`.
/// Throws InputError when `completed` names a node the graph does not have.
NodeSet ready_set(const WorkflowGraph& graph, NodeSet completed);

struct ModelSpec {
  std::string id;
  double price_per_1k_tokens_usd = 0.0;
  double tokens_per_second = 1.0;
};

class ModelCatalog {
 public:
  ModelCatalog() = default;
  explicit ModelCatalog(std::vector<ModelSpec> models);

  int size() const { return static_cast<int>(models_.size()); }
  const ModelSpec& at(ModelIndex m) const { return models_.at(static_cast<std::size_t>(m)); }
  const std::vector<ModelSpec>& models() const { return models_; }
  std::optional<ModelIndex> find(const std::string& id) const;
  ModelIndex index_of(const std::string& id) const;

 private:
  std::vector<ModelSpec> models_;
};

/// Per-(node, model) statistics with the derived per-attempt cost and latency.
struct Profile {
  double success_prob = 0.0;
  double mean_tokens = 1.0;
  MicroUsd cost;
  Millis latency{1};
};

/// Derives cost = tokens * price / 1000 and latency = tokens / throughput.
/// Latency is clamped to at least 1 ms so every attempt takes time.
Profile make_profile(double success_prob, double mean_tokens, const ModelSpec& model);

class ProfileTable {
 public:
  ProfileTable() = default;
  ProfileTable(int node_count, int model_count);

  int node_count() const { return nodes_; }
  int model_count() const { return models_; }

  void set(NodeIndex v, ModelIndex m, Profile profile);
  const std::optional<Profile>& find(NodeIndex v, ModelIndex m) const;
  /// Throws InputError for a missing entry.
  const Profile& at(NodeIndex v, ModelIndex m) const;

 private:
  std::size_t slot(NodeIndex v, ModelIndex m) const;

  int nodes_ = 0;
  int models_ = 0;
  std::vector<std::optional<Profile>> entries_;
};

struct PoolRecord {
  bool success = false;
  std::int64_t tokens = 1;
  double latency_s = 1.0;

  friend bool operator==(const PoolRecord&, const PoolRecord&) = default;
};

/// Recorded samples per (node, model).
class RolloutPool {
 public:
  RolloutPool() = default;
  RolloutPool(int node_count, int model_count);

  int node_count() const { return nodes_; }
  int model_count() const { return models_; }

  void add(NodeIndex v, ModelIndex m, PoolRecord record);
  std::span<const PoolRecord> samples(NodeIndex v, ModelIndex m) const;
  std::vector<PoolRecord>& mutable_samples(NodeIndex v, ModelIndex m);

  friend bool operator==(const RolloutPool&, const RolloutPool&) = default;

 private:
  std::size_t slot(NodeIndex v, ModelIndex m) const;

  int nodes_ = 0;
  int models_ = 0;
  std::vector<std::vector<PoolRecord>> pairs_;
};

/// Raw success fraction and mean token count of one pair's samples.
Profile derive_pair_profile(std::span<const PoolRecord> samples, const ModelSpec& model);

/// Profiles for every (node, model) pair. Throws InputError on an empty pair.
ProfileTable derive_profile(const RolloutPool& pool, const ModelCatalog& catalog);

/// Pool samples with costs and latencies pre-converted to integer units.
/// Stored structure-of-arrays per pair for the simulation hot loop.
class SamplingTable {
 public:
  struct Pair {
    std::vector<std::uint8_t> success;
    std::vector<std::int64_t> tokens;
    std::vector<std::int64_t> latency_ms;
  };

  SamplingTable() = default;
  SamplingTable(const RolloutPool& pool, const ModelCatalog& catalog);

  const Pair& pair(NodeIndex v, ModelIndex m) const {
    return pairs_[static_cast<std::size_t>(v) * static_cast<std::size_t>(models_) +
                  static_cast<std::size_t>(m)];
  }
  /// Micro-dollars per output token of model m.
  double price_factor(ModelIndex m) const { return price_factor_[static_cast<std::size_t>(m)]; }

 private:
  int models_ = 0;
  std::vector<Pair> pairs_;
  std::vector<double> price_factor_;
};

enum class ProfileMode { kParametric, kEmpirical };

/// Optional duration model for launching `width` parallel samples whose single
/// latency is `single`. Absent means ideal parallelism.
using BatchLatencyModel = std::function<Millis(Millis single, int width)>;

/// The execution instance: graph, models, statistics, budget and deadline.
/// Immutable once built; copies share the heavy parts.
class WorkflowInstance {
 public:
  WorkflowInstance() = default;

  static WorkflowInstance parametric(WorkflowGraph graph, ModelCatalog catalog, ProfileTable profiles,
                                     MicroUsd budget, Millis deadline);
  /// Pairs with empty pools are left without a profile; validate() reports them.
  static WorkflowInstance empirical(WorkflowGraph graph, ModelCatalog catalog, RolloutPool pools,
                                    MicroUsd budget, Millis deadline);

  const WorkflowGraph& graph() const { return *graph_; }
  const ModelCatalog& catalog() const { return *catalog_; }
  ProfileMode mode() const { return mode_; }
  const ProfileTable& profiles() const { return *profiles_; }
  /// Throws UnsupportedModeError in parametric mode.
  const RolloutPool& pools() const;
  const SamplingTable& sampling() const;
  MicroUsd budget() const { return budget_; }
  Millis deadline() const { return deadline_; }
  int node_count() const { return graph_->node_count(); }
  int model_count() const { return catalog_->size(); }

  /// Estimated duration of `width` parallel attempts of (v, m).
  Millis attempt_duration(NodeIndex v, ModelIndex m, int width) const;
  bool has_batch_latency() const { return static_cast<bool>(batch_latency_); }

  WorkflowInstance with_constraints(MicroUsd budget, Millis deadline) const;
  /// Same graph and catalog, different empirical pools (planner-visible copy).
  WorkflowInstance with_pools(RolloutPool pools) const;
  WorkflowInstance with_batch_latency(BatchLatencyModel model) const;
  /// Keeps only the listed models, in the given order.
  WorkflowInstance restrict_models(std::span<const std::string> ids) const;

 private:
  std::shared_ptr<const WorkflowGraph> graph_ = std::make_shared<WorkflowGraph>();
  std::shared_ptr<const ModelCatalog> catalog_ = std::make_shared<ModelCatalog>();
  ProfileMode mode_ = ProfileMode::kParametric;
  std::shared_ptr<const ProfileTable> profiles_ = std::make_shared<ProfileTable>();
  std::shared_ptr<const RolloutPool> pools_;
  std::shared_ptr<const SamplingTable> sampling_;
  MicroUsd budget_;
  Millis deadline_;
  BatchLatencyModel batch_latency_;
};

struct Violation {
  std::string kind;
  std::string message;
  std::optional<NodeIndex> node;
  std::optional<ModelIndex> model;
};

/// Every invariant violation in the instance; empty means valid.
std::vector<Violation> validate(const WorkflowInstance& instance);

}  // namespace flowplan
