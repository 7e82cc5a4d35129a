#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "flowplan/rng.hpp"
#include "flowplan/workflow.hpp"

namespace fixtures {

using namespace flowplan;

/// Profile with hand-picked integer cost and latency, bypassing token pricing.
inline Profile raw_profile(double p, std::int64_t cost, std::int64_t latency) {
  Profile prof;
  prof.success_prob = p;
  prof.mean_tokens = 1.0;
  prof.cost = MicroUsd(cost);
  prof.latency = Millis(latency);
  return prof;
}

inline ModelCatalog catalog_of(int models) {
  std::vector<ModelSpec> specs;
  for (int m = 0; m < models; ++m) specs.push_back({"m" + std::to_string(m), 1.0, 1.0});
  return ModelCatalog(specs);
}

using ProfileFn = std::function<Profile(NodeIndex, ModelIndex)>;

inline WorkflowInstance parametric(int nodes, std::vector<Edge> edges, int models, const ProfileFn& fn,
                                   std::int64_t budget, std::int64_t deadline) {
  ProfileTable table(nodes, models);
  for (NodeIndex v = 0; v < nodes; ++v) {
    for (ModelIndex m = 0; m < models; ++m) table.set(v, m, fn(v, m));
  }
  return WorkflowInstance::parametric(WorkflowGraph(nodes, std::move(edges)), catalog_of(models), std::move(table),
                                      MicroUsd(budget), Millis(deadline));
}

/// One node, one model, the given p, cost and latency.
inline WorkflowInstance single_node(double p, std::int64_t cost, std::int64_t latency, std::int64_t budget,
                                    std::int64_t deadline) {
  return parametric(1, {}, 1, [&](NodeIndex, ModelIndex) { return raw_profile(p, cost, latency); }, budget,
                    deadline);
}

inline std::vector<Edge> chain_edges(int n) {
  std::vector<Edge> e;
  for (int v = 1; v < n; ++v) e.push_back({v - 1, v});
  return e;
}

inline std::vector<Edge> diamond_edges() { return {{0, 1}, {0, 2}, {1, 3}, {2, 3}}; }

/// Random DAG over `nodes` (edges only from lower to higher index).
inline std::vector<Edge> random_dag(int nodes, double p_edge, RngStream& rng) {
  std::vector<Edge> e;
  for (int u = 0; u < nodes; ++u) {
    for (int v = u + 1; v < nodes; ++v) {
      if (rng.uniform() < p_edge) e.push_back({u, v});
    }
  }
  return e;
}

/// Small parametric instance for exhaustive checks: 2-5 nodes, two models,
/// integer costs in [1, 3] and latencies in [1, 3], probabilities on a 1/8
/// grid, budget and deadline a few rounds deep.
inline WorkflowInstance random_small(std::uint64_t seed, int max_nodes = 5) {
  RngStream rng = RngStream::derive(seed, {0xf1e7});
  const int nodes = 2 + static_cast<int>(rng.below(static_cast<std::uint32_t>(max_nodes - 1)));
  std::vector<Edge> edges = random_dag(nodes, 0.4, rng);
  std::vector<Profile> profs;
  for (int i = 0; i < nodes * 2; ++i) {
    const double p = static_cast<double>(1 + rng.below(7)) / 8.0;
    profs.push_back(raw_profile(p, 1 + rng.below(3), 1 + rng.below(3)));
  }
  const std::int64_t budget = nodes + static_cast<std::int64_t>(rng.below(static_cast<std::uint32_t>(2 * nodes + 1)));
  const std::int64_t deadline = 2 + static_cast<std::int64_t>(rng.below(static_cast<std::uint32_t>(2 * nodes)));
  return parametric(
      nodes, std::move(edges), 2,
      [&](NodeIndex v, ModelIndex m) { return profs[static_cast<std::size_t>(v * 2 + m)]; }, budget, deadline);
}

/// Empirical instance whose pools realize p exactly in expectation with
/// degenerate tokens and latency.
inline WorkflowInstance bernoulli_pools(int nodes, std::vector<Edge> edges, const std::vector<double>& p, int pool_size,
                                        std::int64_t tokens, double latency_s, std::int64_t budget,
                                        std::int64_t deadline, std::uint64_t seed) {
  RolloutPool pool(nodes, 1);
  RngStream rng = RngStream::derive(seed, {0xb00});
  for (NodeIndex v = 0; v < nodes; ++v) {
    for (int i = 0; i < pool_size; ++i) pool.add(v, 0, {rng.bernoulli(p[static_cast<std::size_t>(v)]), tokens, latency_s});
  }
  return WorkflowInstance::empirical(WorkflowGraph(nodes, std::move(edges)), ModelCatalog({{"m0", 1.0, 100.0}}),
                                     std::move(pool), MicroUsd(budget), Millis(deadline));
}

/// 3-sigma binomial band check for a frequency.
inline bool within_3sigma(double freq, double p, double n) {
  return std::abs(freq - p) <= 3.0 * std::sqrt(std::max(p * (1 - p), 1e-12) / n) + 1e-12;
}

}  // namespace fixtures
