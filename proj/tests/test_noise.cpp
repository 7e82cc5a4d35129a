#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "fixtures.hpp"
#include "flowplan/errors.hpp"
#include "flowplan/noise.hpp"
#include "flowplan/planner.hpp"

using namespace flowplan;
using namespace fixtures;

namespace {

RolloutPool token_pool(int n, std::uint64_t seed) {
  RolloutPool pool(1, 1);
  RngStream rng = RngStream::derive(seed, {0x70});
  for (int i = 0; i < n; ++i) pool.add(0, 0, {rng.bernoulli(0.5), 100 + static_cast<std::int64_t>(rng.below(900)), 1.0});
  return pool;
}

RolloutPool labels(int n, int successes) {
  RolloutPool pool(1, 1);
  for (int i = 0; i < n; ++i) pool.add(0, 0, {i < successes, 10 + i, 1.0});
  return pool;
}

std::vector<PoolRecord> copy_of(const RolloutPool& pool, NodeIndex v, ModelIndex m) {
  const auto s = pool.samples(v, m);
  return {s.begin(), s.end()};
}

int count_success(std::span<const PoolRecord> rs) {
  return static_cast<int>(std::count_if(rs.begin(), rs.end(), [](const PoolRecord& r) { return r.success; }));
}

}  // namespace

TEST_CASE("spec validation") {
  CHECK_THROWS_AS((NoiseSpec{NoiseKind::kTokenLength, -0.1, 1e-3, 0}.validate()), InputError);
  CHECK_THROWS_AS((NoiseSpec{NoiseKind::kTokenLength, 0.1, 0.0, 0}.validate()), InputError);
  CHECK_THROWS_AS((NoiseSpec{NoiseKind::kTokenLength, 0.1, 0.5, 0}.validate()), InputError);
  CHECK_NOTHROW((NoiseSpec{NoiseKind::kSuccessRate, 0.0, 1e-3, 0}.validate()));
}

TEST_CASE("token formula examples") {
  CHECK(perturb_token_count(1000, 1000, 0.0, 0.0, 1e-3) == 999);
  CHECK(perturb_token_count(900, 1000, 1.0, 0.3, 1e-3) == 999);
  CHECK(perturb_token_count(500, 1000, -1.0, 0.2, 1e-3) == 300);
  CHECK(perturb_token_count(1, 10, -5.0, 1.0, 1e-3) == 1);  // floor at one token
  CHECK(perturb_rate(0.5, 1.0, 0.25, 1e-3) == 0.75);
  CHECK(perturb_rate(0.9, 3.0, 0.3, 1e-3) == 0.999);
  CHECK(perturb_rate(0.1, -3.0, 0.3, 1e-3) == 0.001);
}

TEST_CASE("sigma zero is the identity on interior samples") {
  const RolloutPool pool = token_pool(512, 1);
  NoiseLog log;
  const RolloutPool out = perturb_token_lengths(pool, {NoiseKind::kTokenLength, 0.0, 1e-3, 9}, &log);
  const auto& before = pool.samples(0, 0);
  const auto& after = out.samples(0, 0);
  std::int64_t cmax = 0;
  for (const auto& r : before) cmax = std::max(cmax, r.tokens);
  for (std::size_t i = 0; i < before.size(); ++i) {
    const double x = static_cast<double>(before[i].tokens);
    if (x > 1e-3 * cmax && x < (1 - 1e-3) * cmax) CHECK(after[i].tokens == before[i].tokens);
    if (before[i].tokens == cmax) CHECK(after[i].tokens == std::llround(0.999 * cmax));
    CHECK(after[i].success == before[i].success);
    CHECK(after[i].latency_s == before[i].latency_s);
  }
}

TEST_CASE("large token noise stays in range and z is standard normal") {
  const RolloutPool pool = token_pool(512, 2);
  double cmax = 0;
  for (const auto& r : pool.samples(0, 0)) cmax = std::max(cmax, static_cast<double>(r.tokens));
  double sum = 0;
  double sq = 0;
  int n = 0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    NoiseLog log;
    const RolloutPool out = perturb_token_lengths(pool, {NoiseKind::kTokenLength, 4.0, 1e-3, seed}, &log);
    for (const auto& r : out.samples(0, 0)) {
      CHECK(r.tokens >= std::llround(1e-3 * cmax));
      CHECK(r.tokens <= std::llround((1 - 1e-3) * cmax));
    }
    for (const TokenDraw& d : log.tokens) {
      const double dev = (d.shifted - pool.samples(0, 0)[d.index].tokens / cmax) / 4.0;
      CHECK(std::abs(dev - d.z) <= 1e-9);
      sum += d.z;
      sq += d.z * d.z;
      ++n;
    }
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  CHECK(std::abs(mean) <= 3.0 / std::sqrt(n));
  CHECK(std::abs(var - 1.0) <= 3.0 * std::sqrt(2.0 / n));
}

TEST_CASE("success-rate flip examples") {
  const RolloutPool pool = labels(8, 4);
  std::vector<PoolRecord> rs = copy_of(pool, 0, 0);
  RngStream rng(5);
  const auto flipped = flip_to_count(rs, 6, rng);
  CHECK(flipped.size() == 2);
  CHECK(count_success(rs) == 6);
  for (std::size_t i : flipped) CHECK_FALSE(pool.samples(0, 0)[i].success);

  std::vector<PoolRecord> same = copy_of(pool, 0, 0);
  CHECK(flip_to_count(same, 4, rng).empty());
  CHECK(same == copy_of(pool, 0, 0));

  std::vector<PoolRecord> down = copy_of(pool, 0, 0);
  CHECK(flip_to_count(down, 1, rng).size() == 3);
  CHECK(count_success(down) == 1);

  const RolloutPool zero = perturb_success_rate(pool, {NoiseKind::kSuccessRate, 0.0, 1e-3, 1});
  CHECK(zero == pool);
}

TEST_CASE("success-rate noise: exact target, minimal flips, clipped normal") {
  RolloutPool pool(50, 40);
  RngStream rng = RngStream::derive(3, {0x71});
  for (NodeIndex v = 0; v < 50; ++v) {
    for (ModelIndex m = 0; m < 40; ++m) {
      for (int i = 0; i < 64; ++i) pool.add(v, m, {i < 32, 10, 1.0});
    }
  }
  NoiseLog log;
  const RolloutPool out = perturb_success_rate(pool, {NoiseKind::kSuccessRate, 0.3, 1e-3, 7}, &log);
  REQUIRE(log.rates.size() == 2000);
  int clipped_high = 0;
  double sum = 0;
  double sq = 0;
  for (const RateDraw& d : log.rates) {
    const auto& after = out.samples(d.node, d.model);
    CHECK(d.p == 0.5);
    CHECK(d.p_tilde == perturb_rate(0.5, d.z, 0.3, 1e-3));
    CHECK(d.p_tilde >= 1e-3);
    CHECK(d.p_tilde <= 1 - 1e-3);
    CHECK(d.target == static_cast<int>(std::lround(d.p_tilde * 64)));
    CHECK(count_success(after) == d.target);
    CHECK(static_cast<int>(d.flipped.size()) == std::abs(d.target - 32));
    const std::set<std::size_t> unique(d.flipped.begin(), d.flipped.end());
    CHECK(unique.size() == d.flipped.size());
    int changed = 0;
    for (std::size_t i = 0; i < after.size(); ++i) changed += after[i].success != pool.samples(d.node, d.model)[i].success;
    CHECK(changed == static_cast<int>(d.flipped.size()));
    clipped_high += d.p_tilde == 1 - 1e-3 ? 1 : 0;
    sum += d.z;
    sq += d.z * d.z;
  }
  const double n = 2000;
  CHECK(std::abs(sum / n) <= 3.0 / std::sqrt(n));
  CHECK(std::abs(sq / n - 1.0) <= 3.0 * std::sqrt(2.0 / n));
  // Pr(0.5 + 0.3 z >= 0.999) = Pr(z >= 1.6633) = 0.0481
  CHECK(within_3sigma(clipped_high / n, 0.0481, n));
}

TEST_CASE("perturbation is deterministic and leaves the input alone") {
  const RolloutPool pool = token_pool(64, 4);
  const RolloutPool copy = pool;
  const NoiseSpec spec{NoiseKind::kTokenLength, 0.5, 1e-3, 11};
  CHECK(perturb(pool, spec) == perturb(pool, spec));
  CHECK(pool == copy);
  CHECK_FALSE(perturb(pool, spec) == perturb(pool, {NoiseKind::kTokenLength, 0.5, 1e-3, 12}));
}

TEST_CASE("planner-side noise does not touch execution draws") {
  const auto clean = bernoulli_pools(3, chain_edges(3), {0.4, 0.6, 0.5}, 64, 100, 1.0, 2000000, 20000, 5);
  const RolloutPool noisy_pool = perturb(clean.pools(), {NoiseKind::kSuccessRate, 0.3, 1e-3, 2});
  const auto noisy = clean.with_pools(noisy_pool);
  REQUIRE_FALSE(noisy.pools() == clean.pools());
  PlannerConfig cfg;
  cfg.widths = {1, 2};
  cfg.sims_per_pair = 16;
  for (std::uint64_t run = 0; run < 20; ++run) {
    const McppRun r = run_mcpp(clean, noisy, cfg, {9, run, true});
    // Replaying the chosen actions without any planner reproduces every outcome.
    std::size_t step = 0;
    CallableRule replay([&](const ExecState&, int) -> std::optional<AllocationAction> {
      if (step == r.run.trace.size()) return std::nullopt;
      return r.run.trace[step++].action;
    });
    const RunResult again = run_policy(clean, replay, {9, run, true});
    REQUIRE(again.trace.size() == r.run.trace.size());
    for (std::size_t i = 0; i < again.trace.size(); ++i) CHECK(again.trace[i].outcome == r.run.trace[i].outcome);
  }
}
