#include "flowplan/noise.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "flowplan/errors.hpp"

namespace flowplan {

namespace {

RngStream pair_stream(const NoiseSpec& spec, NodeIndex v, ModelIndex m) {
  return RngStream::derive(spec.seed, StreamDomain::kNoise,
                           {static_cast<std::uint64_t>(spec.kind), static_cast<std::uint64_t>(v),
                            static_cast<std::uint64_t>(m)});
}

}  // namespace

void NoiseSpec::validate() const {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw InputError("sigma must be a non-negative number");
  if (!(eps > 0.0 && eps < 0.5)) throw InputError("eps must lie in (0, 0.5)");
}

double clip(double x, double lo, double hi) { return std::min(hi, std::max(lo, x)); }

std::int64_t perturb_token_count(std::int64_t tokens, std::int64_t c_max, double z, double sigma, double eps) {
  if (c_max <= 0) throw InputError("c_max must be positive");
  const double cmax = static_cast<double>(c_max);
  const double normalized = clip(static_cast<double>(tokens) / cmax + sigma * z, eps, 1.0 - eps);
  return std::max<std::int64_t>(1, std::llround(cmax * normalized));
}

double perturb_rate(double p, double z, double sigma, double eps) { return clip(p + sigma * z, eps, 1.0 - eps); }

std::vector<std::size_t> flip_to_count(std::vector<PoolRecord>& records, int target, RngStream& rng) {
  if (target < 0 || static_cast<std::size_t>(target) > records.size()) throw InputError("target count out of range");
  int current = 0;
  for (const PoolRecord& r : records) current += r.success ? 1 : 0;
  if (current == target) return {};
  const bool to_success = target > current;
  std::vector<std::size_t> pick;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].success != to_success) pick.push_back(i);
  }
  const auto need = static_cast<std::size_t>(std::abs(target - current));
  // Partial Fisher-Yates: the first `need` slots become a uniform subset.
  for (std::size_t i = 0; i < need; ++i) {
    const std::size_t j = i + rng.below(static_cast<std::uint32_t>(pick.size() - i));
    std::swap(pick[i], pick[j]);
    records[pick[i]].success = to_success;
  }
  pick.resize(need);
  return pick;
}

RolloutPool perturb_token_lengths(const RolloutPool& pool, const NoiseSpec& spec, NoiseLog* log) {
  spec.validate();
  RolloutPool out = pool;
  for (NodeIndex v = 0; v < pool.node_count(); ++v) {
    for (ModelIndex m = 0; m < pool.model_count(); ++m) {
      std::vector<PoolRecord>& records = out.mutable_samples(v, m);
      if (records.empty()) continue;
      std::int64_t c_max = 0;
      for (const PoolRecord& r : records) c_max = std::max(c_max, r.tokens);
      RngStream rng = pair_stream(spec, v, m);
      std::normal_distribution<double> gauss(0.0, 1.0);
      for (std::size_t i = 0; i < records.size(); ++i) {
        const double z = gauss(rng);
        const std::int64_t before = records[i].tokens;
        records[i].tokens = perturb_token_count(before, c_max, z, spec.sigma, spec.eps);
        if (log != nullptr) {
          log->tokens.push_back({v, m, i, z,
                                 static_cast<double>(before) / static_cast<double>(c_max) + spec.sigma * z,
                                 records[i].tokens});
        }
      }
    }
  }
  return out;
}

RolloutPool perturb_success_rate(const RolloutPool& pool, const NoiseSpec& spec, NoiseLog* log) {
  spec.validate();
  RolloutPool out = pool;
  for (NodeIndex v = 0; v < pool.node_count(); ++v) {
    for (ModelIndex m = 0; m < pool.model_count(); ++m) {
      std::vector<PoolRecord>& records = out.mutable_samples(v, m);
      if (records.empty()) continue;
      int successes = 0;
      for (const PoolRecord& r : records) successes += r.success ? 1 : 0;
      const double n = static_cast<double>(records.size());
      const double p = successes / n;
      RngStream rng = pair_stream(spec, v, m);
      std::normal_distribution<double> gauss(0.0, 1.0);
      const double z = gauss(rng);
      const double p_tilde = perturb_rate(p, z, spec.sigma, spec.eps);
      const int target = static_cast<int>(std::lround(p_tilde * n));
      std::vector<std::size_t> flipped = flip_to_count(records, target, rng);
      if (log != nullptr) log->rates.push_back({v, m, z, p, p_tilde, successes, target, std::move(flipped)});
    }
  }
  return out;
}

RolloutPool perturb(const RolloutPool& pool, const NoiseSpec& spec, NoiseLog* log) {
  return spec.kind == NoiseKind::kTokenLength ? perturb_token_lengths(pool, spec, log)
                                              : perturb_success_rate(pool, spec, log);
}

}  // namespace flowplan
