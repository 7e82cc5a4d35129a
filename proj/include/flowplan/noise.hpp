#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "flowplan/rng.hpp"
#include "flowplan/workflow.hpp"

namespace flowplan {

enum class NoiseKind { kTokenLength, kSuccessRate };

struct NoiseSpec {
  NoiseKind kind = NoiseKind::kTokenLength;
  double sigma = 0.0;
  double eps = 1e-3;
  std::uint64_t seed = 0;

  /// Throws InputError unless sigma >= 0 and 0 < eps < 0.5.
  void validate() const;
};

struct TokenDraw {
  NodeIndex node = 0;
  ModelIndex model = 0;
  std::size_t index = 0;
  double z = 0.0;
  /// c / c_max + sigma * z, before clipping.
  double shifted = 0.0;
  std::int64_t tokens = 0;
};

struct RateDraw {
  NodeIndex node = 0;
  ModelIndex model = 0;
  double z = 0.0;
  double p = 0.0;
  double p_tilde = 0.0;
  int successes_before = 0;
  int target = 0;
  std::vector<std::size_t> flipped;
};

/// Optional record of every Gaussian draw and flip, for inspection and tests.
struct NoiseLog {
  std::vector<TokenDraw> tokens;
  std::vector<RateDraw> rates;
};

double clip(double x, double lo, double hi);

/// max(1, round(c_max * clip(tokens / c_max + sigma * z, eps, 1 - eps))).
std::int64_t perturb_token_count(std::int64_t tokens, std::int64_t c_max, double z, double sigma, double eps);

/// clip(p + sigma * z, eps, 1 - eps).
double perturb_rate(double p, double z, double sigma, double eps);

/// Flips the fewest labels so exactly `target` records succeed, choosing
/// which ones uniformly among records of the needed polarity. Returns the
/// flipped indices in the order drawn.
std::vector<std::size_t> flip_to_count(std::vector<PoolRecord>& records, int target, RngStream& rng);

/// Each sample gets its own z; c_max is the pair's largest token count.
/// Success flags and latencies are kept. Empty pairs are left empty.
RolloutPool perturb_token_lengths(const RolloutPool& pool, const NoiseSpec& spec, NoiseLog* log = nullptr);

/// One z per pair; labels are flipped until round(p_tilde * n) succeed.
RolloutPool perturb_success_rate(const RolloutPool& pool, const NoiseSpec& spec, NoiseLog* log = nullptr);

/// Dispatches on spec.kind.
RolloutPool perturb(const RolloutPool& pool, const NoiseSpec& spec, NoiseLog* log = nullptr);

}  // namespace flowplan
