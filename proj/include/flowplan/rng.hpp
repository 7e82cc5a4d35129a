#pragma once

#include <cstdint>
#include <initializer_list>
#include <limits>

namespace flowplan {

/// SplitMix64 finalizer. Bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

/// Top-level separation of random streams. Planning and execution never share
/// a stream, so planner-side changes cannot perturb realized outcomes.
enum class StreamDomain : std::uint64_t {
  kExecution = 1,
  kPlanning = 2,
  kPoolSynthesis = 3,
  kNoise = 4,
  kInstance = 5,
};

/// Counter-based generator: the i-th output is mix64(key + i * golden).
/// Streams are addressed by a key path (seed, domain, run, round, ...), so any
/// draw can be reproduced without replaying the draws before it.
class RngStream {
 public:
  using result_type = std::uint64_t;

  constexpr explicit RngStream(std::uint64_t key) : key_(key) {}

  static constexpr RngStream derive(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
    std::uint64_t h = mix64(seed ^ 0x6a09e667f3bcc909ULL);
    for (std::uint64_t word : path) {
      h = mix64(h ^ mix64(word + 0x9e3779b97f4a7c15ULL));
    }
    return RngStream(h);
  }

  static constexpr RngStream derive(std::uint64_t seed, StreamDomain domain,
                                    std::initializer_list<std::uint64_t> path) {
    RngStream s = derive(seed, {static_cast<std::uint64_t>(domain)});
    for (std::uint64_t word : path) s = s.child(word);
    return s;
  }

  /// Independent sub-stream addressed by `index`.
  constexpr RngStream child(std::uint64_t index) const {
    return RngStream(mix64(key_ ^ mix64(index + 0x3c6ef372fe94f82bULL)));
  }

  constexpr std::uint64_t key() const { return key_; }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  constexpr result_type operator()() {
    counter_ += 0x9e3779b97f4a7c15ULL;
    return mix64(key_ + counter_);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  constexpr double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  constexpr bool bernoulli(double p) { return uniform() < p; }

  /// Uniform integer in [0, n) by 32-bit multiply-shift; bias is at most n / 2^32.
  constexpr std::uint32_t below(std::uint32_t n) {
    if (!has_spare_) {
      spare_ = (*this)();
      has_spare_ = true;
      return static_cast<std::uint32_t>(((spare_ & 0xffffffffULL) * n) >> 32);
    }
    has_spare_ = false;
    return static_cast<std::uint32_t>(((spare_ >> 32) * n) >> 32);
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  std::uint64_t spare_ = 0;
  bool has_spare_ = false;
};

}  // namespace flowplan
