#pragma once

#include <compare>
#include <cstdint>

namespace flowplan {

/// Integer quantity tagged with its unit. Money and time are kept as exact
/// integers so that (completed, budget, time) states can be memoized exactly.
template <class Tag>
struct Quantity {
  std::int64_t value = 0;

  constexpr Quantity() = default;
  constexpr explicit Quantity(std::int64_t v) : value(v) {}

  friend constexpr auto operator<=>(Quantity, Quantity) = default;

  constexpr Quantity& operator+=(Quantity o) {
    value += o.value;
    return *this;
  }
  constexpr Quantity& operator-=(Quantity o) {
    value -= o.value;
    return *this;
  }
  friend constexpr Quantity operator+(Quantity a, Quantity b) { return Quantity(a.value + b.value); }
  friend constexpr Quantity operator-(Quantity a, Quantity b) { return Quantity(a.value - b.value); }
  friend constexpr Quantity operator*(Quantity a, std::int64_t k) { return Quantity(a.value * k); }
  friend constexpr Quantity operator*(std::int64_t k, Quantity a) { return Quantity(a.value * k); }
};

struct MicroUsdTag {};
struct MillisTag {};

using MicroUsd = Quantity<MicroUsdTag>;
using Millis = Quantity<MillisTag>;

MicroUsd usd_to_micro(double usd);
double micro_to_usd(MicroUsd amount);
Millis seconds_to_millis(double seconds);
double millis_to_seconds(Millis t);

/// Cost of `tokens` output tokens at `price_per_1k_usd`, rounded to the nearest micro-dollar.
MicroUsd token_cost(double tokens, double price_per_1k_usd);

}  // namespace flowplan
