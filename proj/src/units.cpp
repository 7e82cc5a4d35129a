#include "flowplan/units.hpp"

#include <cmath>

namespace flowplan {

MicroUsd usd_to_micro(double usd) { return MicroUsd(std::llround(usd * 1e6)); }

double micro_to_usd(MicroUsd amount) { return static_cast<double>(amount.value) / 1e6; }

Millis seconds_to_millis(double seconds) { return Millis(std::llround(seconds * 1e3)); }

double millis_to_seconds(Millis t) { return static_cast<double>(t.value) / 1e3; }

MicroUsd token_cost(double tokens, double price_per_1k_usd) {
  // tokens * price / 1000 USD, expressed in micro-dollars.
  return MicroUsd(std::llround(tokens * price_per_1k_usd * 1000.0));
}

}  // namespace flowplan
