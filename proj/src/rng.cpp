#include "semgen/rng.hpp"

#include <cassert>
#include <cmath>

namespace semgen {

double Rng::normal() {
  // Box-Muller, discarding the second value so the stream stays stateless
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  constexpr double two_pi = 6.283185307179586476925286766559;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
}

int Rng::categorical(std::span<const double> weights) {
  assert(!weights.empty());
  double total = 0.0;
  for (double w : weights) total += w;
  double r = uniform() * total;
  for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
    r -= weights[i];
    if (r < 0.0) return static_cast<int>(i);
  }
  return static_cast<int>(weights.size() - 1);
}

void Rng::shuffle(std::vector<int>& items) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = uniform_int(i);
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace semgen
