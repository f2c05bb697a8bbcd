#include "lotn/rng.hpp"

#include <limits>

namespace lotn {

std::size_t Rng::index(std::size_t n) {
  // Rejection sampling keeps the draw unbiased.
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return static_cast<std::size_t>(x % bound);
}

void Rng::fill_uniform(std::span<double> out, double lo, double hi) {
  for (auto& v : out) v = uniform(lo, hi);
}

}  // namespace lotn
