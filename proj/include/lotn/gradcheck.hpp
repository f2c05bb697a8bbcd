#pragma once

#include <cstddef>
#include <functional>
#include <string>

#include "lotn/ops.hpp"
#include "lotn/optim.hpp"

namespace lotn::ag {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coordinates = 0;
  std::size_t below_floor = 0;  // coordinates judged against the denominator floor
};

// Builds the scalar loss on the given tape. Must be deterministic.
using LossFn = std::function<Tensor(Tape&)>;

inline constexpr double kGradCheckFloor = 1e-5;

/// Compares reverse-mode gradients with central differences
/// (f(x+h) - f(x-h)) / 2h on up to `samples_per_parameter` coordinates of each
/// trainable parameter. Relative error is |a - n| / max(|a|, |n|, floor); below
/// the floor the difference quotient is dominated by rounding in f.
/// Parameter values are restored exactly afterwards.
GradCheckResult gradient_check(const LossFn& loss_fn, ParameterStore& store, double h,
                               std::size_t samples_per_parameter, Rng& rng, double floor = kGradCheckFloor);

}  // namespace lotn::ag
