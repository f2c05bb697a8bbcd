#include "lotn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <spdlog/spdlog.h>

namespace lotn::ag {

GradCheckResult gradient_check(const LossFn& loss_fn, ParameterStore& store, double h,
                               std::size_t samples_per_parameter, Rng& rng, double floor) {
  store.zero_grad();
  {
    Tape tape;
    tape.backward(loss_fn(tape));
  }
  auto evaluate = [&]() {
    Tape tape;
    return loss_fn(tape).item();
  };

  GradCheckResult result;
  for (const auto& entry : store.entries()) {
    Tensor param = entry.param;
    if (!param.requires_grad()) continue;
    std::vector<double> analytic(param.size(), 0.0);
    if (param.has_grad()) std::copy(param.grad().begin(), param.grad().end(), analytic.begin());

    std::vector<std::size_t> coords(param.size());
    std::iota(coords.begin(), coords.end(), 0);
    if (coords.size() > samples_per_parameter) {
      rng.shuffle(coords);
      coords.resize(samples_per_parameter);
      std::sort(coords.begin(), coords.end());
    }
    for (auto i : coords) {
      auto values = param.values_mut();
      const double original = values[i];
      values[i] = original + h;
      const double plus = evaluate();
      values[i] = original - h;
      const double minus = evaluate();
      values[i] = original;
      const double numeric = (plus - minus) / (2.0 * h);
      const double scale = std::max(std::abs(analytic[i]), std::abs(numeric));
      if (scale < floor) ++result.below_floor;
      const double denom = std::max(scale, floor);
      const double err = std::abs(analytic[i] - numeric) / denom;
      spdlog::debug("gradcheck {}[{}] analytic {:.6e} numeric {:.6e} error {:.3e}", entry.name, i, analytic[i],
                    numeric, err);
      ++result.coordinates;
      if (result.coordinates == 1 || err > result.max_relative_error) {
        result.max_relative_error = err;
        result.worst_parameter = entry.name;
        result.worst_index = i;
        result.worst_analytic = analytic[i];
        result.worst_numeric = numeric;
      }
    }
  }
  store.zero_grad();
  return result;
}

}  // namespace lotn::ag
