#include <cmath>
#include <cstdint>

#include "doctest.h"
#include "lotn/gradcheck.hpp"
#include "lotn/optim.hpp"

using namespace lotn;
using ag::Tape;
using ag::Tensor;

TEST_CASE("adam matches a hand-computed two-step trajectory") {
  ag::ParameterStore store;
  Tensor w = store.add("w", Tensor({2}, {1.0, -2.0}, true));
  ag::Adam adam;
  adam.lr = 0.1;
  // Hand reference for a constant gradient g: m_t = (1 - b1^t) g and
  // v_t = (1 - b2^t) g^2, so every bias-corrected step is lr * g / (|g| + eps).
  const double g[2] = {0.5, -3.0};
  double expected[2] = {1.0, -2.0};
  for (int step = 0; step < 2; ++step) {
    w.grad_mut()[0] = g[0];
    w.grad_mut()[1] = g[1];
    adam.step(store);
    for (int i = 0; i < 2; ++i) expected[i] -= 0.1 * g[i] / (std::abs(g[i]) + 1e-8);
    CHECK(w.values()[0] == doctest::Approx(expected[0]).epsilon(1e-12));
    CHECK(w.values()[1] == doctest::Approx(expected[1]).epsilon(1e-12));
    CHECK_FALSE(w.has_grad());
  }
}

TEST_CASE("adam with a changing gradient follows the moment recursion") {
  ag::ParameterStore store;
  Tensor w = store.add("w", Tensor({1}, {0.0}, true));
  ag::Adam adam;
  w.grad_mut()[0] = 1.0;
  adam.step(store);
  w.grad_mut()[0] = -1.0;
  adam.step(store);
  const double m = 0.9 * 0.1 - 0.1, v = 0.999 * 0.001 + 0.001;
  const double first = -0.001 * 1.0 / (1.0 + 1e-8);
  const double second = -0.001 * (m / (1 - 0.81)) / (std::sqrt(v / (1 - 0.999 * 0.999)) + 1e-8);
  CHECK(w.values()[0] == doctest::Approx(first + second).epsilon(1e-12));
}

TEST_CASE("adam refuses a trainable parameter without gradient and skips frozen ones") {
  Rng rng(1);
  ag::ParameterStore store;
  Tensor a = store.create("a", {2, 2}, rng, 0.1);
  Tensor b = store.create("b", {2}, rng, 0.1);
  ag::Adam adam;
  a.grad_mut();
  CHECK_THROWS_AS(adam.step(store), std::logic_error);

  const std::vector<double> before(b.values().begin(), b.values().end());
  b.set_requires_grad(false);
  a.grad_mut()[0] = 1.0;
  adam.step(store);
  CHECK(std::vector<double>(b.values().begin(), b.values().end()) == before);
}

TEST_CASE("parameter store rejects duplicates and restores snapshots") {
  Rng rng(1);
  ag::ParameterStore store;
  Tensor a = store.create("a", {3}, rng, 1.0);
  CHECK_THROWS(store.create("a", {3}, rng, 1.0));
  CHECK_THROWS(store.get("missing"));
  for (double v : a.values()) CHECK(std::abs(v) <= 1.0);
  CHECK(store.parameter_count() == 3);

  auto snap = store.snapshot();
  a.values_mut()[1] = 42.0;
  store.restore(snap);
  CHECK(a.values()[1] == snap.at("a")[1]);

  store.freeze();
  CHECK_FALSE(a.requires_grad());
}

TEST_CASE("gradient check passes on a quadratic and catches a wrong gradient") {
  Rng rng(3);
  ag::ParameterStore store;
  Tensor w = store.add("w", Tensor({3}, {0.3, -1.2, 2.0}, true));
  auto quadratic = [&](Tape& t) { return ag::sum(t, ag::mul(t, w, w)); };
  auto clean = ag::gradient_check(quadratic, store, 1e-5, SIZE_MAX, rng);
  CHECK(clean.coordinates == 3);
  CHECK(clean.max_relative_error < 1e-8);

  auto skewed = [&](Tape& t) { return ag::sum(t, ag::sigmoid(t, w)); };
  ag::testing::set_gradient_fault(true);
  auto faulty = ag::gradient_check(skewed, store, 1e-5, SIZE_MAX, rng);
  ag::testing::set_gradient_fault(false);
  CHECK(faulty.max_relative_error > 0.04);
}
