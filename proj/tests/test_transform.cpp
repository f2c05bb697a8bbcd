#include <numeric>
#include <sstream>

#include "doctest.h"
#include "lotn/corpus.hpp"
#include "lotn/transform.hpp"

using namespace lotn;
using namespace lotn::transform;

TEST_CASE("hand-worked four-token example") {
  // d = [1, 0, 1, 2], c = [.75, 1, .75, .5], c*alpha = [.075, .2, .225, .2], total .7.
  const double alpha[] = {0.1, 0.2, 0.3, 0.4};
  auto out = transform::transform(alpha, {1, 1}, 4);
  CHECK(out.weights == std::vector<double>{0.75, 1.0, 0.75, 0.5});
  const double expected[] = {0.075 / 0.7, 0.2 / 0.7, 0.225 / 0.7, 0.2 / 0.7};
  for (int i = 0; i < 4; ++i) CHECK(out.beta[i] == doctest::Approx(expected[i]).epsilon(1e-14));
  CHECK(out.labels == std::vector<int>{0, 1, 1, 1});
  CHECK(out.threshold == 0.25);
}

TEST_CASE("multi-token targets measure distance to the nearest edge") {
  CHECK(distance_weights(5, {1, 2}) == std::vector<double>{0.8, 1.0, 1.0, 0.8, 0.6});
}

TEST_CASE("a weight exactly at the threshold is labeled 1") {
  // c = [1, .5]; c*alpha is exactly [1/3, 1/3] in binary, so beta is exactly [.5, .5].
  const double alpha[] = {1.0 / 3.0, 2.0 / 3.0};
  auto out = transform::transform(alpha, {0, 0}, 2);
  CHECK(out.beta[0] == 0.5);
  CHECK(out.beta[1] == 0.5);
  CHECK(out.labels == std::vector<int>{1, 1});
}

TEST_CASE("invalid inputs are rejected") {
  const double alpha[] = {0.5, 0.5};
  CHECK_THROWS_AS(transform::transform(alpha, {0, 0}, 3), std::invalid_argument);
  CHECK_THROWS_AS(transform::transform(alpha, {2, 2}, 2), std::out_of_range);
  const double negative[] = {1.5, -0.5};
  CHECK_THROWS_AS(transform::transform(negative, {0, 0}, 2), std::invalid_argument);
  const double unnormalized[] = {0.5, 0.6};
  CHECK_THROWS_AS(transform::transform(unnormalized, {0, 0}, 2), std::invalid_argument);
  CHECK_THROWS_AS(distance_weights(0, {0, 0}), std::invalid_argument);
  const double beta[] = {1.0};
  CHECK_THROWS_AS(binarize(beta, 2), std::invalid_argument);
}

TEST_CASE("beta is a distribution and at least one token passes the threshold") {
  Rng rng(21);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + rng.index(30);
    std::vector<double> alpha(n);
    rng.fill_uniform(alpha, 0.0, 1.0);
    const double total = std::accumulate(alpha.begin(), alpha.end(), 0.0);
    for (auto& a : alpha) a /= total;
    const std::size_t start = rng.index(n);
    const Span target{start, std::min(n - 1, start + rng.index(3))};
    auto out = transform::transform(alpha, target, n);
    CHECK(std::accumulate(out.beta.begin(), out.beta.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::accumulate(out.labels.begin(), out.labels.end(), 0) >= 1);
    for (std::size_t i = target.start; i <= target.end; ++i) CHECK(out.weights[i] == 1.0);
  }
}

TEST_CASE("dump lists every token with its intermediate values") {
  auto ex = corpus::parse_towe_line("great food\tO B\tB O", 1);
  const double alpha[] = {0.75, 0.25};
  auto out = transform::transform(alpha, ex.target, 2);
  std::ostringstream s;
  write_dump(s, 3, ex, alpha, out);
  CHECK(s.str() == "# example 3 target 1-1\ngreat\t0.75\t0.5\t0.59999999999999998\t1\tB\nfood\t0.25\t1\t0.40000000000000002\t0\tO\n\n");
}
