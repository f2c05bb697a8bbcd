#include <cmath>

#include "doctest.h"
#include "lotn/ops.hpp"
#include "support.hpp"

using namespace lotn;
using ag::Tape;
using ag::Tensor;
using lotn::testing::max_abs_diff;
using lotn::testing::numeric_gradient;
using lotn::testing::random_tensor;

namespace {

// Analytic gradient of `build` with respect to x, checked against central differences.
double gradient_gap(const std::function<Tensor(Tape&)>& build, Tensor x) {
  x.clear_grad();
  Tape tape;
  tape.backward(build(tape));
  std::vector<double> analytic(x.grad().begin(), x.grad().end());
  auto numeric = numeric_gradient(
      [&] {
        Tape t;
        return build(t).item();
      },
      x);
  return max_abs_diff(analytic, numeric);
}

}  // namespace

TEST_CASE("matmul forward matches hand computation") {
  Tape tape;
  Tensor a({2, 2}, {1, 2, 3, 4});
  Tensor b({2, 1}, {5, 6});
  Tensor c = ag::matmul(tape, a, b);
  CHECK(c.at(0, 0) == 17);
  CHECK(c.at(1, 0) == 39);
  CHECK_THROWS_AS(ag::matmul(tape, b, b), ag::DimensionError);
  CHECK(tape.empty());
}

TEST_CASE("backward requires a tracked scalar") {
  Tape tape;
  Tensor a({2}, {1, 2}, true);
  Tensor s = ag::sum(tape, ag::mul(tape, a, a));
  CHECK_THROWS_AS(tape.backward(ag::mul(tape, a, a)), ag::DimensionError);
  tape.backward(s);
  CHECK(a.grad()[0] == doctest::Approx(2.0));
  CHECK(a.grad()[1] == doctest::Approx(4.0));
  Tape other;
  CHECK_THROWS_AS(other.backward(Tensor::scalar(1.0)), std::logic_error);
}

TEST_CASE("leaf gradients accumulate across backward calls") {
  Tensor a({1}, {3}, true);
  for (int i = 0; i < 2; ++i) {
    Tape tape;
    tape.backward(ag::sum(tape, ag::scale(tape, a, 2.0)));
  }
  CHECK(a.grad()[0] == doctest::Approx(4.0));
}

TEST_CASE("elementwise and structural ops have correct gradients") {
  Rng rng(3);
  Tensor x = random_tensor({3, 4}, rng);
  Tensor w = random_tensor({4, 2}, rng, 1.0, false);
  Tensor bias = random_tensor({2}, rng, 1.0, false);
  Tensor other = random_tensor({3, 4}, rng, 1.0, false);
  const std::size_t rows[] = {2, 0, 2};
  const std::uint8_t row_mask[] = {1, 0, 1};

  CHECK(gradient_gap([&](Tape& t) { return ag::sum(t, ag::tanh(t, ag::matmul(t, x, w))); }, x) < 1e-8);
  CHECK(gradient_gap([&](Tape& t) { return ag::sum(t, ag::sigmoid(t, ag::add_bias(t, ag::matmul(t, x, w), bias))); },
                     x) < 1e-8);
  CHECK(gradient_gap([&](Tape& t) { return ag::sum(t, ag::mul(t, ag::transpose(t, x), ag::transpose(t, x))); }, x) <
        1e-8);
  CHECK(gradient_gap(
            [&](Tape& t) {
              return ag::sum(t, ag::mul(t, ag::concat_cols(t, {x, other}), ag::concat_cols(t, {other, x})));
            },
            x) < 1e-8);
  CHECK(gradient_gap([&](Tape& t) { return ag::sum(t, ag::tanh(t, ag::concat_rows(t, {x, ag::scale(t, x, 2)}))); },
                     x) < 1e-8);
  CHECK(gradient_gap([&](Tape& t) { return ag::sum(t, ag::tanh(t, ag::slice_cols(t, x, 1, 2))); }, x) < 1e-8);
  CHECK(gradient_gap([&](Tape& t) { return ag::sum(t, ag::tanh(t, ag::slice_rows(t, x, 1, 2))); }, x) < 1e-8);
  CHECK(gradient_gap([&](Tape& t) { return ag::sum(t, ag::tanh(t, ag::gather_rows(t, x, rows))); }, x) < 1e-8);
  CHECK(gradient_gap([&](Tape& t) { return ag::sum(t, ag::tanh(t, ag::select_rows(t, row_mask, x, other))); }, x) <
        1e-8);
  CHECK(gradient_gap([&](Tape& t) { return ag::sum(t, ag::tanh(t, ag::add(t, x, other))); }, x) < 1e-8);
}

TEST_CASE("embedding gather copies rows and routes gradients back") {
  Tensor table({3, 2}, {0, 1, 10, 11, 20, 21}, true);
  const int ids[] = {2, 0, 2};
  Tape tape;
  Tensor e = ag::embedding_gather(tape, table, ids);
  CHECK(e.at(0, 1) == 21);
  CHECK(e.at(1, 0) == 0);
  tape.backward(ag::sum(tape, e));
  CHECK(table.grad()[4] == 2.0);
  CHECK(table.grad()[2] == 0.0);
  const int bad[] = {3};
  CHECK_THROWS_AS(ag::embedding_gather(tape, table, bad), std::out_of_range);
}

TEST_CASE("masked softmax zeroes masked entries and rejects empty rows") {
  Tape tape;
  Tensor logits({2, 3}, {1, 2, 3, 0, 0, 1000});
  const std::uint8_t mask[] = {1, 0, 1, 1, 1, 0};
  Tensor p = ag::softmax_rows(tape, logits, mask);
  CHECK(p.at(0, 1) == 0.0);
  CHECK(p.at(0, 0) == doctest::Approx(std::exp(1.0) / (std::exp(1.0) + std::exp(3.0))));
  CHECK(p.at(1, 0) == doctest::Approx(0.5));
  CHECK(p.at(1, 2) == 0.0);
  const std::uint8_t empty_row[] = {1, 1, 1, 0, 0, 0};
  CHECK_THROWS_AS(ag::softmax_rows(tape, logits, empty_row), ag::InvalidMaskError);

  Tensor big({1, 2}, {1000, 1000});
  Tensor q = ag::softmax_rows(tape, big);
  CHECK(q.at(0, 0) == doctest::Approx(0.5));
}

TEST_CASE("softmax and cross-entropy gradients match finite differences") {
  Rng rng(5);
  Tensor logits = random_tensor({3, 3}, rng, 2.0);
  const int labels[] = {0, 2, 1};
  const std::uint8_t mask[] = {1, 1, 0};
  CHECK(gradient_gap(
            [&](Tape& t) { return ag::cross_entropy_masked(t, ag::softmax_rows(t, logits), labels, mask); }, logits) <
        1e-8);
}

TEST_CASE("cross-entropy sums negative log-likelihood over unmasked rows") {
  Tape tape;
  Tensor probs({2, 2}, {0.25, 0.75, 0.5, 0.5});
  const int labels[] = {1, -1};
  const std::uint8_t mask[] = {1, 0};
  CHECK(ag::cross_entropy_masked(tape, probs, labels, mask).item() == doctest::Approx(-std::log(0.75)));
  const int out_of_range[] = {2, 0};
  CHECK_THROWS_AS(ag::cross_entropy_masked(tape, probs, out_of_range), std::out_of_range);
}

TEST_CASE("dropout is the identity at evaluation and rescales survivors in training") {
  Rng rng(1);
  Tape tape;
  Tensor x({1, 1000}, std::vector<double>(1000, 1.0));
  Tensor eval = ag::dropout(tape, x, 0.5, false, rng);
  CHECK(eval.same_storage(x));
  Tensor train = ag::dropout(tape, x, 0.5, true, rng);
  std::size_t kept = 0;
  for (double v : train.values()) {
    CHECK((v == 0.0 || v == 2.0));
    kept += v != 0.0;
  }
  CHECK(kept > 400);
  CHECK(kept < 600);
  CHECK_THROWS(ag::dropout(tape, x, 1.0, true, rng));
}

TEST_CASE("gradient fault hook skews the sigmoid derivative") {
  Tensor x({1}, {0.3}, true);
  auto grad_of_sigmoid = [&] {
    x.clear_grad();
    Tape tape;
    tape.backward(ag::sum(tape, ag::sigmoid(tape, x)));
    return x.grad()[0];
  };
  const double clean = grad_of_sigmoid();
  ag::testing::set_gradient_fault(true);
  const double skewed = grad_of_sigmoid();
  ag::testing::set_gradient_fault(false);
  CHECK(skewed == doctest::Approx(clean * 1.05));
  CHECK(grad_of_sigmoid() == clean);
}
