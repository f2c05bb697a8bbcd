#include <cmath>

#include "doctest.h"
#include "lotn/lstm.hpp"
#include "lotn/optim.hpp"
#include "support.hpp"

using namespace lotn;
using ag::Tape;
using ag::Tensor;

namespace {

double sigm(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Scalar-loop reference LSTM over one unpadded sequence, gate order i, f, g, o.
std::vector<std::vector<double>> reference_lstm(const std::vector<std::vector<double>>& xs, const ag::LstmWeights& w,
                                                bool reverse) {
  const std::size_t in = w.input_dim(), hid = w.hidden(), n = xs.size();
  std::vector<double> h(hid, 0.0), c(hid, 0.0);
  std::vector<std::vector<double>> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t t = reverse ? n - 1 - k : k;
    std::vector<double> z(4 * hid);
    for (std::size_t j = 0; j < 4 * hid; ++j) {
      double s = w.bias.values()[j];
      for (std::size_t a = 0; a < in; ++a) s += xs[t][a] * w.input.at(a, j);
      for (std::size_t a = 0; a < hid; ++a) s += h[a] * w.recurrent.at(a, j);
      z[j] = s;
    }
    for (std::size_t j = 0; j < hid; ++j) {
      const double i = sigm(z[j]), f = sigm(z[hid + j]), g = std::tanh(z[2 * hid + j]), o = sigm(z[3 * hid + j]);
      c[j] = f * c[j] + i * g;
      h[j] = o * std::tanh(c[j]);
    }
    out[t] = h;
  }
  return out;
}

}  // namespace

TEST_CASE("padded batch matches per-sequence scalar reference in both directions") {
  Rng rng(11);
  ag::ParameterStore store;
  auto w = ag::LstmWeights::create(store, "lstm", 3, 2, rng, 0.5);
  const std::vector<std::size_t> lengths = {4, 2, 3};
  auto layout = ag::SequenceLayout::from_lengths(lengths);
  CHECK(layout.steps == 4);
  Tensor inputs = lotn::testing::random_tensor({4 * 3, 3}, rng, 1.0, false);

  for (bool reverse : {false, true}) {
    Tape tape;
    Tensor out = ag::lstm_sequence(tape, inputs, layout, w, reverse);
    REQUIRE(out.shape() == ag::Shape{12, 2});
    for (std::size_t i = 0; i < 3; ++i) {
      std::vector<std::vector<double>> xs;
      for (std::size_t t = 0; t < lengths[i]; ++t) {
        auto row = inputs.values().subspan(layout.row(t, i) * 3, 3);
        xs.emplace_back(row.begin(), row.end());
      }
      auto expected = reference_lstm(xs, w, reverse);
      for (std::size_t t = 0; t < lengths[i]; ++t)
        for (std::size_t j = 0; j < 2; ++j) CHECK(out.at(layout.row(t, i), j) == doctest::Approx(expected[t][j]).epsilon(1e-12));
    }
  }
}

TEST_CASE("padding steps never influence real outputs") {
  Rng rng(2);
  ag::ParameterStore store;
  auto w = ag::BiLstmWeights::create(store, "bi", 2, 3, rng, 0.5);
  auto layout = ag::SequenceLayout::from_lengths({3, 1});
  Tensor a = lotn::testing::random_tensor({6, 2}, rng, 1.0, false);
  Tensor b = a.clone();
  // Rows for padding cells of the second sequence: t = 1, 2.
  for (std::size_t t : {1, 2})
    for (std::size_t c = 0; c < 2; ++c) b.values_mut()[layout.row(t, 1) * 2 + c] = 100.0;
  Tape tape;
  Tensor ya = ag::bilstm(tape, a, layout, w);
  Tensor yb = ag::bilstm(tape, b, layout, w);
  CHECK(ya.cols() == 6);
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t i = 0; i < 2; ++i) {
      if (!layout.valid(t, i)) continue;
      for (std::size_t c = 0; c < 6; ++c) CHECK(ya.at(layout.row(t, i), c) == yb.at(layout.row(t, i), c));
    }
}

TEST_CASE("lstm rejects mismatched inputs and empty layouts") {
  Rng rng(1);
  ag::ParameterStore store;
  auto w = ag::LstmWeights::create(store, "l", 2, 2, rng, 0.1);
  Tape tape;
  auto layout = ag::SequenceLayout::from_lengths({2});
  CHECK_THROWS_AS(ag::lstm_sequence(tape, Tensor::zeros({3, 2}), layout, w, false), ag::DimensionError);
  CHECK_THROWS_AS(ag::lstm_sequence(tape, Tensor::zeros({2, 3}), layout, w, false), ag::DimensionError);
  CHECK_THROWS(ag::SequenceLayout::from_lengths({}));
  CHECK_THROWS(ag::SequenceLayout::from_lengths({2, 0}));
}

TEST_CASE("bilstm gradients agree with finite differences") {
  Rng rng(4);
  ag::ParameterStore store;
  auto w = ag::BiLstmWeights::create(store, "bi", 2, 2, rng, 0.5);
  auto layout = ag::SequenceLayout::from_lengths({3, 2});
  Tensor x = lotn::testing::random_tensor({6, 2}, rng);
  auto loss = [&](Tape& t) { return ag::sum(t, ag::tanh(t, ag::bilstm(t, x, layout, w))); };
  Tape tape;
  tape.backward(loss(tape));
  std::vector<double> analytic(w.forward.recurrent.grad().begin(), w.forward.recurrent.grad().end());
  auto numeric = lotn::testing::numeric_gradient(
      [&] {
        Tape t;
        return loss(t).item();
      },
      w.forward.recurrent);
  CHECK(lotn::testing::max_abs_diff(analytic, numeric) < 1e-8);
}
