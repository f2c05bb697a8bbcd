#include "lotn/lstm.hpp"

#include <algorithm>
#include <stdexcept>

#include "lotn/optim.hpp"

namespace lotn::ag {
namespace {

LstmState gate_update(Tape& tape, const Tensor& gates, const LstmState& prev, std::size_t hidden) {
  Tensor input_gate = sigmoid(tape, slice_cols(tape, gates, 0, hidden));
  Tensor forget_gate = sigmoid(tape, slice_cols(tape, gates, hidden, hidden));
  Tensor candidate = tanh(tape, slice_cols(tape, gates, 2 * hidden, hidden));
  Tensor output_gate = sigmoid(tape, slice_cols(tape, gates, 3 * hidden, hidden));
  Tensor c = add(tape, mul(tape, forget_gate, prev.c), mul(tape, input_gate, candidate));
  Tensor h = mul(tape, output_gate, tanh(tape, c));
  return {h, c};
}

void check_state(const Tensor& x_rows, const LstmState& prev, std::size_t hidden) {
  const Shape expected{x_rows.rows(), hidden};
  if (prev.h.shape() != expected || prev.c.shape() != expected)
    throw DimensionError("lstm_cell: state shapes " + to_string(prev.h.shape()) + "/" + to_string(prev.c.shape()) +
                         " do not match " + to_string(expected));
}

}  // namespace

LstmWeights LstmWeights::create(ParameterStore& store, const std::string& prefix, std::size_t input_dim,
                                std::size_t hidden, Rng& rng, double init_scale) {
  LstmWeights w;
  w.input = store.create(prefix + "/input", {input_dim, 4 * hidden}, rng, init_scale);
  w.recurrent = store.create(prefix + "/recurrent", {hidden, 4 * hidden}, rng, init_scale);
  w.bias = store.create(prefix + "/bias", {4 * hidden}, rng, init_scale);
  return w;
}

LstmWeights LstmWeights::bind(const ParameterStore& store, const std::string& prefix) {
  LstmWeights w{store.get(prefix + "/input"), store.get(prefix + "/recurrent"), store.get(prefix + "/bias")};
  const std::size_t hidden = w.recurrent.rows();
  if (w.recurrent.cols() != 4 * hidden || w.input.cols() != 4 * hidden || w.bias.size() != 4 * hidden)
    throw DimensionError("lstm: inconsistent weight shapes under " + prefix);
  return w;
}

BiLstmWeights BiLstmWeights::create(ParameterStore& store, const std::string& prefix, std::size_t input_dim,
                                    std::size_t hidden, Rng& rng, double init_scale) {
  BiLstmWeights w;
  w.forward = LstmWeights::create(store, prefix + "/fwd", input_dim, hidden, rng, init_scale);
  w.backward = LstmWeights::create(store, prefix + "/bwd", input_dim, hidden, rng, init_scale);
  return w;
}

BiLstmWeights BiLstmWeights::bind(const ParameterStore& store, const std::string& prefix) {
  return {LstmWeights::bind(store, prefix + "/fwd"), LstmWeights::bind(store, prefix + "/bwd")};
}

LstmState lstm_cell(Tape& tape, const Tensor& x, const LstmState& prev, const LstmWeights& w) {
  if (x.cols() != w.input_dim())
    throw DimensionError("lstm_cell: input " + to_string(x.shape()) + " for input weights " +
                         to_string(w.input.shape()));
  check_state(x, prev, w.hidden());
  Tensor gates = add(tape, add_bias(tape, matmul(tape, x, w.input), w.bias), matmul(tape, prev.h, w.recurrent));
  return gate_update(tape, gates, prev, w.hidden());
}

SequenceLayout SequenceLayout::from_lengths(std::vector<std::size_t> lengths) {
  if (lengths.empty()) throw std::invalid_argument("sequence layout: empty batch");
  for (auto n : lengths)
    if (n == 0) throw std::invalid_argument("sequence layout: empty sequence");
  SequenceLayout layout;
  layout.steps = *std::max_element(lengths.begin(), lengths.end());
  layout.lengths = std::move(lengths);
  return layout;
}

Tensor lstm_sequence(Tape& tape, const Tensor& inputs, const SequenceLayout& layout, const LstmWeights& w,
                     bool reverse) {
  const std::size_t batch = layout.batch();
  if (batch == 0 || layout.steps == 0) throw std::invalid_argument("lstm: empty sequence");
  if (inputs.rows() != layout.steps * batch)
    throw DimensionError("lstm: " + std::to_string(inputs.rows()) + " input rows for " +
                         std::to_string(layout.steps) + " steps x " + std::to_string(batch) + " sequences");
  if (inputs.cols() != w.input_dim())
    throw DimensionError("lstm: input " + to_string(inputs.shape()) + " for input weights " +
                         to_string(w.input.shape()));
  const std::size_t hidden = w.hidden();
  Tensor projected = add_bias(tape, matmul(tape, inputs, w.input), w.bias);

  LstmState state{Tensor::zeros({batch, hidden}), Tensor::zeros({batch, hidden})};
  std::vector<Tensor> outputs(layout.steps);
  std::vector<std::uint8_t> active(batch);
  for (std::size_t k = 0; k < layout.steps; ++k) {
    const std::size_t t = reverse ? layout.steps - 1 - k : k;
    std::size_t live = 0;
    for (std::size_t i = 0; i < batch; ++i) live += active[i] = layout.valid(t, i) ? 1 : 0;
    if (live > 0) {
      Tensor gates = add(tape, slice_rows(tape, projected, t * batch, batch), matmul(tape, state.h, w.recurrent));
      LstmState next = gate_update(tape, gates, state, hidden);
      if (live == batch) {
        state = next;
      } else {
        state.h = select_rows(tape, active, next.h, state.h);
        state.c = select_rows(tape, active, next.c, state.c);
      }
    }
    outputs[t] = state.h;
  }
  return concat_rows(tape, outputs);
}

Tensor bilstm(Tape& tape, const Tensor& inputs, const SequenceLayout& layout, const BiLstmWeights& w) {
  Tensor fwd = lstm_sequence(tape, inputs, layout, w.forward, false);
  Tensor bwd = lstm_sequence(tape, inputs, layout, w.backward, true);
  return concat_cols(tape, {fwd, bwd});
}

}  // namespace lotn::ag
