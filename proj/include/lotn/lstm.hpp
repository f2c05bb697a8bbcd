#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "lotn/ops.hpp"

namespace lotn::ag {

class ParameterStore;

/// Weights of one LSTM direction. Gate columns are ordered input, forget,
/// candidate, output, each `hidden` wide.
struct LstmWeights {
  Tensor input;      // [in x 4H]
  Tensor recurrent;  // [H x 4H]
  Tensor bias;       // [4H]

  std::size_t hidden() const { return recurrent.rows(); }
  std::size_t input_dim() const { return input.rows(); }

  static LstmWeights create(ParameterStore& store, const std::string& prefix, std::size_t input_dim,
                            std::size_t hidden, Rng& rng, double init_scale);
  static LstmWeights bind(const ParameterStore& store, const std::string& prefix);
};

struct BiLstmWeights {
  LstmWeights forward;
  LstmWeights backward;

  std::size_t output_dim() const { return forward.hidden() + backward.hidden(); }

  static BiLstmWeights create(ParameterStore& store, const std::string& prefix, std::size_t input_dim,
                              std::size_t hidden, Rng& rng, double init_scale);
  static BiLstmWeights bind(const ParameterStore& store, const std::string& prefix);
};

struct LstmState {
  Tensor h;  // [b x H]
  Tensor c;  // [b x H]
};

// One step on a batch of rows: x [b x in].
LstmState lstm_cell(Tape& tape, const Tensor& x, const LstmState& prev, const LstmWeights& w);

/// Shape of a padded batch laid out time-major: row t * batch + i holds
/// step t of sequence i.
struct SequenceLayout {
  std::vector<std::size_t> lengths;
  std::size_t steps = 0;

  std::size_t batch() const { return lengths.size(); }
  std::size_t row(std::size_t t, std::size_t i) const { return t * batch() + i; }
  bool valid(std::size_t t, std::size_t i) const { return t < lengths[i]; }
  // Validates lengths and derives steps = max length.
  static SequenceLayout from_lengths(std::vector<std::size_t> lengths);
};

// Runs one direction over a time-major input [steps*batch x in]; returns
// hidden states in the same layout. Padded steps carry the previous state.
Tensor lstm_sequence(Tape& tape, const Tensor& inputs, const SequenceLayout& layout, const LstmWeights& w,
                     bool reverse);

// Concatenation of forward and backward states per position: [steps*batch x 2H].
Tensor bilstm(Tape& tape, const Tensor& inputs, const SequenceLayout& layout, const BiLstmWeights& w);

}  // namespace lotn::ag
