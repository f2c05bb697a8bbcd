#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "lotn/rng.hpp"
#include "lotn/tensor.hpp"

namespace lotn::ag {

class InvalidMaskError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Ordered record of primitive operations for reverse-mode differentiation.
///
/// An operation is recorded only when at least one operand requires a
/// gradient, so forward passes over frozen parameters leave the tape empty.
/// backward() visits records in exact reverse order of recording.
class Tape {
 public:
  using Rule = std::function<void()>;

  void record(Tensor output, Rule rule);

  // Seeds d(loss)/d(loss) = 1 and propagates. Gradients of leaves accumulate
  // across calls; intermediate gradients are reset on every call.
  void backward(Tensor loss);

  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  void clear() { records_.clear(); }

 private:
  struct Record {
    Tensor output;
    Rule rule;
  };
  std::vector<Record> records_;
};

using Mask = std::span<const std::uint8_t>;

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor transpose(Tape& tape, const Tensor& a);
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& a, double factor);
// a[m x n] + bias[n] on every row.
Tensor add_bias(Tape& tape, const Tensor& a, const Tensor& bias);
Tensor sigmoid(Tape& tape, const Tensor& a);
Tensor tanh(Tape& tape, const Tensor& a);
Tensor sum(Tape& tape, const Tensor& a);

Tensor concat_cols(Tape& tape, const std::vector<Tensor>& parts);
Tensor concat_rows(Tape& tape, const std::vector<Tensor>& parts);
Tensor slice_cols(Tape& tape, const Tensor& a, std::size_t begin, std::size_t count);
Tensor slice_rows(Tape& tape, const Tensor& a, std::size_t begin, std::size_t count);
Tensor gather_rows(Tape& tape, const Tensor& a, std::span<const std::size_t> rows);
// Row r of the result comes from `when_set` if row_mask[r] is nonzero, else from `otherwise`.
Tensor select_rows(Tape& tape, Mask row_mask, const Tensor& when_set, const Tensor& otherwise);

Tensor embedding_gather(Tape& tape, const Tensor& table, std::span<const int> ids);

// Inverted dropout: survivors are scaled by 1/(1-p). Identity when !train or p == 0.
Tensor dropout(Tape& tape, const Tensor& a, double p, bool train, Rng& rng);

// Row-wise softmax over valid entries; masked entries come out exactly 0.
Tensor softmax_rows(Tape& tape, const Tensor& logits, Mask mask = {});

// -sum over unmasked rows of log probs[i, labels[i]]. Empty mask means all rows count.
Tensor cross_entropy_masked(Tape& tape, const Tensor& probs, std::span<const int> labels,
                            Mask mask = {});

namespace testing {
// Skews the sigmoid derivative so gradient checks can be shown to fail.
void set_gradient_fault(bool enabled);
}  // namespace testing

}  // namespace lotn::ag
