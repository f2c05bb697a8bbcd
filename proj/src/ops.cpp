#include "lotn/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace lotn::ag {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstView = Eigen::Map<const RowMatrix>;
using View = Eigen::Map<RowMatrix>;

std::atomic<bool> gradient_fault{false};

ConstView view(const Tensor& t) {
  return ConstView(t.values().data(), static_cast<Eigen::Index>(t.rows()),
                   static_cast<Eigen::Index>(t.cols()));
}

View grad_view(Tensor& t) {
  return View(t.grad_mut().data(), static_cast<Eigen::Index>(t.rows()),
              static_cast<Eigen::Index>(t.cols()));
}

void require(bool ok, const char* op, const std::string& detail) {
  if (!ok) throw DimensionError(std::string(op) + ": " + detail);
}

bool tracks(std::initializer_list<const Tensor*> inputs) {
  return std::any_of(inputs.begin(), inputs.end(), [](const Tensor* t) { return t->requires_grad(); });
}

Shape matrix_shape(std::size_t rows, std::size_t cols) { return {rows, cols}; }

// Records `rule` when any input is tracked; the output then requires grad.
template <class Rule>
Tensor finish(Tape& tape, Tensor out, std::initializer_list<const Tensor*> inputs, Rule&& rule) {
  if (tracks(inputs)) {
    out.set_requires_grad(true);
    tape.record(out, std::forward<Rule>(rule));
  }
  return out;
}

template <class Fn, class Deriv>
Tensor unary(Tape& tape, const Tensor& a, Fn fn, Deriv deriv) {
  std::vector<double> values(a.size());
  auto in = a.values();
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = fn(in[i]);
  Tensor out(a.shape(), std::move(values));
  return finish(tape, out, {&a}, [a = a, out, deriv]() mutable {
    auto g = out.grad();
    auto y = out.values();
    auto ga = a.grad_mut();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * deriv(y[i]);
  });
}

}  // namespace

void Tape::record(Tensor output, Rule rule) { records_.push_back({std::move(output), std::move(rule)}); }

void Tape::backward(Tensor loss) {
  if (loss.size() != 1)
    throw DimensionError("backward: loss must be scalar, got shape " + to_string(loss.shape()));
  if (!loss.requires_grad()) throw std::logic_error("backward: loss does not depend on any tracked tensor");
  for (auto& r : records_) r.output.clear_grad();
  loss.grad_mut()[0] = 1.0;
  for (auto it = records_.rbegin(); it != records_.rend(); ++it)
    if (it->output.has_grad()) it->rule();
}

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  require(a.cols() == b.rows(), "matmul",
          "inner dimensions differ: " + to_string(a.shape()) + " x " + to_string(b.shape()));
  Tensor out = Tensor::zeros(matrix_shape(a.rows(), b.cols()));
  View(out.values_mut().data(), a.rows(), b.cols()).noalias() = view(a) * view(b);
  return finish(tape, out, {&a, &b}, [a = a, b = b, out]() mutable {
    auto g = ConstView(out.grad().data(), out.rows(), out.cols());
    if (a.requires_grad()) grad_view(a).noalias() += g * view(b).transpose();
    if (b.requires_grad()) grad_view(b).noalias() += view(a).transpose() * g;
  });
}

Tensor transpose(Tape& tape, const Tensor& a) {
  Tensor out = Tensor::zeros(matrix_shape(a.cols(), a.rows()));
  View(out.values_mut().data(), a.cols(), a.rows()) = view(a).transpose();
  return finish(tape, out, {&a}, [a = a, out]() mutable {
    grad_view(a) += ConstView(out.grad().data(), out.rows(), out.cols()).transpose();
  });
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "add", to_string(a.shape()) + " vs " + to_string(b.shape()));
  std::vector<double> values(a.size());
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = a.values()[i] + b.values()[i];
  Tensor out(a.shape(), std::move(values));
  return finish(tape, out, {&a, &b}, [a = a, b = b, out]() mutable {
    auto g = out.grad();
    for (Tensor* t : {&a, &b}) {
      if (!t->requires_grad()) continue;
      auto gt = t->grad_mut();
      for (std::size_t i = 0; i < gt.size(); ++i) gt[i] += g[i];
    }
  });
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "mul", to_string(a.shape()) + " vs " + to_string(b.shape()));
  std::vector<double> values(a.size());
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = a.values()[i] * b.values()[i];
  Tensor out(a.shape(), std::move(values));
  return finish(tape, out, {&a, &b}, [a = a, b = b, out]() mutable {
    auto g = out.grad();
    if (a.requires_grad()) {
      auto ga = a.grad_mut();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * b.values()[i];
    }
    if (b.requires_grad()) {
      auto gb = b.grad_mut();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * a.values()[i];
    }
  });
}

Tensor scale(Tape& tape, const Tensor& a, double factor) {
  std::vector<double> values(a.size());
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = a.values()[i] * factor;
  Tensor out(a.shape(), std::move(values));
  return finish(tape, out, {&a}, [a = a, out, factor]() mutable {
    auto g = out.grad();
    auto ga = a.grad_mut();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * factor;
  });
}

Tensor add_bias(Tape& tape, const Tensor& a, const Tensor& bias) {
  require(bias.size() == a.cols(), "add_bias",
          "bias " + to_string(bias.shape()) + " does not match columns of " + to_string(a.shape()));
  Tensor out = a.detach();
  auto v = out.values_mut();
  const std::size_t n = a.cols();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += bias.values()[i % n];
  return finish(tape, out, {&a, &bias}, [a = a, bias = bias, out, n]() mutable {
    auto g = out.grad();
    if (a.requires_grad()) {
      auto ga = a.grad_mut();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
    }
    if (bias.requires_grad()) {
      auto gb = bias.grad_mut();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % n] += g[i];
    }
  });
}

Tensor sigmoid(Tape& tape, const Tensor& a) {
  return unary(
      tape, a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double y) {
        double d = y * (1.0 - y);
        return gradient_fault.load(std::memory_order_relaxed) ? d * 1.05 : d;
      });
}

Tensor tanh(Tape& tape, const Tensor& a) {
  return unary(tape, a, [](double x) { return std::tanh(x); }, [](double y) { return 1.0 - y * y; });
}

Tensor sum(Tape& tape, const Tensor& a) {
  double total = 0.0;
  for (double v : a.values()) total += v;
  Tensor out = Tensor::scalar(total);
  return finish(tape, out, {&a}, [a = a, out]() mutable {
    const double g = out.grad()[0];
    for (auto& v : a.grad_mut()) v += g;
  });
}

Tensor concat_cols(Tape& tape, const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_cols", "no operands");
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  for (const auto& p : parts) {
    require(p.rows() == rows, "concat_cols",
            "row counts differ: " + to_string(parts.front().shape()) + " vs " + to_string(p.shape()));
    cols += p.cols();
  }
  Tensor out = parts.front().rank() == 1 && rows == 1 ? Tensor::zeros({cols})
                                                       : Tensor::zeros(matrix_shape(rows, cols));
  auto v = out.values_mut();
  std::size_t offset = 0;
  for (const auto& p : parts) {
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(p.values().begin() + r * p.cols(), p.cols(), v.begin() + r * cols + offset);
    offset += p.cols();
  }
  bool tracked = std::any_of(parts.begin(), parts.end(), [](const Tensor& t) { return t.requires_grad(); });
  if (!tracked) return out;
  out.set_requires_grad(true);
  tape.record(out, [parts = parts, out, rows, cols]() mutable {
    auto g = out.grad();
    std::size_t offset = 0;
    for (auto& p : parts) {
      if (p.requires_grad()) {
        auto gp = p.grad_mut();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < p.cols(); ++c) gp[r * p.cols() + c] += g[r * cols + offset + c];
      }
      offset += p.cols();
    }
  });
  return out;
}

Tensor concat_rows(Tape& tape, const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_rows", "no operands");
  const std::size_t cols = parts.front().cols();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    require(p.cols() == cols, "concat_rows",
            "column counts differ: " + to_string(parts.front().shape()) + " vs " + to_string(p.shape()));
    rows += p.rows();
  }
  Tensor out = Tensor::zeros(matrix_shape(rows, cols));
  auto v = out.values_mut();
  std::size_t offset = 0;
  for (const auto& p : parts) {
    std::copy(p.values().begin(), p.values().end(), v.begin() + offset);
    offset += p.size();
  }
  bool tracked = std::any_of(parts.begin(), parts.end(), [](const Tensor& t) { return t.requires_grad(); });
  if (!tracked) return out;
  out.set_requires_grad(true);
  tape.record(out, [parts = parts, out]() mutable {
    auto g = out.grad();
    std::size_t offset = 0;
    for (auto& p : parts) {
      if (p.requires_grad()) {
        auto gp = p.grad_mut();
        for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[offset + i];
      }
      offset += p.size();
    }
  });
  return out;
}

Tensor slice_cols(Tape& tape, const Tensor& a, std::size_t begin, std::size_t count) {
  require(count > 0 && begin + count <= a.cols(), "slice_cols",
          "columns [" + std::to_string(begin) + ", " + std::to_string(begin + count) + ") out of " +
              to_string(a.shape()));
  const std::size_t rows = a.rows(), cols = a.cols();
  Tensor out = Tensor::zeros(matrix_shape(rows, count));
  auto v = out.values_mut();
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(a.values().begin() + r * cols + begin, count, v.begin() + r * count);
  return finish(tape, out, {&a}, [a = a, out, begin, count, rows, cols]() mutable {
    auto g = out.grad();
    auto ga = a.grad_mut();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < count; ++c) ga[r * cols + begin + c] += g[r * count + c];
  });
}

Tensor slice_rows(Tape& tape, const Tensor& a, std::size_t begin, std::size_t count) {
  require(count > 0 && begin + count <= a.rows(), "slice_rows",
          "rows [" + std::to_string(begin) + ", " + std::to_string(begin + count) + ") out of " +
              to_string(a.shape()));
  const std::size_t cols = a.cols();
  Tensor out(matrix_shape(count, cols),
             std::vector<double>(a.values().begin() + begin * cols, a.values().begin() + (begin + count) * cols));
  return finish(tape, out, {&a}, [a = a, out, begin, cols]() mutable {
    auto g = out.grad();
    auto ga = a.grad_mut();
    for (std::size_t i = 0; i < g.size(); ++i) ga[begin * cols + i] += g[i];
  });
}

Tensor gather_rows(Tape& tape, const Tensor& a, std::span<const std::size_t> rows) {
  require(!rows.empty(), "gather_rows", "empty row list");
  const std::size_t cols = a.cols();
  std::vector<std::size_t> index(rows.begin(), rows.end());
  std::vector<double> values(index.size() * cols);
  for (std::size_t i = 0; i < index.size(); ++i) {
    require(index[i] < a.rows(), "gather_rows",
            "row " + std::to_string(index[i]) + " out of " + to_string(a.shape()));
    std::copy_n(a.values().begin() + index[i] * cols, cols, values.begin() + i * cols);
  }
  Tensor out(matrix_shape(index.size(), cols), std::move(values));
  return finish(tape, out, {&a}, [a = a, out, index = std::move(index), cols]() mutable {
    auto g = out.grad();
    auto ga = a.grad_mut();
    for (std::size_t i = 0; i < index.size(); ++i)
      for (std::size_t c = 0; c < cols; ++c) ga[index[i] * cols + c] += g[i * cols + c];
  });
}

Tensor select_rows(Tape& tape, Mask row_mask, const Tensor& when_set, const Tensor& otherwise) {
  require(when_set.shape() == otherwise.shape(), "select_rows",
          to_string(when_set.shape()) + " vs " + to_string(otherwise.shape()));
  require(row_mask.size() == when_set.rows(), "select_rows",
          "mask of " + std::to_string(row_mask.size()) + " rows for " + to_string(when_set.shape()));
  const std::size_t cols = when_set.cols();
  std::vector<std::uint8_t> mask(row_mask.begin(), row_mask.end());
  Tensor out = otherwise.detach();
  auto v = out.values_mut();
  for (std::size_t r = 0; r < mask.size(); ++r)
    if (mask[r]) std::copy_n(when_set.values().begin() + r * cols, cols, v.begin() + r * cols);
  return finish(tape, out, {&when_set, &otherwise}, [when_set = when_set, otherwise = otherwise, out, mask = std::move(mask), cols]() mutable {
    auto g = out.grad();
    for (std::size_t r = 0; r < mask.size(); ++r) {
      Tensor& target = mask[r] ? when_set : otherwise;
      if (!target.requires_grad()) continue;
      auto gt = target.grad_mut();
      for (std::size_t c = 0; c < cols; ++c) gt[r * cols + c] += g[r * cols + c];
    }
  });
}

Tensor embedding_gather(Tape& tape, const Tensor& table, std::span<const int> ids) {
  require(!ids.empty(), "embedding_gather", "empty id list");
  const std::size_t dim = table.cols();
  std::vector<int> index(ids.begin(), ids.end());
  std::vector<double> values(index.size() * dim);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || static_cast<std::size_t>(index[i]) >= table.rows())
      throw std::out_of_range("embedding_gather: id " + std::to_string(index[i]) + " outside table " +
                              to_string(table.shape()));
    std::copy_n(table.values().begin() + index[i] * dim, dim, values.begin() + i * dim);
  }
  Tensor out(matrix_shape(index.size(), dim), std::move(values));
  return finish(tape, out, {&table}, [table = table, out, index = std::move(index), dim]() mutable {
    auto g = out.grad();
    auto gt = table.grad_mut();
    for (std::size_t i = 0; i < index.size(); ++i)
      for (std::size_t c = 0; c < dim; ++c) gt[index[i] * dim + c] += g[i * dim + c];
  });
}

Tensor dropout(Tape& tape, const Tensor& a, double p, bool train, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("dropout: p must lie in [0, 1), got " + std::to_string(p));
  if (!train || p == 0.0) return a;
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> mask(a.size());
  for (auto& m : mask) m = rng.bernoulli(p) ? 0.0 : keep_scale;
  std::vector<double> values(a.size());
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = a.values()[i] * mask[i];
  Tensor out(a.shape(), std::move(values));
  return finish(tape, out, {&a}, [a = a, out, mask = std::move(mask)]() mutable {
    auto g = out.grad();
    auto ga = a.grad_mut();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * mask[i];
  });
}

Tensor softmax_rows(Tape& tape, const Tensor& logits, Mask mask) {
  if (!mask.empty() && mask.size() != logits.size())
    throw DimensionError("softmax_rows: mask of " + std::to_string(mask.size()) + " entries for " +
                         to_string(logits.shape()));
  const std::size_t rows = logits.rows(), cols = logits.cols();
  auto valid = [&](std::size_t i) { return mask.empty() || mask[i] != 0; };
  Tensor out = Tensor::zeros(logits.shape());
  auto y = out.values_mut();
  auto x = logits.values();
  for (std::size_t r = 0; r < rows; ++r) {
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cols; ++c)
      if (valid(r * cols + c)) peak = std::max(peak, x[r * cols + c]);
    if (peak == -std::numeric_limits<double>::infinity())
      throw InvalidMaskError("softmax_rows: row " + std::to_string(r) + " has no valid entry");
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t i = r * cols + c;
      if (!valid(i)) continue;
      y[i] = std::exp(x[i] - peak);
      total += y[i];
    }
    for (std::size_t c = 0; c < cols; ++c) y[r * cols + c] /= total;
  }
  return finish(tape, out, {&logits}, [logits = logits, out, rows, cols]() mutable {
    auto g = out.grad();
    auto y = out.values();
    auto gx = logits.grad_mut();
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += y[r * cols + c] * g[r * cols + c];
      for (std::size_t c = 0; c < cols; ++c) {
        const std::size_t i = r * cols + c;
        gx[i] += y[i] * (g[i] - dot);
      }
    }
  });
}

Tensor cross_entropy_masked(Tape& tape, const Tensor& probs, std::span<const int> labels, Mask mask) {
  const std::size_t rows = probs.rows(), k = probs.cols();
  if (labels.size() != rows)
    throw DimensionError("cross_entropy_masked: " + std::to_string(labels.size()) + " labels for " +
                         to_string(probs.shape()));
  if (!mask.empty() && mask.size() != rows)
    throw DimensionError("cross_entropy_masked: mask of " + std::to_string(mask.size()) + " rows for " +
                         to_string(probs.shape()));
  std::vector<std::size_t> picked;  // flat indices of the scored probabilities
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (!mask.empty() && mask[r] == 0) continue;
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= k)
      throw std::out_of_range("cross_entropy_masked: label " + std::to_string(labels[r]) + " at row " +
                              std::to_string(r) + " outside [0, " + std::to_string(k) + ")");
    const std::size_t i = r * k + static_cast<std::size_t>(labels[r]);
    picked.push_back(i);
    total -= std::log(probs.values()[i]);
  }
  Tensor out = Tensor::scalar(total);
  return finish(tape, out, {&probs}, [probs = probs, out, picked = std::move(picked)]() mutable {
    const double g = out.grad()[0];
    auto gp = probs.grad_mut();
    for (auto i : picked) gp[i] -= g / probs.values()[i];
  });
}

namespace testing {
void set_gradient_fault(bool enabled) { gradient_fault.store(enabled); }
}  // namespace testing

}  // namespace lotn::ag
