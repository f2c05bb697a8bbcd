#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lotn::ag {

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);
std::size_t element_count(const Shape& shape);

/// Raised when an operation receives operands of incompatible shape.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Dense row-major array of doubles with an optional gradient buffer.
///
/// A Tensor is a handle: copies share storage, which is how the tape refers
/// back to operands. Use clone() for an independent copy. Rank 1 tensors act
/// as a single row wherever a matrix is expected.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;
  // Matrix view: rank 2 is [rows x cols], rank 1 is [1 x n].
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> values() const;
  std::span<double> values_mut();
  double item() const;
  double at(std::size_t r, std::size_t c) const { return values()[r * cols() + c]; }

  bool requires_grad() const;
  void set_requires_grad(bool flag);

  bool has_grad() const;
  std::span<const double> grad() const;
  // Allocates a zero buffer on first use.
  std::span<double> grad_mut();
  void zero_grad();
  void clear_grad();

  Tensor clone() const;
  Tensor detach() const;
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  struct Impl {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;
    bool requires_grad = false;
    bool has_grad = false;
  };
  std::shared_ptr<Impl> impl_;
};

}  // namespace lotn::ag
