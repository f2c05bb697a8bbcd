#include "lotn/tensor.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

namespace lotn::ag {

std::string to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape.empty() || shape.size() > 2)
    throw DimensionError("tensor: rank must be 1 or 2, got " + to_string(shape));
  for (auto d : shape)
    if (d == 0) throw DimensionError("tensor: zero dimension in " + to_string(shape));
  if (values.size() != element_count(shape))
    throw DimensionError("tensor: " + std::to_string(values.size()) +
                         " values do not fill shape " + to_string(shape));
  impl_ = std::make_shared<Impl>();
  impl_->shape = std::move(shape);
  impl_->values = std::move(values);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = element_count(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return impl_->shape; }
std::size_t Tensor::size() const { return impl_->values.size(); }
std::size_t Tensor::rows() const { return impl_->shape.size() == 2 ? impl_->shape[0] : 1; }
std::size_t Tensor::cols() const { return impl_->shape.back(); }

std::span<const double> Tensor::values() const { return impl_->values; }
std::span<double> Tensor::values_mut() { return impl_->values; }

double Tensor::item() const {
  if (size() != 1) throw DimensionError("item: tensor of shape " + to_string(shape()) + " is not scalar");
  return impl_->values[0];
}

bool Tensor::requires_grad() const { return impl_->requires_grad; }
void Tensor::set_requires_grad(bool flag) { impl_->requires_grad = flag; }

bool Tensor::has_grad() const { return impl_->has_grad; }

std::span<const double> Tensor::grad() const {
  if (!impl_->has_grad) return {};
  return impl_->grad;
}

std::span<double> Tensor::grad_mut() {
  if (!impl_->has_grad) {
    impl_->grad.assign(impl_->values.size(), 0.0);
    impl_->has_grad = true;
  }
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (impl_->has_grad) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

void Tensor::clear_grad() {
  impl_->has_grad = false;
  impl_->grad.clear();
}

Tensor Tensor::clone() const {
  Tensor out(impl_->shape, impl_->values, impl_->requires_grad);
  if (impl_->has_grad) {
    out.impl_->grad = impl_->grad;
    out.impl_->has_grad = true;
  }
  return out;
}

Tensor Tensor::detach() const { return Tensor(impl_->shape, impl_->values, false); }

}  // namespace lotn::ag
