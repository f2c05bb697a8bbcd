#include "lotn/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace lotn::ag {

Tensor ParameterStore::add(const std::string& name, Tensor param) {
  if (!param.defined()) throw std::invalid_argument("parameter store: undefined tensor for " + name);
  if (!index_.emplace(name, entries_.size()).second)
    throw std::invalid_argument("parameter store: duplicate name " + name);
  entries_.push_back({name, param, std::vector<double>(param.size(), 0.0), std::vector<double>(param.size(), 0.0)});
  return param;
}

Tensor ParameterStore::create(const std::string& name, Shape shape, Rng& rng, double scale) {
  Tensor t = Tensor::zeros(std::move(shape), true);
  rng.fill_uniform(t.values_mut(), -scale, scale);
  return add(name, t);
}

const Tensor& ParameterStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("parameter store: no parameter named " + name);
  return entries_[it->second].param;
}

std::size_t ParameterStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.param.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& e : entries_) e.param.clear_grad();
}

void ParameterStore::freeze() {
  for (auto& e : entries_) {
    e.param.set_requires_grad(false);
    e.param.clear_grad();
  }
}

std::map<std::string, std::vector<double>> ParameterStore::snapshot() const {
  std::map<std::string, std::vector<double>> out;
  for (const auto& e : entries_) out[e.name].assign(e.param.values().begin(), e.param.values().end());
  return out;
}

void ParameterStore::restore(const std::map<std::string, std::vector<double>>& values) {
  for (auto& e : entries_) {
    auto it = values.find(e.name);
    if (it == values.end()) throw std::out_of_range("parameter store: snapshot lacks " + e.name);
    if (it->second.size() != e.param.size())
      throw DimensionError("parameter store: snapshot size mismatch for " + e.name);
    std::copy(it->second.begin(), it->second.end(), e.param.values_mut().begin());
  }
}

void Adam::step(ParameterStore& store) const {
  for (const auto& e : store.entries_)
    if (e.param.requires_grad() && !e.param.has_grad())
      throw std::logic_error("adam: trainable parameter " + e.name + " has no gradient");
  ++store.step_;
  const double t = static_cast<double>(store.step_);
  const double correction1 = 1.0 - std::pow(beta1, t);
  const double correction2 = 1.0 - std::pow(beta2, t);
  for (auto& e : store.entries_) {
    if (!e.param.requires_grad()) continue;
    auto w = e.param.values_mut();
    auto g = e.param.grad();
    for (std::size_t i = 0; i < w.size(); ++i) {
      e.first_moment[i] = beta1 * e.first_moment[i] + (1.0 - beta1) * g[i];
      e.second_moment[i] = beta2 * e.second_moment[i] + (1.0 - beta2) * g[i] * g[i];
      const double m_hat = e.first_moment[i] / correction1;
      const double v_hat = e.second_moment[i] / correction2;
      w[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
    e.param.clear_grad();
  }
}

}  // namespace lotn::ag
