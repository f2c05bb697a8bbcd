#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "lotn/rng.hpp"
#include "lotn/tensor.hpp"

namespace lotn::ag {

/// Named parameters in registration order, with Adam moment buffers.
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    Tensor param;
    std::vector<double> first_moment;
    std::vector<double> second_moment;
  };

  // Registers an existing tensor; names must be unique.
  Tensor add(const std::string& name, Tensor param);
  // Registers a trainable tensor initialized from U(-scale, scale).
  Tensor create(const std::string& name, Shape shape, Rng& rng, double scale);

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const Tensor& get(const std::string& name) const;
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t parameter_count() const;
  std::int64_t step() const { return step_; }

  void zero_grad();
  // Marks every parameter non-trainable and drops gradients.
  void freeze();
  // Deep copy of the current values, for best-epoch snapshots.
  std::map<std::string, std::vector<double>> snapshot() const;
  void restore(const std::map<std::string, std::vector<double>>& values);

 private:
  friend struct Adam;
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
  std::int64_t step_ = 0;
};

struct Adam {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  // One bias-corrected update of every trainable parameter, then clears grads.
  // Throws if a trainable parameter has no gradient.
  void step(ParameterStore& store) const;
};

}  // namespace lotn::ag
