#pragma once

#include <string>
#include <vector>

#include "cellprog/rng.hpp"
#include "cellprog/tensor.hpp"

namespace cellprog {

/// Ordered name -> tensor map holding every learnable parameter of a model.
/// Insertion order is the canonical order for checkpoints and optimizers.
class ParamStore {
 public:
  /// Registers a new leaf parameter; names must be unique.
  Tensor& add(const std::string& name, Tensor value);

  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::size_t size() const { return entries_.size(); }
  const std::string& name(std::size_t i) const { return entries_[i].name; }
  Tensor& at(std::size_t i) { return entries_[i].tensor; }
  const Tensor& at(std::size_t i) const { return entries_[i].tensor; }

  std::size_t total_values() const;
  void zero_grad();
  /// Sets every value of every parameter to zero.
  void zero_values();
  /// Deep copy with fresh leaves (no shared storage).
  ParamStore clone() const;

 private:
  struct Entry {
    std::string name;
    Tensor tensor;
  };
  std::vector<Entry> entries_;
};

namespace init {

/// Uniform(-sqrt(6/fan_in), sqrt(6/fan_in)).
Tensor kaiming_uniform(Shape shape, std::size_t fan_in, Rng& rng);
/// Rows x cols matrix with orthonormal columns (or rows, whichever is fewer).
Tensor orthogonal(std::size_t rows, std::size_t cols, Rng& rng);

}  // namespace init

}  // namespace cellprog
