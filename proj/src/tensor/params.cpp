#include "cellprog/params.hpp"

#include <cmath>

#include "cellprog/error.hpp"

namespace cellprog {

Tensor& ParamStore::add(const std::string& name, Tensor value) {
  if (contains(name)) throw Error(ErrorCode::kConfig, "duplicate parameter name: " + name);
  value.set_requires_grad(true);
  entries_.push_back({name, std::move(value)});
  return entries_.back().tensor;
}

Tensor& ParamStore::get(const std::string& name) {
  for (auto& e : entries_)
    if (e.name == name) return e.tensor;
  throw Error(ErrorCode::kConfig, "unknown parameter: " + name);
}

const Tensor& ParamStore::get(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return e.tensor;
  throw Error(ErrorCode::kConfig, "unknown parameter: " + name);
}

bool ParamStore::contains(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return true;
  return false;
}

std::size_t ParamStore::total_values() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.numel();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

void ParamStore::zero_values() {
  for (auto& e : entries_)
    for (auto& v : e.tensor.mutable_data()) v = 0.0;
}

ParamStore ParamStore::clone() const {
  ParamStore out;
  for (const auto& e : entries_) {
    out.add(e.name, Tensor::from(e.tensor.shape(),
                                 std::vector<double>(e.tensor.data().begin(), e.tensor.data().end())));
  }
  return out;
}

namespace init {

Tensor kaiming_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return Tensor::from(std::move(shape), std::move(v));
}

Tensor orthogonal(std::size_t rows, std::size_t cols, Rng& rng) {
  // Gram-Schmidt on a Gaussian matrix, orthonormalizing along the shorter side.
  const bool by_cols = rows >= cols;
  const std::size_t n_vec = by_cols ? cols : rows;
  const std::size_t len = by_cols ? rows : cols;
  std::vector<std::vector<double>> basis;
  while (basis.size() < n_vec) {
    std::vector<double> v(len);
    for (auto& x : v) x = rng.normal();
    for (const auto& b : basis) {
      double d = 0.0;
      for (std::size_t i = 0; i < len; ++i) d += v[i] * b[i];
      for (std::size_t i = 0; i < len; ++i) v[i] -= d * b[i];
    }
    double nrm = 0.0;
    for (double x : v) nrm += x * x;
    nrm = std::sqrt(nrm);
    if (nrm < 1e-10) continue;
    for (auto& x : v) x /= nrm;
    basis.push_back(std::move(v));
  }
  std::vector<double> out(rows * cols);
  for (std::size_t k = 0; k < n_vec; ++k)
    for (std::size_t i = 0; i < len; ++i) {
      if (by_cols)
        out[i * cols + k] = basis[k][i];
      else
        out[k * cols + i] = basis[k][i];
    }
  return Tensor::from({rows, cols}, std::move(out));
}

}  // namespace init

}  // namespace cellprog
