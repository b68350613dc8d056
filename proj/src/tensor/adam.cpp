#include "cellprog/adam.hpp"

#include <cmath>

#include "cellprog/error.hpp"

namespace cellprog {

AdamState AdamState::for_params(const ParamStore& params) {
  AdamState s;
  for (std::size_t i = 0; i < params.size(); ++i) {
    s.first_moment.emplace_back(params.at(i).numel(), 0.0);
    s.second_moment.emplace_back(params.at(i).numel(), 0.0);
  }
  return s;
}

void adam_step(ParamStore& params, AdamState& state, double lr) {
  if (!(lr > 0.0)) throw Error(ErrorCode::kConfig, "adam_step: learning rate must be positive");
  if (state.first_moment.size() != params.size()) {
    throw Error(ErrorCode::kDimension, "adam_step: optimizer state does not match parameter set");
  }
  for (std::size_t p = 0; p < params.size(); ++p) {
    const Tensor& t = params.at(p);
    if (state.first_moment[p].size() != t.numel()) {
      throw Error(ErrorCode::kDimension, "adam_step: moment buffer size mismatch for " + params.name(p));
    }
    if (!t.has_grad()) continue;
    for (double g : params.at(p).mutable_grad()) {
      if (!std::isfinite(g)) {
        throw Error(ErrorCode::kNumeric, "adam_step: non-finite gradient in parameter " + params.name(p));
      }
    }
  }

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& param = params.at(p);
    if (!param.has_grad()) continue;
    auto grad = param.mutable_grad();
    auto value = param.mutable_data();
    auto& m = state.first_moment[p];
    auto& v = state.second_moment[p];
    for (std::size_t i = 0; i < value.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * grad[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * grad[i] * grad[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      value[i] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

double global_grad_norm(const ParamStore& params) {
  double s = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (!params.at(p).has_grad()) continue;
    for (double g : params.at(p).grad()) s += g * g;
  }
  return std::sqrt(s);
}

double clip_grad_norm(ParamStore& params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (norm > max_norm && norm > 0.0) {
    const double f = max_norm / norm;
    for (std::size_t p = 0; p < params.size(); ++p) {
      if (!params.at(p).has_grad()) continue;
      for (auto& g : params.at(p).mutable_grad()) g *= f;
    }
  }
  return norm;
}

}  // namespace cellprog
