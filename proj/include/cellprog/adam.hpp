#pragma once

#include <cstdint>
#include <vector>

#include "cellprog/params.hpp"

namespace cellprog {

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;

  /// Zeroed moment buffers shaped like `params`.
  static AdamState for_params(const ParamStore& params);
};

/// One bias-corrected Adam update using the grads currently held by `params`.
/// Throws ErrorCode::kNumeric naming the parameter if any grad is non-finite;
/// in that case nothing is modified.
void adam_step(ParamStore& params, AdamState& state, double lr);

/// L2 norm over all parameter grads.
double global_grad_norm(const ParamStore& params);
/// Rescales grads so their global norm is at most max_norm. Returns the pre-clip norm.
double clip_grad_norm(ParamStore& params, double max_norm);

}  // namespace cellprog
