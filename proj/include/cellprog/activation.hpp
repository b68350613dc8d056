#pragma once

#include <string>

#include "cellprog/tensor.hpp"

namespace cellprog {

enum class Activation { kSigmoid, kGelu };

Tensor apply_activation(Activation act, const Tensor& x);
std::string activation_name(Activation act);
/// Accepts "sigmoid" or "gelu"; throws ErrorCode::kConfig otherwise.
Activation parse_activation(const std::string& name);

}  // namespace cellprog
