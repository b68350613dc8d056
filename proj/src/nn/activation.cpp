#include "cellprog/activation.hpp"

#include "cellprog/error.hpp"

namespace cellprog {

Tensor apply_activation(Activation act, const Tensor& x) {
  return act == Activation::kSigmoid ? sigmoid(x) : gelu(x);
}

std::string activation_name(Activation act) { return act == Activation::kSigmoid ? "sigmoid" : "gelu"; }

Activation parse_activation(const std::string& name) {
  if (name == "sigmoid") return Activation::kSigmoid;
  if (name == "gelu") return Activation::kGelu;
  throw Error(ErrorCode::kConfig, "unknown activation '" + name + "' (expected sigmoid or gelu)");
}

}  // namespace cellprog
