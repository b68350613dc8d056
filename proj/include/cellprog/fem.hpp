#pragma once

// Four-branch multi-scale convolutional feature extractor: L x 1 -> L x F.

#include "cellprog/params.hpp"
#include "cellprog/rng.hpp"
#include "cellprog/tensor.hpp"

namespace cellprog {

struct FemConfig {
  std::size_t channels = 64;  // F, split evenly over four branches

  /// Throws ErrorCode::kConfig unless F is a positive multiple of 4.
  void validate() const;
};

/// Registers fem.br{1..4}.conv{a,b}.{w,b}.
void fem_init(ParamStore& params, const FemConfig& config, Rng& rng);

/// Br1: conv k1. Br2: conv k1, conv k3. Br3: conv k1, conv k5.
/// Br4: maxpool k3, conv k1. GeLU follows every conv; branches are
/// concatenated along channels in order.
Tensor fem_forward(const Tensor& x, const ParamStore& params, const FemConfig& config);

}  // namespace cellprog
