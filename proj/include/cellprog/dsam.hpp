#pragma once

// Dual-stream attention: a polarized-attention encoder block for the SOH
// stream and a sparse-attention encoder block for the RUL stream.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cellprog/activation.hpp"
#include "cellprog/params.hpp"
#include "cellprog/rng.hpp"
#include "cellprog/tensor.hpp"

namespace cellprog {

/// Divisor of the sampled-score sum in the sparsity measure.
enum class KeyMeanNorm {
  kSequenceLength,  // 1/L
  kSampleSize,      // 1/S
};

struct SparseConfig {
  std::size_t heads = 4;
  double c_u = 5.0;  // query budget U = min(L, max(1, ceil(c_u ln L)))
  double c_s = 5.0;  // key sample S = min(L, max(1, ceil(c_s ln L)))
  KeyMeanNorm mean_norm = KeyMeanNorm::kSequenceLength;
};

struct FfnConfig {
  std::size_t hidden = 64;
  Activation activation = Activation::kSigmoid;
};

struct DsamConfig {
  std::size_t channels = 64;  // F
  SparseConfig sparse;
  FfnConfig ffn;

  /// F must be even and divisible by the head count.
  void validate() const;
};

std::size_t query_budget(std::size_t len, double c_u);
std::size_t key_sample_size(std::size_t len, double c_s);

/// Registers dsam.pa.* and dsam.sa.*.
void dsam_init(ParamStore& params, const DsamConfig& config, Rng& rng);

// ---- polarized attention -------------------------------------------------

struct PolarizedTrace {
  Tensor channel_weights;  // 1 x F
  Tensor spatial_weights;  // L x 1
};

/// Channel branch then spatial branch, in series. Optionally exposes the two
/// sigmoid weight maps.
Tensor polarized_attention(const Tensor& x, const ParamStore& params, const DsamConfig& config,
                           PolarizedTrace* trace = nullptr);

// ---- sparse attention ----------------------------------------------------------

/// Sparsity measure of every query row against the sampled key rows:
/// max_j s_ij - norm * sum_j s_ij with s_ij = q_i . k_j / sqrt(d).
std::vector<double> sparsity_measure(const Tensor& q, const Tensor& k, const std::vector<std::size_t>& key_rows,
                                     KeyMeanNorm norm);

/// Indices of the `budget` largest measures, largest first; lower index wins ties.
std::vector<std::size_t> select_top_queries(const std::vector<double>& measure, std::size_t budget);

/// Full softmax attention for the selected query rows; every other row is the
/// column mean of v.
Tensor sparse_attention_head(const Tensor& q, const Tensor& k, const Tensor& v,
                             const std::vector<std::size_t>& selected);

/// Key rows sampled without replacement for one head.
std::vector<std::size_t> sample_key_rows(std::size_t len, std::size_t count, std::uint64_t seed);

Tensor sparse_attention(const Tensor& x, const ParamStore& params, const DsamConfig& config, std::uint64_t seed);

// ---- encoder wrapping ------------------------------------------------------------

using AttentionFn = std::function<Tensor(const Tensor&)>;

/// a = LN(attention(x) + x); out = LN(ffn(a) + a). `prefix` names the block's
/// norm1, ffn and norm2 parameters.
Tensor encoder_block(const Tensor& x, const AttentionFn& attention, const ParamStore& params, const std::string& prefix,
                     const FfnConfig& ffn);

struct DsamStreams {
  Tensor soh;
  Tensor rul;
};

DsamStreams dsam_forward(const Tensor& x, const ParamStore& params, const DsamConfig& config, std::uint64_t seed);

}  // namespace cellprog
