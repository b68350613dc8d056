#pragma once

// Improved extended LSTM block: pre-gate layer norm + convolution, an
// exponentially gated recurrence with stabilizer state m and normalizer state
// n, a gated output projection and a residual connection.

#include <vector>

#include "cellprog/params.hpp"
#include "cellprog/rng.hpp"
#include "cellprog/tensor.hpp"

namespace cellprog {

struct IeLstmConfig {
  std::size_t channels = 64;  // F, input and output width
  std::size_t hidden = 128;   // H, also the projection width

  void validate() const;
};

struct CellState {
  std::vector<double> h, c, n, m;

  static CellState zeros(std::size_t hidden);
};

/// Gate pre-activations for one step: i and f from (h_{t-1}, x~_t),
/// z and o from (h_{t-1}, x_t).
struct GatePreacts {
  std::vector<double> i, f, z, o;
};

/// Post-activation gate values of one step, kept for backpropagation.
struct GateTrace {
  std::vector<double> i, f, z, o;
  std::vector<bool> m_from_forget;  // m_t took the f~ + m_{t-1} branch (ties included)
};

/// h_t = o_t * c_t / max(n_t, kHiddenDivGuard).
inline constexpr double kHiddenDivGuard = 1e-8;

/// One stabilized recurrence step. Throws ErrorCode::kNumeric when a state
/// leaves the finite range or n_t is not positive; `step` is 1-based and only
/// used in the message.
CellState cell_step_from_preacts(const CellState& prev, const GatePreacts& pre, std::size_t step = 1,
                                 GateTrace* trace = nullptr);

/// Computes pre-activations from the block's gate parameters, then steps.
CellState cell_step(const std::vector<double>& x_t, const std::vector<double>& x_tilde_t, const CellState& prev,
                    const ParamStore& params, const IeLstmConfig& config, std::size_t step = 1);

/// Registers ielstm.norm.*, ielstm.conv.*, ielstm.gates.*, ielstm.proj.*.
void ielstm_init(ParamStore& params, const IeLstmConfig& config, Rng& rng);

/// x~ = conv1d(layer_norm(x)), kernel 3, F -> F.
Tensor pregate(const Tensor& x, const ParamStore& params, const IeLstmConfig& config);

/// Runs the recurrence over all rows. pre_if: L x 2H input-side
/// pre-activations of the i and f gates, pre_zo: L x 2H of the z and o gates,
/// recurrent: H x 4H with column blocks ordered i, f, z, o. Returns the
/// stacked hidden states, L x H. Differentiable in all three inputs.
Tensor lstm_recurrence(const Tensor& pre_if, const Tensor& pre_zo, const Tensor& recurrent);

/// Full block: projection of the hidden states plus the residual input.
Tensor ielstm_forward(const Tensor& x, const ParamStore& params, const IeLstmConfig& config);

}  // namespace cellprog
