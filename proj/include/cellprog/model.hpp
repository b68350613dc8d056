#pragma once

// FEM -> IE-LSTM -> DSAM -> two task heads, producing SOH and RUL for one
// aligned charge-voltage sequence, plus the joint training loss.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cellprog/activation.hpp"
#include "cellprog/dsam.hpp"
#include "cellprog/fem.hpp"
#include "cellprog/ielstm.hpp"
#include "cellprog/params.hpp"
#include "cellprog/rng.hpp"
#include "cellprog/tensor.hpp"

namespace cellprog {

struct ModelConfig {
  std::size_t seq_len = 200;       // L
  std::size_t fem_channels = 64;   // F
  std::size_t lstm_hidden = 128;   // H
  std::size_t task_hidden = 128;
  std::size_t ffn_hidden = 64;
  std::size_t heads = 4;
  double sparse_c_u = 5.0;
  double sparse_c_s = 5.0;
  KeyMeanNorm key_mean_norm = KeyMeanNorm::kSequenceLength;
  Activation ffn_activation = Activation::kSigmoid;
  Activation head_activation = Activation::kGelu;
  double rul_scale = 1.0;   // cycles per unit of normalized RUL
  double rul_weight = 1.0;  // weight of the RUL term in the joint loss
  double input_mean = 0.0;  // voltages are standardized before the FEM
  double input_std = 1.0;
  std::uint64_t attention_seed = 0;  // key sampling of the sparse stream

  /// Throws ErrorCode::kConfig on any non-positive size or indivisible width.
  void validate() const;

  FemConfig fem() const;
  IeLstmConfig ielstm() const;
  DsamConfig dsam() const;

  /// key=value lines, one per field.
  std::string to_text() const;
  static ModelConfig from_text(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static ModelConfig load(const std::filesystem::path& path);

  bool operator==(const ModelConfig&) const = default;
};

struct ModelOutput {
  Tensor soh;       // 1 x 1
  Tensor rul_norm;  // 1 x 1
};

struct Prediction {
  double soh_hat = 0.0;
  double rul_hat_norm = 0.0;
  double rul_hat = 0.0;  // rul_hat_norm * rul_scale
};

struct Target {
  double soh = 0.0;
  std::optional<double> rul_norm;
};

/// Registers fem.*, ielstm.*, dsam.*, head.soh.* and head.rul.*.
void model_init(ParamStore& params, const ModelConfig& config, Rng& rng);

/// Mean-pool over rows, linear to `hidden`, activation, linear to 1.
Tensor task_head(const Tensor& x, const ParamStore& params, const std::string& prefix, Activation act);

/// x: L x 1 raw voltages. Throws ErrorCode::kDimension before any compute
/// when the shape does not match the config.
ModelOutput model_forward_graph(const Tensor& x, const ParamStore& params, const ModelConfig& config,
                                std::uint64_t seed);

Prediction model_forward(const Tensor& x, const ParamStore& params, const ModelConfig& config, std::uint64_t seed);

/// Predictions for many sequences without recording a graph.
std::vector<Prediction> predict_all(const std::vector<std::vector<double>>& sequences, const ParamStore& params,
                                    const ModelConfig& config, std::uint64_t seed);

/// MSE(soh) + rul_weight * MSE(rul_norm), the RUL mean running over labelled
/// samples only. Throws ErrorCode::kUsage on an empty or mismatched batch.
Tensor joint_loss(const std::vector<ModelOutput>& predictions, const std::vector<Target>& targets,
                  double rul_weight = 1.0);

/// The two terms of joint_loss as plain numbers (rul term 0 without labels).
struct LossParts {
  double soh = 0.0;
  double rul = 0.0;
};
LossParts joint_loss_parts(const std::vector<ModelOutput>& predictions, const std::vector<Target>& targets);

}  // namespace cellprog
