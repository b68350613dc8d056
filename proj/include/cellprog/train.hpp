#pragma once

// Training loop (Adam, joint MSE loss, warmup then geometric LR decay),
// leave-cells-out partitioning and per-cell prediction.

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "cellprog/data.hpp"
#include "cellprog/model.hpp"
#include "cellprog/params.hpp"

namespace cellprog {

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  double base_lr = 1e-4;
  std::size_t warmup_epochs = 7;
  double decay = 0.75;
  double grad_clip_norm = 1.0;  // 0 disables clipping
  std::uint64_t seed = 1;

  /// Throws ErrorCode::kConfig unless warmup_epochs < epochs and every rate
  /// and size is positive.
  void validate() const;

  std::string to_text() const;
  static TrainConfig from_text(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static TrainConfig load(const std::filesystem::path& path);

  bool operator==(const TrainConfig&) const = default;
};

/// base/8 at epoch 0 rising linearly to base at warmup_epochs, then
/// base * decay^(e - warmup_epochs). Throws ErrorCode::kUsage outside
/// [0, epochs).
double lr_at_epoch(std::size_t epoch, const TrainConfig& config);

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  double soh_loss = 0.0;
  double rul_loss = 0.0;
  double seconds = 0.0;  // wall time, the only non-reproducible field
};

struct TrainLog {
  std::uint64_t seed = 0;
  std::string config_hash;
  std::vector<EpochRecord> epochs;

  /// "epoch,lr,loss,soh_loss,rul_loss,seconds" plus one row per epoch.
  std::string to_csv() const;
};

/// One aligned cycle with its targets.
struct Sample {
  std::string cell_id;
  std::int64_t cycle_index = 0;
  std::vector<double> voltages;
  Target target;
};

/// Samples for every cycle with index >= first_cycle. RUL targets are
/// divided by rul_scale.
std::vector<Sample> make_samples(const CellDataset& cell, double rul_scale,
                                 std::int64_t first_cycle = std::numeric_limits<std::int64_t>::min());

struct TrainResult {
  ModelConfig model;  // with rul_scale and input statistics filled in
  ParamStore params;  // final parameters
  ParamStore best_params;
  double best_loss = 0.0;
  std::size_t best_epoch = 0;
  TrainLog log;
};

/// Trains on every cycle of `cells` (each already aligned to model.seq_len).
/// Sets rul_scale to the largest EOL cycle index among the cells and the
/// input statistics to the mean and standard deviation of all voltages. When
/// `out_dir` is given, writes best.cpg, final.cpg, model.cfg, run.cfg and
/// train_log.csv there. A non-finite loss aborts with ErrorCode::kNumeric
/// naming the batch's sample indices and the learning rate.
TrainResult train_run(const std::vector<CellDataset>& cells, ModelConfig model, const TrainConfig& config,
                      const std::optional<std::filesystem::path>& out_dir = std::nullopt);

struct Split {
  std::vector<CellDataset> train;
  std::vector<CellDataset> test;
  std::int64_t observation_cycle = 0;
};

/// Leave-cells-out split. Throws ErrorCode::kUsage when a held-out id is not
/// among `cells` or when nothing is left to train on.
Split partition(const std::vector<CellDataset>& cells, const std::vector<std::string>& hold_out,
                std::int64_t observation_cycle);

/// Every leave-one-cell-out split, in cell order.
std::vector<Split> leave_one_out_splits(const std::vector<CellDataset>& cells, std::int64_t observation_cycle);

struct CellPredictions {
  std::string cell_id;
  std::vector<std::int64_t> cycles;
  std::vector<double> soh_true, soh_hat;
  std::vector<double> capacity_true, capacity_hat;
  std::vector<std::optional<double>> rul_true;  // cycles; absent past EOL or without EOL
  std::vector<double> rul_hat;                  // cycles
  bool has_rul = false;                         // the cell reaches EOL
};

/// Predicts every cycle with index >= observation_cycle. Throws
/// ErrorCode::kData when no cycle qualifies.
CellPredictions predict_cell(const CellDataset& cell, const ParamStore& params, const ModelConfig& model,
                             std::int64_t observation_cycle);

/// FNV-1a of the text, as 16 hex digits.
std::string text_hash(const std::string& text);

}  // namespace cellprog
