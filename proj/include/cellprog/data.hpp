#pragma once

// Cycle-level battery data: canonical CSV ingestion, length alignment,
// SOH/RUL labelling, charge-curve feature factors and a synthetic corpus.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace cellprog {

struct CycleRecord {
  std::int64_t cycle_index = 0;
  std::vector<double> times;     // s, strictly increasing
  std::vector<double> voltages;  // V
  double capacity = 0.0;         // Ah

  bool operator==(const CycleRecord&) const = default;
};

struct CellManifest {
  std::string cell_id;
  double rated_capacity_ah = 0.0;
  double eol_threshold_ah = 0.0;
  double saturation_voltage_v = 4.2;
  std::size_t target_len = 0;  // 0: not specified

  bool operator==(const CellManifest&) const = default;
};

struct CellDataset {
  CellManifest manifest;
  std::vector<CycleRecord> cycles;

  const std::string& id() const { return manifest.cell_id; }
  /// Throws ErrorCode::kData on any violated invariant.
  void validate() const;

  bool operator==(const CellDataset&) const = default;
};

struct LabeledCell {
  std::vector<double> soh;
  std::vector<std::optional<std::int64_t>> rul;  // absent past EOL or when EOL is never reached
  std::optional<std::int64_t> n_eol;            // cycle index of the first capacity below EOL

  bool has_rul() const { return n_eol.has_value(); }
};

// ---- canonical files ----------------------------------------------------------
//
// <dir>/<cell_id>.cycles.csv   header "cycle,t,v"
// <dir>/<cell_id>.labels.csv   header "cycle,capacity_ah"
// <dir>/<cell_id>.manifest     key=value lines

CellManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const CellManifest& manifest);

CellDataset load_cell(const std::filesystem::path& cycles_path, const std::filesystem::path& labels_path,
                      const CellManifest& manifest);
CellDataset load_cell_dir(const std::filesystem::path& dir, const std::string& cell_id);
/// Loads every cell with a manifest in `dir`, sorted by id.
std::vector<CellDataset> load_cells(const std::filesystem::path& dir);
void write_cell(const std::filesystem::path& dir, const CellDataset& cell);

/// Shortest round-trip decimal representation.
std::string format_double(double v);

// ---- alignment --------------------------------------------------------------

/// Stretches `v` to `target_len` samples by inserting target_len - len(v)
/// points at positions round(j * len / (count + 1)), j = 1..count (clamped to
/// interior gaps). Each inserted point is the mean of the two original
/// neighbours around its gap.
std::vector<double> interpolate_to_length(const std::vector<double>& v, std::size_t target_len);

/// Same insertion positions for the time axis, but inserted times are evenly
/// spaced inside each gap so the axis stays strictly increasing.
std::vector<double> interpolate_times_to_length(const std::vector<double>& t, std::size_t target_len);

CycleRecord align_cycle(const CycleRecord& cycle, std::size_t target_len);
CellDataset align_cell(const CellDataset& cell, std::size_t target_len);

// ---- labels -------------------------------------------------------------------

LabeledCell derive_labels(const CellDataset& cell);

// ---- feature factors -------------------------------------------------------

struct FeatureFactors {
  double onset_to_peak_s = 0.0;   // first CC sample to CC voltage maximum
  double plateau_s = 0.0;         // time spent within [3.9, 4.1] V
  double rise_slope_v_per_s = 0.0;  // least-squares dV/dt over CC samples in [3.6, 4.0] V
  double cc_integral_vs = 0.0;    // trapezoidal integral of V dt over the CC phase
  bool slope_degenerate = false;  // fewer than 2 samples in the slope window

  static constexpr std::size_t kCount = 4;
  std::vector<double> as_vector() const { return {onset_to_peak_s, plateau_s, rise_slope_v_per_s, cc_integral_vs}; }
};

/// The CC phase is the prefix before the first sample at or above
/// `saturation_voltage`.
FeatureFactors extract_feature_factors(const CycleRecord& cycle, double saturation_voltage);

/// Pearson correlation; throws on length mismatch, n < 2 or zero variance.
double pearson(const std::vector<double>& x, const std::vector<double>& y);

// ---- synthetic corpus -------------------------------------------------------------

struct SynthOptions {
  std::uint64_t seed = 7;
  std::size_t n_cells = 4;
  std::size_t n_cycles = 60;
  std::size_t seq_len = 200;
  double regen_rate = 0.05;
  double rated_capacity_ah = 2.0;
  double eol_threshold_ah = 1.4;
  double saturation_voltage_v = 4.2;
  double sample_period_s = 10.0;
};

/// Double-exponential capacity fade with optional regeneration jumps; each
/// cycle's charge curve is a CC ramp plus CV plateau whose shape tracks the
/// cell's SOH and fade rate. Raw cycles are at most seq_len samples long.
std::vector<CellDataset> synth_cells(const SynthOptions& options);

}  // namespace cellprog
