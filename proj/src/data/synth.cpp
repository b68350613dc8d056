#include <algorithm>
#include <cmath>
#include <cstdio>

#include "cellprog/data.hpp"
#include "cellprog/error.hpp"
#include "cellprog/rng.hpp"

namespace cellprog {

namespace {

struct FadeShape {
  double a, b, c, d;
  double eol_fraction;  // where the main term alone reaches ~0.66, as a fraction of the run

  double operator()(double i) const { return a * std::exp(b * i) + c * std::exp(d * i); }
};

FadeShape draw_fade(Rng& rng, std::size_t n_cycles) {
  FadeShape f{};
  f.c = rng.uniform(0.01, 0.04);
  f.a = rng.uniform(0.975, 1.0) - f.c;
  f.eol_fraction = rng.uniform(0.7, 0.9);
  f.b = std::log(0.66 / f.a) / (f.eol_fraction * static_cast<double>(n_cycles));
  f.d = -rng.uniform(3.0, 9.0) / static_cast<double>(n_cycles);
  return f;
}

// CC ramp from an SOH-dependent onset voltage to saturation, then a flat CV
// plateau. Both phases scale with SOH; the ramp's curvature encodes the cell's
// fade rate so that RUL is recoverable from a single cycle.
CycleRecord charge_curve(std::int64_t index, double soh, double rate_code, double capacity,
                         const SynthOptions& opt, Rng& rng) {
  const double len = static_cast<double>(opt.seq_len);
  const auto n_cc = static_cast<std::size_t>(std::max(3.0, std::round(0.55 * len * soh)));
  const auto n_cv = static_cast<std::size_t>(std::max(2.0, std::round(0.35 * len * soh)));
  const double vsat = opt.saturation_voltage_v;
  const double v0 = 3.45 + 0.35 * (1.0 - soh);
  const double kappa = 1.0 + 3.0 * rate_code;
  const double norm = 1.0 - std::exp(-kappa);

  CycleRecord rec;
  rec.cycle_index = index;
  rec.capacity = capacity;
  const std::size_t n = std::min(n_cc + n_cv, opt.seq_len);
  for (std::size_t k = 0; k < n; ++k) {
    rec.times.push_back(opt.sample_period_s * static_cast<double>(k));
    double v;
    if (k < n_cc) {
      const double s = static_cast<double>(k) / static_cast<double>(n_cc);
      v = v0 + (vsat - v0) * (1.0 - std::exp(-kappa * s)) / norm + 5e-4 * rng.normal();
      v = std::min(v, vsat - 1e-4);
    } else {
      v = vsat;
    }
    rec.voltages.push_back(v);
  }
  return rec;
}

}  // namespace

std::vector<CellDataset> synth_cells(const SynthOptions& opt) {
  if (opt.n_cells == 0 || opt.n_cycles == 0 || opt.seq_len < 5) {
    throw Error(ErrorCode::kConfig, "synth: cells and cycles must be positive and seq_len >= 5");
  }
  if (opt.regen_rate < 0.0 || opt.regen_rate > 1.0) throw Error(ErrorCode::kConfig, "synth: regen_rate must be in [0,1]");

  std::vector<CellDataset> cells;
  for (std::size_t k = 0; k < opt.n_cells; ++k) {
    Rng rng(mix_seed(opt.seed, k));
    const FadeShape fade = draw_fade(rng, opt.n_cycles);
    const double rate_code = (fade.eol_fraction - 0.7) / 0.2;

    CellDataset cell;
    char id[32];
    std::snprintf(id, sizeof(id), "SYN%02zu", k + 1);
    cell.manifest.cell_id = id;
    cell.manifest.rated_capacity_ah = opt.rated_capacity_ah;
    cell.manifest.eol_threshold_ah = opt.eol_threshold_ah;
    cell.manifest.saturation_voltage_v = opt.saturation_voltage_v;
    cell.manifest.target_len = opt.seq_len;

    double base = fade(0.0);
    double regen = 0.0;
    for (std::size_t i = 0; i < opt.n_cycles; ++i) {
      if (i > 0) {
        const double step = fade(static_cast<double>(i - 1)) - fade(static_cast<double>(i));
        base -= step * rng.uniform(0.5, 1.5);
        regen *= 0.5;
        if (rng.uniform() < opt.regen_rate) regen += rng.uniform(0.005, 0.02);
      }
      const double soh = base + regen;
      cell.cycles.push_back(
          charge_curve(static_cast<std::int64_t>(i), soh, rate_code, opt.rated_capacity_ah * soh, opt, rng));
    }
    cells.push_back(std::move(cell));
  }
  return cells;
}

}  // namespace cellprog
