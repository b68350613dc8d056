#include <cmath>

#include "cellprog/data.hpp"
#include "cellprog/error.hpp"

namespace cellprog {

namespace {

// Number of points inserted into each gap; gap p sits between original
// samples p-1 and p (p = 1..n-1).
std::vector<std::size_t> insertions_per_gap(std::size_t n, std::size_t target_len) {
  if (n < 2) throw Error(ErrorCode::kData, "interpolation needs at least 2 samples, got " + std::to_string(n));
  if (n > target_len) {
    throw Error(ErrorCode::kData, "sequence of length " + std::to_string(n) + " exceeds target length " +
                                      std::to_string(target_len) + "; alignment only inserts points");
  }
  const std::size_t count = target_len - n;
  std::vector<std::size_t> per_gap(n, 0);
  for (std::size_t j = 1; j <= count; ++j) {
    const double pos = static_cast<double>(j) * static_cast<double>(n) / static_cast<double>(count + 1);
    auto p = static_cast<std::size_t>(std::llround(pos));
    p = std::clamp<std::size_t>(p, 1, n - 1);
    ++per_gap[p];
  }
  return per_gap;
}

}  // namespace

std::vector<double> interpolate_to_length(const std::vector<double>& v, std::size_t target_len) {
  const auto per_gap = insertions_per_gap(v.size(), target_len);
  std::vector<double> out;
  out.reserve(target_len);
  out.push_back(v[0]);
  for (std::size_t p = 1; p < v.size(); ++p) {
    const double mid = 0.5 * (v[p - 1] + v[p]);
    out.insert(out.end(), per_gap[p], mid);
    out.push_back(v[p]);
  }
  return out;
}

std::vector<double> interpolate_times_to_length(const std::vector<double>& t, std::size_t target_len) {
  const auto per_gap = insertions_per_gap(t.size(), target_len);
  std::vector<double> out;
  out.reserve(target_len);
  out.push_back(t[0]);
  for (std::size_t p = 1; p < t.size(); ++p) {
    const double step = (t[p] - t[p - 1]) / static_cast<double>(per_gap[p] + 1);
    for (std::size_t k = 1; k <= per_gap[p]; ++k) out.push_back(t[p - 1] + step * static_cast<double>(k));
    out.push_back(t[p]);
  }
  return out;
}

CycleRecord align_cycle(const CycleRecord& cycle, std::size_t target_len) {
  if (cycle.voltages.size() > target_len) {
    throw Error(ErrorCode::kData, "cycle " + std::to_string(cycle.cycle_index) + " has " +
                                      std::to_string(cycle.voltages.size()) + " samples, more than target length " +
                                      std::to_string(target_len));
  }
  CycleRecord out = cycle;
  out.times = interpolate_times_to_length(cycle.times, target_len);
  out.voltages = interpolate_to_length(cycle.voltages, target_len);
  return out;
}

CellDataset align_cell(const CellDataset& cell, std::size_t target_len) {
  CellDataset out;
  out.manifest = cell.manifest;
  out.manifest.target_len = target_len;
  for (const auto& c : cell.cycles) {
    try {
      out.cycles.push_back(align_cycle(c, target_len));
    } catch (const Error& e) {
      throw Error(e.code(), "cell " + cell.id() + ": " + e.what());
    }
  }
  return out;
}

LabeledCell derive_labels(const CellDataset& cell) {
  LabeledCell out;
  const double rated = cell.manifest.rated_capacity_ah;
  for (const auto& c : cell.cycles) {
    out.soh.push_back(c.capacity / rated);
    if (!out.n_eol && c.capacity < cell.manifest.eol_threshold_ah) out.n_eol = c.cycle_index;
  }
  for (const auto& c : cell.cycles) {
    if (out.n_eol && c.cycle_index <= *out.n_eol)
      out.rul.emplace_back(*out.n_eol - c.cycle_index);
    else
      out.rul.emplace_back(std::nullopt);
  }
  return out;
}

}  // namespace cellprog
