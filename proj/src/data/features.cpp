#include <cmath>

#include "cellprog/data.hpp"
#include "cellprog/error.hpp"

namespace cellprog {

FeatureFactors extract_feature_factors(const CycleRecord& cycle, double saturation_voltage) {
  const auto& t = cycle.times;
  const auto& v = cycle.voltages;
  if (t.size() != v.size() || t.size() < 2) {
    throw Error(ErrorCode::kData, "cycle " + std::to_string(cycle.cycle_index) + ": need >= 2 samples");
  }
  std::size_t cc_end = 0;
  while (cc_end < v.size() && v[cc_end] < saturation_voltage) ++cc_end;

  FeatureFactors f;
  if (cc_end > 0) {
    std::size_t peak = 0;
    for (std::size_t k = 1; k < cc_end; ++k)
      if (v[k] > v[peak]) peak = k;
    f.onset_to_peak_s = t[peak] - t[0];
    for (std::size_t k = 1; k < cc_end; ++k) f.cc_integral_vs += 0.5 * (v[k] + v[k - 1]) * (t[k] - t[k - 1]);
  }

  auto in_plateau = [](double x) { return x >= 3.9 && x <= 4.1; };
  for (std::size_t k = 1; k < v.size(); ++k)
    if (in_plateau(v[k - 1]) && in_plateau(v[k])) f.plateau_s += t[k] - t[k - 1];

  double n = 0, st = 0, sv = 0;
  for (std::size_t k = 0; k < cc_end; ++k) {
    if (v[k] < 3.6 || v[k] > 4.0) continue;
    n += 1;
    st += t[k];
    sv += v[k];
  }
  if (n >= 2) {
    const double mt = st / n, mv = sv / n;
    double stt = 0, stv = 0;
    for (std::size_t k = 0; k < cc_end; ++k) {
      if (v[k] < 3.6 || v[k] > 4.0) continue;
      stt += (t[k] - mt) * (t[k] - mt);
      stv += (t[k] - mt) * (v[k] - mv);
    }
    f.rise_slope_v_per_s = stv / stt;
  } else {
    f.slope_degenerate = true;
  }
  return f;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw Error(ErrorCode::kData, "pearson: series lengths differ");
  if (x.size() < 2) throw Error(ErrorCode::kData, "pearson: need at least 2 points");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw Error(ErrorCode::kData, "pearson: zero variance, correlation undefined");
  const double r = sxy / std::sqrt(sxx * syy);
  return std::clamp(r, -1.0, 1.0);
}

}  // namespace cellprog
