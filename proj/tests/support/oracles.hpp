#pragma once

// Plain-arithmetic reference implementations used as test oracles.

#include <cmath>
#include <string>
#include <vector>

#include "cellprog/dsam.hpp"
#include "cellprog/ielstm.hpp"
#include "cellprog/params.hpp"

namespace cellprog::testing {

/// Exponential gating without the stabilizer: i = exp(i~), f = exp(f~),
/// h = o c / n. Returns h for every step.
inline std::vector<std::vector<double>> naive_recurrence(const std::vector<GatePreacts>& steps) {
  std::vector<std::vector<double>> hs;
  if (steps.empty()) return hs;
  const std::size_t hsz = steps[0].i.size();
  std::vector<double> c(hsz, 0.0), n(hsz, 0.0);
  for (const auto& pre : steps) {
    std::vector<double> h(hsz);
    for (std::size_t k = 0; k < hsz; ++k) {
      const double i = std::exp(pre.i[k]);
      const double f = std::exp(pre.f[k]);
      const double z = std::tanh(pre.z[k]);
      const double o = 1.0 / (1.0 + std::exp(-pre.o[k]));
      n[k] = f * n[k] + i;
      c[k] = f * c[k] + i * z;
      h[k] = o * c[k] / n[k];
    }
    hs.push_back(std::move(h));
  }
  return hs;
}

/// Dense multi-head softmax attention with the sparse block's parameters:
/// every query row attends over every key, then the output projection.
inline std::vector<double> dense_attention(const Tensor& x, const ParamStore& params, std::size_t heads) {
  const std::size_t len = x.dim(0), f = x.dim(1), d = f / heads;
  std::vector<double> concat(len * f, 0.0);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::string prefix = "dsam.sa.head" + std::to_string(h);
    const auto& wq = params.get(prefix + ".wq");
    const auto& wk = params.get(prefix + ".wk");
    const auto& wv = params.get(prefix + ".wv");
    auto project = [&](const Tensor& w) {
      std::vector<double> out(len * d, 0.0);
      for (std::size_t r = 0; r < len; ++r)
        for (std::size_t c = 0; c < d; ++c)
          for (std::size_t p = 0; p < f; ++p) out[r * d + c] += x.at(r, p) * w.at(p, c);
      return out;
    };
    const auto q = project(wq), k = project(wk), v = project(wv);
    for (std::size_t r = 0; r < len; ++r) {
      std::vector<double> s(len);
      double mx = -INFINITY;
      for (std::size_t j = 0; j < len; ++j) {
        double dot = 0.0;
        for (std::size_t c = 0; c < d; ++c) dot += q[r * d + c] * k[j * d + c];
        s[j] = dot / std::sqrt(static_cast<double>(d));
        mx = std::max(mx, s[j]);
      }
      double z = 0.0;
      for (auto& e : s) z += (e = std::exp(e - mx));
      for (std::size_t c = 0; c < d; ++c) {
        double acc = 0.0;
        for (std::size_t j = 0; j < len; ++j) acc += s[j] / z * v[j * d + c];
        concat[r * f + h * d + c] = acc;
      }
    }
  }
  const auto& w = params.get("dsam.sa.out.w");
  const auto& b = params.get("dsam.sa.out.b");
  std::vector<double> out(len * f);
  for (std::size_t r = 0; r < len; ++r)
    for (std::size_t c = 0; c < f; ++c) {
      double acc = b.at(c);
      for (std::size_t p = 0; p < f; ++p) acc += concat[r * f + p] * w.at(p, c);
      out[r * f + c] = acc;
    }
  return out;
}

}  // namespace cellprog::testing
