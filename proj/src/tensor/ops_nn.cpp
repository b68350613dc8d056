#include <cmath>
#include <limits>

#include "cellprog/error.hpp"
#include "cellprog/tensor.hpp"

namespace cellprog {

namespace {

using NodePtr = std::shared_ptr<detail::Node>;

// c[m x n] += a[m x k] * b[k x n]
void gemm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ai[p];
      if (aip == 0.0) continue;
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

// da[m x k] += g[m x n] * b[k x n]^T
void gemm_acc_bt(const double* g, const double* b, double* da, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* gi = g + i * n;
    double* di = da + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double* bp = b + p * n;
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += gi[j] * bp[j];
      di[p] += s;
    }
  }
}

// db[k x n] += a[m x k]^T * g[m x n]
void gemm_acc_at(const double* a, const double* g, double* db, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    const double* gi = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ai[p];
      if (aip == 0.0) continue;
      double* dp = db + p * n;
      for (std::size_t j = 0; j < n; ++j) dp[j] += aip * gi[j];
    }
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw Error(ErrorCode::kDimension,
                "matmul: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  gemm_acc(a.data().data(), b.data().data(), out.data(), m, k, n);
  NodePtr an = a.node();
  NodePtr bn = b.node();
  return make_result({m, n}, std::move(out), {an, bn}, [an, bn, m, k, n](detail::Node& self) {
    if (an->requires_grad) gemm_acc_bt(self.grad.data(), bn->value.data(), an->grad.data(), m, k, n);
    if (bn->requires_grad) gemm_acc_at(an->value.data(), self.grad.data(), bn->grad.data(), m, k, n);
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(0) || b.numel() != w.dim(1)) {
    throw Error(ErrorCode::kDimension, "linear: x " + shape_str(x.shape()) + ", w " + shape_str(w.shape()) +
                                           ", b " + shape_str(b.shape()) + " do not line up");
  }
  const std::size_t m = x.dim(0), k = x.dim(1), n = w.dim(1);
  std::vector<double> out(m * n);
  const auto bv = b.data();
  for (std::size_t i = 0; i < m; ++i) std::copy(bv.begin(), bv.end(), out.begin() + i * n);
  gemm_acc(x.data().data(), w.data().data(), out.data(), m, k, n);
  NodePtr xn = x.node(), wn = w.node(), bn = b.node();
  return make_result({m, n}, std::move(out), {xn, wn, bn}, [xn, wn, bn, m, k, n](detail::Node& self) {
    if (xn->requires_grad) gemm_acc_bt(self.grad.data(), wn->value.data(), xn->grad.data(), m, k, n);
    if (wn->requires_grad) gemm_acc_at(xn->value.data(), self.grad.data(), wn->grad.data(), m, k, n);
    if (bn->requires_grad) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) bn->grad[j] += self.grad[i * n + j];
    }
  });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  std::size_t rows, cols;
  if (x.rank() == 1) {
    rows = 1;
    cols = x.dim(0);
    axis = 1;
  } else if (x.rank() == 2 && axis <= 1) {
    rows = x.dim(0);
    cols = x.dim(1);
  } else {
    throw Error(ErrorCode::kDimension, "softmax: unsupported shape " + shape_str(x.shape()));
  }
  const std::size_t outer = axis == 1 ? rows : cols;
  const std::size_t inner = axis == 1 ? cols : rows;
  auto flat = [=](std::size_t o, std::size_t i) { return axis == 1 ? o * cols + i : i * cols + o; };
  const auto v = x.data();
  std::vector<double> out(v.size());
  for (std::size_t o = 0; o < outer; ++o) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < inner; ++i) mx = std::max(mx, v[flat(o, i)]);
    double s = 0.0;
    for (std::size_t i = 0; i < inner; ++i) {
      const double e = std::exp(v[flat(o, i)] - mx);
      out[flat(o, i)] = e;
      s += e;
    }
    for (std::size_t i = 0; i < inner; ++i) out[flat(o, i)] /= s;
  }
  NodePtr xn = x.node();
  return make_result(x.shape(), std::move(out), {xn}, [xn, outer, inner, flat](detail::Node& self) {
    for (std::size_t o = 0; o < outer; ++o) {
      double dot = 0.0;
      for (std::size_t i = 0; i < inner; ++i) dot += self.grad[flat(o, i)] * self.value[flat(o, i)];
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t k = flat(o, i);
        xn->grad[k] += self.value[k] * (self.grad[k] - dot);
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& offset, double eps) {
  if (x.rank() != 2 || gain.numel() != x.dim(1) || offset.numel() != x.dim(1)) {
    throw Error(ErrorCode::kDimension, "layer_norm: x " + shape_str(x.shape()) + ", gain " +
                                           shape_str(gain.shape()) + ", offset " + shape_str(offset.shape()));
  }
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  const auto v = x.data();
  const auto gv = gain.data();
  const auto ov = offset.data();
  std::vector<double> xhat(v.size()), inv_std(rows), out(v.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = v.data() + r * cols;
    double mu = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mu += xr[c];
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) var += (xr[c] - mu) * (xr[c] - mu);
    var /= static_cast<double>(cols);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t k = r * cols + c;
      xhat[k] = (xr[c] - mu) * inv_std[r];
      out[k] = xhat[k] * gv[c] + ov[c];
    }
  }
  NodePtr xn = x.node(), gn = gain.node(), on = offset.node();
  return make_result(x.shape(), std::move(out), {xn, gn, on},
                     [xn, gn, on, xhat = std::move(xhat), inv_std = std::move(inv_std), rows,
                      cols](detail::Node& self) {
                       const double n = static_cast<double>(cols);
                       for (std::size_t r = 0; r < rows; ++r) {
                         const double* g = self.grad.data() + r * cols;
                         const double* xh = xhat.data() + r * cols;
                         if (gn->requires_grad)
                           for (std::size_t c = 0; c < cols; ++c) gn->grad[c] += g[c] * xh[c];
                         if (on->requires_grad)
                           for (std::size_t c = 0; c < cols; ++c) on->grad[c] += g[c];
                         if (!xn->requires_grad) continue;
                         double s1 = 0.0, s2 = 0.0;
                         for (std::size_t c = 0; c < cols; ++c) {
                           const double d = g[c] * gn->value[c];
                           s1 += d;
                           s2 += d * xh[c];
                         }
                         for (std::size_t c = 0; c < cols; ++c) {
                           const double d = g[c] * gn->value[c];
                           xn->grad[r * cols + c] += inv_std[r] / n * (n * d - s1 - xh[c] * s2);
                         }
                       }
                     });
}

Tensor im2col_1d(const Tensor& x, std::size_t kernel) {
  if (x.rank() != 2) throw Error(ErrorCode::kDimension, "im2col_1d: expected L x C, got " + shape_str(x.shape()));
  if (kernel % 2 == 0) {
    throw Error(ErrorCode::kConfig, "convolution kernel size must be odd, got " + std::to_string(kernel));
  }
  const std::size_t len = x.dim(0), cin = x.dim(1);
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(kernel / 2);
  const std::size_t width = kernel * cin;
  const auto v = x.data();
  std::vector<double> out(len * width, 0.0);
  for (std::size_t t = 0; t < len; ++t) {
    for (std::size_t tap = 0; tap < kernel; ++tap) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + tap) - pad;
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) continue;
      std::copy_n(v.begin() + src * static_cast<std::ptrdiff_t>(cin), cin,
                  out.begin() + static_cast<std::ptrdiff_t>(t * width + tap * cin));
    }
  }
  NodePtr xn = x.node();
  return make_result({len, width}, std::move(out), {xn}, [xn, len, cin, kernel, pad, width](detail::Node& self) {
    for (std::size_t t = 0; t < len; ++t) {
      for (std::size_t tap = 0; tap < kernel; ++tap) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + tap) - pad;
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) continue;
        for (std::size_t c = 0; c < cin; ++c) {
          xn->grad[static_cast<std::size_t>(src) * cin + c] += self.grad[t * width + tap * cin + c];
        }
      }
    }
  });
}

Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (w.rank() != 3) {
    throw Error(ErrorCode::kDimension, "conv1d: weight must be k x Cin x Cout, got " + shape_str(w.shape()));
  }
  const std::size_t k = w.dim(0), cin = w.dim(1), cout = w.dim(2);
  if (k % 2 == 0) throw Error(ErrorCode::kConfig, "conv1d: kernel size must be odd, got " + std::to_string(k));
  if (x.rank() != 2 || x.dim(1) != cin) {
    throw Error(ErrorCode::kDimension,
                "conv1d: input " + shape_str(x.shape()) + " does not match weight " + shape_str(w.shape()));
  }
  if (k == 1) return linear(x, reshape(w, {cin, cout}), b);
  return linear(im2col_1d(x, k), reshape(w, {k * cin, cout}), b);
}

Tensor maxpool1d(const Tensor& x, std::size_t kernel) {
  if (x.rank() != 2) throw Error(ErrorCode::kDimension, "maxpool1d: expected L x C, got " + shape_str(x.shape()));
  if (kernel % 2 == 0) throw Error(ErrorCode::kConfig, "maxpool1d: kernel size must be odd");
  const std::size_t len = x.dim(0), ch = x.dim(1);
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(kernel / 2);
  const auto v = x.data();
  std::vector<double> out(len * ch);
  std::vector<std::size_t> arg(len * ch);
  for (std::size_t t = 0; t < len; ++t) {
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(t) - pad);
    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(len) - 1,
                                                       static_cast<std::ptrdiff_t>(t) + pad);
    for (std::size_t c = 0; c < ch; ++c) {
      std::size_t best = static_cast<std::size_t>(lo) * ch + c;
      for (std::ptrdiff_t s = lo + 1; s <= hi; ++s) {
        const std::size_t idx = static_cast<std::size_t>(s) * ch + c;
        if (v[idx] > v[best]) best = idx;
      }
      out[t * ch + c] = v[best];
      arg[t * ch + c] = best;
    }
  }
  NodePtr xn = x.node();
  return make_result(x.shape(), std::move(out), {xn}, [xn, arg = std::move(arg)](detail::Node& self) {
    for (std::size_t i = 0; i < arg.size(); ++i) xn->grad[arg[i]] += self.grad[i];
  });
}

}  // namespace cellprog
