#include <cmath>
#include <limits>
#include <numbers>

#include "cellprog/error.hpp"
#include "cellprog/tensor.hpp"

namespace cellprog {

namespace {

using NodePtr = std::shared_ptr<detail::Node>;

struct Dims2 {
  std::size_t rows;
  std::size_t cols;
};

Dims2 as_matrix(const Shape& s) {
  if (s.size() == 1) return {1, s[0]};
  if (s.size() == 2) return {s[0], s[1]};
  return {1, shape_numel(s)};
}

// Index map from a's flat position to b's flat position under broadcasting.
struct Broadcast {
  Dims2 a;
  Dims2 b;
  bool same;

  std::size_t b_index(std::size_t flat) const {
    if (same) return flat;
    const std::size_t r = flat / a.cols;
    const std::size_t c = flat % a.cols;
    return (b.rows == 1 ? 0 : r) * b.cols + (b.cols == 1 ? 0 : c);
  }
};

Broadcast check_broadcast(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return {as_matrix(a.shape()), as_matrix(b.shape()), true};
  if (a.rank() > 2 || b.rank() > 2) {
    throw Error(ErrorCode::kDimension, std::string(op) + ": cannot broadcast " +
                                           shape_str(b.shape()) + " onto " + shape_str(a.shape()));
  }
  const Dims2 da = as_matrix(a.shape());
  const Dims2 db = as_matrix(b.shape());
  const bool rows_ok = db.rows == da.rows || db.rows == 1;
  const bool cols_ok = db.cols == da.cols || db.cols == 1;
  if (!rows_ok || !cols_ok) {
    throw Error(ErrorCode::kDimension, std::string(op) + ": cannot broadcast " +
                                           shape_str(b.shape()) + " onto " + shape_str(a.shape()));
  }
  return {da, db, false};
}

template <typename Fwd, typename DA, typename DB>
Tensor binary_op(const char* name, const Tensor& a, const Tensor& b, Fwd fwd, DA da, DB db) {
  const Broadcast bc = check_broadcast(name, a, b);
  const auto av = a.data();
  const auto bv = b.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i], bv[bc.b_index(i)]);
  NodePtr an = a.node();
  NodePtr bn = b.node();
  return make_result(a.shape(), std::move(out), {an, bn}, [an, bn, bc, da, db](detail::Node& self) {
    const auto& g = self.grad;
    const auto& x = an->value;
    const auto& y = bn->value;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const std::size_t j = bc.b_index(i);
      if (an->requires_grad) an->grad[i] += g[i] * da(x[i], y[j]);
      if (bn->requires_grad) bn->grad[j] += g[i] * db(x[i], y[j]);
    }
  });
}

template <typename Fwd, typename Deriv>
Tensor unary_op(const Tensor& x, Fwd fwd, Deriv deriv) {
  const auto xv = x.data();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
  NodePtr xn = x.node();
  return make_result(x.shape(), std::move(out), {xn}, [xn, deriv](detail::Node& self) {
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      xn->grad[i] += self.grad[i] * deriv(xn->value[i], self.value[i]);
    }
  });
}

double guard_denominator(double d) {
  if (std::abs(d) < 1e-12) return d + (d < 0.0 ? -1e-8 : 1e-8);
  return d;
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

}  // namespace

double gelu_value(double x) {
  return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_op(
      "div", a, b, [](double x, double y) { return x / guard_denominator(y); },
      [](double, double y) { return 1.0 / guard_denominator(y); },
      [](double x, double y) {
        const double d = guard_denominator(y);
        return -x / (d * d);
      });
}

Tensor scale(const Tensor& a, double factor) {
  return unary_op(
      a, [factor](double x) { return x * factor; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double value) {
  return unary_op(
      a, [value](double x) { return x + value; }, [](double, double) { return 1.0; });
}

Tensor exp(const Tensor& x) {
  return unary_op(
      x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor tanh(const Tensor& x) {
  return unary_op(
      x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& x) {
  return unary_op(
      x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor gelu(const Tensor& x) {
  return unary_op(x, gelu_value, [](double v, double) {
    const double u = kGeluC * (v + kGeluA * v * v * v);
    const double t = std::tanh(u);
    const double du = kGeluC * (1.0 + 3.0 * kGeluA * v * v);
    return 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du;
  });
}

Tensor square(const Tensor& x) {
  return unary_op(
      x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor max_pair(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw Error(ErrorCode::kDimension,
                "max_pair: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) + " differ");
  }
  return binary_op(
      "max_pair", a, b, [](double x, double y) { return x >= y ? x : y; },
      [](double x, double y) { return x >= y ? 1.0 : 0.0; },
      [](double x, double y) { return x >= y ? 0.0 : 1.0; });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  NodePtr xn = x.node();
  return make_result({1}, {s}, {xn}, [xn](detail::Node& self) {
    for (auto& g : xn->grad) g += self.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  const double n = static_cast<double>(x.numel());
  double s = 0.0;
  for (double v : x.data()) s += v;
  NodePtr xn = x.node();
  return make_result({1}, {s / n}, {xn}, [xn, n](detail::Node& self) {
    const double g = self.grad[0] / n;
    for (auto& gi : xn->grad) gi += g;
  });
}

Tensor mean_axis(const Tensor& x, std::size_t axis) {
  if (x.rank() != 2 || axis > 1) {
    throw Error(ErrorCode::kDimension, "mean_axis: need a matrix and axis 0/1, got " + shape_str(x.shape()));
  }
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  const auto v = x.data();
  NodePtr xn = x.node();
  if (axis == 0) {
    std::vector<double> out(cols, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) out[c] += v[r * cols + c];
    for (auto& o : out) o /= static_cast<double>(rows);
    return make_result({1, cols}, std::move(out), {xn}, [xn, rows, cols](detail::Node& self) {
      const double inv = 1.0 / static_cast<double>(rows);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) xn->grad[r * cols + c] += self.grad[c] * inv;
    });
  }
  std::vector<double> out(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r] += v[r * cols + c];
    out[r] /= static_cast<double>(cols);
  }
  return make_result({rows, 1}, std::move(out), {xn}, [xn, rows, cols](detail::Node& self) {
    const double inv = 1.0 / static_cast<double>(cols);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) xn->grad[r * cols + c] += self.grad[r] * inv;
  });
}

Tensor max_axis(const Tensor& x, std::size_t axis) {
  if (x.rank() != 2 || axis > 1) {
    throw Error(ErrorCode::kDimension, "max_axis: need a matrix and axis 0/1, got " + shape_str(x.shape()));
  }
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  const auto v = x.data();
  const std::size_t outer = axis == 0 ? cols : rows;
  const std::size_t inner = axis == 0 ? rows : cols;
  auto flat = [=](std::size_t o, std::size_t i) { return axis == 0 ? i * cols + o : o * cols + i; };
  std::vector<double> out(outer);
  std::vector<std::size_t> arg(outer);
  for (std::size_t o = 0; o < outer; ++o) {
    std::size_t best = flat(o, 0);
    for (std::size_t i = 1; i < inner; ++i) {
      const std::size_t k = flat(o, i);
      if (v[k] > v[best]) best = k;
    }
    out[o] = v[best];
    arg[o] = best;
  }
  Shape s = axis == 0 ? Shape{1, cols} : Shape{rows, 1};
  NodePtr xn = x.node();
  return make_result(std::move(s), std::move(out), {xn}, [xn, arg](detail::Node& self) {
    for (std::size_t o = 0; o < arg.size(); ++o) xn->grad[arg[o]] += self.grad[o];
  });
}

}  // namespace cellprog
