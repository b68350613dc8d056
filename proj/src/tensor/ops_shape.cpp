#include <algorithm>

#include "cellprog/error.hpp"
#include "cellprog/tensor.hpp"

namespace cellprog {

namespace {

using NodePtr = std::shared_ptr<detail::Node>;

void require_matrix(const char* op, const Tensor& x) {
  if (x.rank() != 2) {
    throw Error(ErrorCode::kDimension, std::string(op) + ": expected a matrix, got " + shape_str(x.shape()));
  }
}

}  // namespace

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw Error(ErrorCode::kDimension,
                "reshape: " + shape_str(x.shape()) + " cannot become " + shape_str(shape));
  }
  NodePtr xn = x.node();
  std::vector<double> v(x.data().begin(), x.data().end());
  return make_result(std::move(shape), std::move(v), {xn}, [xn](detail::Node& self) {
    for (std::size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i];
  });
}

Tensor transpose_last_two(const Tensor& x) {
  if (x.rank() < 2) {
    throw Error(ErrorCode::kDimension, "transpose_last_two: rank < 2 in " + shape_str(x.shape()));
  }
  Shape s = x.shape();
  const std::size_t r = s[s.size() - 2], c = s[s.size() - 1];
  const std::size_t batch = x.numel() / (r * c);
  std::swap(s[s.size() - 2], s[s.size() - 1]);
  const auto v = x.data();
  std::vector<double> out(v.size());
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) out[b * r * c + j * r + i] = v[b * r * c + i * c + j];
  NodePtr xn = x.node();
  return make_result(std::move(s), std::move(out), {xn}, [xn, batch, r, c](detail::Node& self) {
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j)
          xn->grad[b * r * c + i * c + j] += self.grad[b * r * c + j * r + i];
  });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw Error(ErrorCode::kUsage, "concat: no inputs");
  if (axis > 1) throw Error(ErrorCode::kDimension, "concat: axis must be 0 or 1");
  for (const auto& p : parts) require_matrix("concat", p);
  const std::size_t fixed = parts[0].dim(1 - axis);
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.dim(1 - axis) != fixed) {
      throw Error(ErrorCode::kDimension, "concat: " + shape_str(p.shape()) + " does not match " +
                                             shape_str(parts[0].shape()) + " off the concat axis");
    }
    total += p.dim(axis);
  }
  const std::size_t rows = axis == 0 ? total : fixed;
  const std::size_t cols = axis == 0 ? fixed : total;
  std::vector<double> out(rows * cols);
  std::vector<NodePtr> nodes;
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    const std::size_t pr = p.dim(0), pc = p.dim(1);
    const auto v = p.data();
    for (std::size_t i = 0; i < pr; ++i)
      for (std::size_t j = 0; j < pc; ++j) {
        const std::size_t oi = axis == 0 ? i + off : i;
        const std::size_t oj = axis == 0 ? j : j + off;
        out[oi * cols + oj] = v[i * pc + j];
      }
    nodes.push_back(p.node());
    offsets.push_back(off);
    off += p.dim(axis);
  }
  return make_result({rows, cols}, std::move(out), nodes,
                     [nodes, offsets, axis, cols](detail::Node& self) {
                       for (std::size_t k = 0; k < nodes.size(); ++k) {
                         auto& n = *nodes[k];
                         if (!n.requires_grad) continue;
                         const std::size_t pr = n.shape[0], pc = n.shape[1];
                         for (std::size_t i = 0; i < pr; ++i)
                           for (std::size_t j = 0; j < pc; ++j) {
                             const std::size_t oi = axis == 0 ? i + offsets[k] : i;
                             const std::size_t oj = axis == 0 ? j : j + offsets[k];
                             n.grad[i * pc + j] += self.grad[oi * cols + oj];
                           }
                       }
                     });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  require_matrix("slice_cols", x);
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (begin >= end || end > cols) {
    throw Error(ErrorCode::kDimension, "slice_cols: [" + std::to_string(begin) + "," + std::to_string(end) +
                                           ") out of range for " + shape_str(x.shape()));
  }
  const std::size_t w = end - begin;
  const auto v = x.data();
  std::vector<double> out(rows * w);
  for (std::size_t i = 0; i < rows; ++i)
    std::copy_n(v.begin() + i * cols + begin, w, out.begin() + i * w);
  NodePtr xn = x.node();
  return make_result({rows, w}, std::move(out), {xn}, [xn, rows, cols, begin, w](detail::Node& self) {
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < w; ++j) xn->grad[i * cols + begin + j] += self.grad[i * w + j];
  });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  require_matrix("slice_rows", x);
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (begin >= end || end > rows) {
    throw Error(ErrorCode::kDimension, "slice_rows: [" + std::to_string(begin) + "," + std::to_string(end) +
                                           ") out of range for " + shape_str(x.shape()));
  }
  const auto v = x.data();
  std::vector<double> out(v.begin() + begin * cols, v.begin() + end * cols);
  NodePtr xn = x.node();
  return make_result({end - begin, cols}, std::move(out), {xn}, [xn, begin, cols](detail::Node& self) {
    for (std::size_t i = 0; i < self.grad.size(); ++i) xn->grad[begin * cols + i] += self.grad[i];
  });
}

std::vector<Tensor> split(const Tensor& x, const std::vector<std::size_t>& sizes, std::size_t axis) {
  std::vector<Tensor> out;
  std::size_t at = 0;
  for (auto s : sizes) {
    out.push_back(axis == 0 ? slice_rows(x, at, at + s) : slice_cols(x, at, at + s));
    at += s;
  }
  if (at != x.dim(axis)) {
    throw Error(ErrorCode::kDimension, "split: sizes cover " + std::to_string(at) + " of " +
                                           std::to_string(x.dim(axis)));
  }
  return out;
}

Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& rows) {
  require_matrix("gather_rows", x);
  const std::size_t cols = x.dim(1);
  const auto v = x.data();
  std::vector<double> out(rows.size() * cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= x.dim(0)) throw Error(ErrorCode::kDimension, "gather_rows: row index out of range");
    std::copy_n(v.begin() + rows[i] * cols, cols, out.begin() + i * cols);
  }
  NodePtr xn = x.node();
  return make_result({rows.size(), cols}, std::move(out), {xn}, [xn, rows, cols](detail::Node& self) {
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < cols; ++j) xn->grad[rows[i] * cols + j] += self.grad[i * cols + j];
  });
}

Tensor scatter_rows_over_fill(const Tensor& picked, const std::vector<std::size_t>& rows,
                              const Tensor& fill, std::size_t total_rows) {
  require_matrix("scatter_rows_over_fill", picked);
  const std::size_t cols = picked.dim(1);
  if (fill.numel() != cols || picked.dim(0) != rows.size()) {
    throw Error(ErrorCode::kDimension, "scatter_rows_over_fill: picked " + shape_str(picked.shape()) +
                                           " / fill " + shape_str(fill.shape()) + " mismatch");
  }
  std::vector<int> owner(total_rows, -1);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= total_rows || owner[rows[i]] != -1) {
      throw Error(ErrorCode::kDimension, "scatter_rows_over_fill: row indices must be distinct and in range");
    }
    owner[rows[i]] = static_cast<int>(i);
  }
  const auto pv = picked.data();
  const auto fv = fill.data();
  std::vector<double> out(total_rows * cols);
  for (std::size_t r = 0; r < total_rows; ++r) {
    const double* src = owner[r] >= 0 ? pv.data() + static_cast<std::size_t>(owner[r]) * cols : fv.data();
    std::copy_n(src, cols, out.begin() + r * cols);
  }
  NodePtr pn = picked.node();
  NodePtr fn = fill.node();
  return make_result({total_rows, cols}, std::move(out), {pn, fn},
                     [pn, fn, owner, cols](detail::Node& self) {
                       for (std::size_t r = 0; r < owner.size(); ++r) {
                         const double* g = self.grad.data() + r * cols;
                         if (owner[r] >= 0) {
                           if (!pn->requires_grad) continue;
                           double* dst = pn->grad.data() + static_cast<std::size_t>(owner[r]) * cols;
                           for (std::size_t j = 0; j < cols; ++j) dst[j] += g[j];
                         } else if (fn->requires_grad) {
                           for (std::size_t j = 0; j < cols; ++j) fn->grad[j] += g[j];
                         }
                       }
                     });
}

}  // namespace cellprog
