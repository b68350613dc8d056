#pragma once

// Dense row-major float64 tensor with tape-based reverse-mode autodiff.
//
// Every op that touches a tensor requiring grad appends a node stamped with a
// global, monotonically increasing sequence number. backward() walks the
// nodes reachable from the loss in descending stamp order, which is the
// reverse of execution order, so every node runs exactly once after all of
// its consumers.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace cellprog {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::uint64_t stamp = 0;
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this->grad and accumulates into inputs' grads.
  std::function<void(Node&)> backward;

  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
  }
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
  std::size_t numel() const { return impl_->value.size(); }

  std::span<const double> data() const { return impl_->value; }
  /// Direct write access; for parameter initialization and optimizer updates.
  std::span<double> mutable_data() { return impl_->value; }

  double item() const;
  double at(std::size_t i) const { return impl_->value[i]; }
  double at(std::size_t r, std::size_t c) const { return impl_->value[r * impl_->shape[1] + c]; }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool on) { impl_->requires_grad = on; }

  bool has_grad() const { return !impl_->grad.empty(); }
  /// Gradient buffer; zeros if nothing has been accumulated yet.
  std::vector<double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad() { impl_->grad.clear(); }

  /// A leaf copy of the values with no graph history.
  Tensor detach() const;

  bool same_node(const Tensor& other) const { return impl_ == other.impl_; }

  // Internal.
  explicit Tensor(std::shared_ptr<detail::Node> impl) : impl_(std::move(impl)) {}
  const std::shared_ptr<detail::Node>& node() const { return impl_; }

 private:
  std::shared_ptr<detail::Node> impl_;
};

/// Disables graph recording on this thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_mode_enabled();

/// Creates an op result. Records the node only when grad mode is on and some
/// input requires grad; otherwise the backward closure is dropped.
Tensor make_result(Shape shape, std::vector<double> value,
                   std::vector<std::shared_ptr<detail::Node>> inputs,
                   std::function<void(detail::Node&)> backward);

/// Seeds d(loss)/d(loss) = 1 and propagates. Leaf grads accumulate across calls.
void backward(const Tensor& loss);

// ---- elementwise and broadcasting -------------------------------------------
//
// Binary ops take `a` of rank <= 2 and `b` either of the same shape or
// broadcastable onto `a` per 2-D axis (a size-1 axis of b repeats). A rank-1
// b of length n is treated as 1 x n.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// a / (b + 1e-8 * sign(b)) when |b| < 1e-12 would otherwise blow up.
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);

Tensor exp(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
/// Tanh approximation.
Tensor gelu(const Tensor& x);
/// Elementwise max; ties route the gradient to `a`.
Tensor max_pair(const Tensor& a, const Tensor& b);
Tensor square(const Tensor& x);

double gelu_value(double x);

// ---- reductions ---------------------------------------------------------------

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Mean over one axis of a matrix; axis 0 gives 1 x C, axis 1 gives R x 1.
Tensor mean_axis(const Tensor& x, std::size_t axis);
/// Max over one axis of a matrix; first index wins ties.
Tensor max_axis(const Tensor& x, std::size_t axis);

// ---- shape ----------------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape);
Tensor transpose_last_two(const Tensor& x);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
/// Columns [begin, end) of a matrix.
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);
/// Rows [begin, end) of a matrix.
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
std::vector<Tensor> split(const Tensor& x, const std::vector<std::size_t>& sizes, std::size_t axis);
Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& rows);
/// L x C matrix whose rows `rows[i]` come from `picked` row i and every other
/// row is a copy of the 1 x C `fill`.
Tensor scatter_rows_over_fill(const Tensor& picked, const std::vector<std::size_t>& rows,
                              const Tensor& fill, std::size_t total_rows);

// ---- linear algebra and nn ------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
/// x: N x in, w: in x out, b: out. Returns N x out.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor softmax(const Tensor& x, std::size_t axis);
/// Normalizes each row of a matrix over its columns, then gain/offset.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& offset, double eps = 1e-5);

/// Same-padded, stride-1 unfold of L x Cin into L x (k*Cin); column index is
/// tap * Cin + channel.
Tensor im2col_1d(const Tensor& x, std::size_t kernel);
/// x: L x Cin, w: k x Cin x Cout, b: Cout. Same padding, stride 1, odd k.
Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b);
/// Per-channel sliding max, window k (odd), stride 1, -inf padding.
Tensor maxpool1d(const Tensor& x, std::size_t kernel = 3);

}  // namespace cellprog
