#include "cellprog/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "cellprog/error.hpp"

namespace cellprog {

namespace {

std::atomic<std::uint64_t> g_stamp{1};
thread_local bool t_grad_enabled = true;

std::shared_ptr<detail::Node> make_leaf(Shape shape, std::vector<double> values,
                                        bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw Error(ErrorCode::kDimension, "tensor: shape " + shape_str(shape) + " holds " +
                                           std::to_string(shape_numel(shape)) +
                                           " values, got " + std::to_string(values.size()));
  }
  for (auto d : shape) {
    if (d == 0) throw Error(ErrorCode::kDimension, "tensor: zero-sized dimension in " + shape_str(shape));
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  node->stamp = g_stamp.fetch_add(1, std::memory_order_relaxed);
  return node;
}

}  // namespace

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const auto n = shape_numel(shape);
  return Tensor(make_leaf(std::move(shape), std::vector<double>(n, 0.0), requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return Tensor(make_leaf(std::move(shape), std::vector<double>(n, value), requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  return Tensor(make_leaf(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(make_leaf({1}, {value}, requires_grad));
}

double Tensor::item() const {
  if (numel() != 1) {
    throw Error(ErrorCode::kUsage, "item() on non-scalar tensor " + shape_str(shape()));
  }
  return impl_->value[0];
}

std::vector<double> Tensor::grad() const {
  if (impl_->grad.empty()) return std::vector<double>(impl_->value.size(), 0.0);
  return impl_->grad;
}

std::span<double> Tensor::mutable_grad() {
  impl_->ensure_grad();
  return impl_->grad;
}

Tensor Tensor::detach() const {
  return Tensor(make_leaf(impl_->shape, impl_->value, false));
}

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

bool grad_mode_enabled() { return t_grad_enabled; }

Tensor make_result(Shape shape, std::vector<double> value,
                   std::vector<std::shared_ptr<detail::Node>> inputs,
                   std::function<void(detail::Node&)> backward) {
  for (double v : value) {
    if (!std::isfinite(v)) {
      throw Error(ErrorCode::kNumeric, "non-finite value produced by tensor op with output shape " +
                                           shape_str(shape));
    }
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->stamp = g_stamp.fetch_add(1, std::memory_order_relaxed);
  if (t_grad_enabled) {
    const bool any = std::any_of(inputs.begin(), inputs.end(),
                                 [](const auto& in) { return in->requires_grad; });
    if (any) {
      node->requires_grad = true;
      node->inputs = std::move(inputs);
      node->backward = std::move(backward);
    }
  }
  return Tensor(std::move(node));
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw Error(ErrorCode::kUsage, "backward() needs a scalar loss, got " +
                                       (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
  }
  const auto& root = loss.node();
  if (!root->requires_grad) {
    throw Error(ErrorCode::kUsage, "backward() on a loss with no graph");
  }

  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<detail::Node*> stack{root.get()};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (const auto& in : n->inputs) {
      if (in->requires_grad && seen.insert(in.get()).second) stack.push_back(in.get());
    }
  }
  std::sort(order.begin(), order.end(),
            [](const detail::Node* a, const detail::Node* b) { return a->stamp > b->stamp; });

  root->ensure_grad();
  root->grad[0] += 1.0;
  for (auto* n : order) {
    if (!n->backward || n->grad.empty()) continue;
    for (const auto& in : n->inputs) {
      if (in->requires_grad) in->ensure_grad();
    }
    n->backward(*n);
    // Intermediate grads are no longer needed once propagated.
    if (n != root.get()) n->grad.clear();
  }
}

}  // namespace cellprog
