#pragma once

// Dense float64 tensors with reverse-mode automatic differentiation.
//
// A Tensor is a cheap handle onto an immutable value node. Operations on
// tensors that require gradients record their inputs and a backward rule;
// backward() walks the recorded graph once in reverse topological order and
// accumulates gradients into every reachable tensor that requires them.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "deeptfp/error.hpp"

namespace deeptfp::tensor {

using Shape = std::vector<std::size_t>;

/// Raised when an operation produces NaN or Inf from finite inputs.
class NumericError : public Error {
 public:
  using Error::Error;
};

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Keeps large tensor buffers on the heap instead of fresh mmap'd pages.
/// Optional; executables call it once at start-up.
void tune_allocator();

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  bool backward_done = false;
  std::string op;  // empty for leaves
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into the inputs' grads.
  std::function<void(Node&)> backward_fn;

  bool recorded() const { return static_cast<bool>(backward_fn); }
  std::vector<double>& ensure_grad();
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const;
  std::size_t size() const;
  std::size_t rank() const { return shape().size(); }

  std::span<const double> data() const;
  /// Writable view for initializers and optimizers. Only valid on leaves.
  std::span<double> mutable_data();
  double item() const;
  double value(std::size_t flat_index) const { return data()[flat_index]; }

  bool requires_grad() const;
  bool is_leaf() const;
  /// Accumulated gradient; all zeros when nothing has been propagated yet.
  std::span<const double> grad() const;
  void zero_grad();

  /// A new leaf holding a copy of the values.
  Tensor clone(bool requires_grad) const;
  Tensor detach() const { return clone(false); }

  /// Name of the producing operation, empty for leaves.
  const std::string& op() const;
  bool same_node(const Tensor& other) const { return node_ == other.node_; }

  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Disables graph recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Ordered record of the differentiable operations that produced a tensor.
/// Every operation appears after all producers of its inputs.
class ComputeGraph {
 public:
  static ComputeGraph trace(const Tensor& root);

  std::size_t size() const { return ops_.size(); }
  std::vector<std::string> op_names() const;
  const std::vector<detail::Node*>& ops() const { return ops_; }

 private:
  std::vector<detail::Node*> ops_;
  std::shared_ptr<detail::Node> root_;
};

/// Backpropagates from a scalar loss. Returns the number of recorded
/// operations visited. Calling it twice on the same loss throws.
std::size_t backward(const Tensor& loss);

// ---------------------------------------------------------------------------
// Operations. All are pure: inputs are never modified.

/// "Same" zero-padded 2-D convolution (cross-correlation), stride 1.
/// input [C_in,H,W], kernel [C_out,C_in,K,K] with K odd, bias [C_out].
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias);

/// max(0, z); the derivative at exactly 0 is taken as 0.
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);

/// Elementwise; `b` may also be a single-element tensor broadcast over `a`.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

Tensor sum(const Tensor& x);
/// Mean of squared differences. Multiply by the element count for the sum.
Tensor mse_loss(const Tensor& pred, const Tensor& target);

/// [M,K] x [K,N] -> [M,N]
Tensor matmul(const Tensor& a, const Tensor& b);
/// x [M,K] * w [K,N] + bias [N] broadcast over rows.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);
Tensor reshape(const Tensor& x, Shape shape);

// ---------------------------------------------------------------------------

/// Central finite-difference check of backward() for a scalar function.
/// Returns the maximum relative error |a-n| / max(|a|,|n|,1e-8) over the
/// checked coordinates (all coordinates when `coords` is empty).
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& at,
                  double step, std::span<const std::size_t> coords = {});

}  // namespace deeptfp::tensor
