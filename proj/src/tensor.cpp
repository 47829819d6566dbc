#include "deeptfp/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <malloc.h>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace deeptfp::tensor {

namespace {

thread_local bool g_grad_enabled = true;

using NodePtr = std::shared_ptr<detail::Node>;

void check_finite(const std::vector<double>& values, const char* op) {
  // A value is non-finite exactly when all its exponent bits are set.
  constexpr std::uint64_t kExponent = 0x7ff0000000000000ULL;
  std::uint64_t bad = 0;
  for (double v : values) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    bad |= static_cast<std::uint64_t>((bits & kExponent) == kExponent);
  }
  if (bad) throw NumericError(std::string(op) + ": produced a non-finite value");
}

// Builds the output node and records it when any input requires gradients.
Tensor make_result(const char* op, Shape shape, std::vector<double> data,
                   std::vector<NodePtr> inputs, std::function<void(detail::Node&)> rule) {
  check_finite(data, op);
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->op = op;
  const bool track =
      g_grad_enabled && std::any_of(inputs.begin(), inputs.end(),
                                    [](const NodePtr& n) { return n->requires_grad; });
  if (track) {
    node->requires_grad = true;
    node->inputs = std::move(inputs);
    node->backward_fn = std::move(rule);
  }
  return Tensor(std::move(node));
}

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw ShapeError(std::string(op) + ": undefined tensor argument");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                     " vs " + shape_string(b.shape()));
  }
}

bool is_scalar_operand(const Tensor& a, const Tensor& b) {
  return b.size() == 1 && a.shape() != b.shape();
}

template <class Fn>
Tensor unary(const char* op, const Tensor& x, Fn value_and_slope) {
  require_defined(x, op);
  const auto in = x.data();
  std::vector<double> out(in.size());
  std::vector<double> slope(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    auto [v, d] = value_and_slope(in[i]);
    out[i] = v;
    slope[i] = d;
  }
  return make_result(op, x.shape(), std::move(out), {x.node()},
                     [slope = std::move(slope)](detail::Node& self) {
                       auto& in = *self.inputs[0];
                       if (!in.requires_grad) return;
                       auto& g = in.ensure_grad();
                       for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * slope[i];
                     });
}

}  // namespace

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<std::size_t>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

void tune_allocator() {
  constexpr int kLimit = 1 << 30;
  mallopt(M_MMAP_THRESHOLD, kLimit);
  mallopt(M_TRIM_THRESHOLD, kLimit);
}

std::vector<double>& detail::Node::ensure_grad() {
  if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  return grad;
}

// ---------------------------------------------------------------------------
// Tensor

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_string(shape));
  }
  if (shape_size(shape) != data.size()) {
    throw ShapeError("tensor of shape " + shape_string(shape) + " needs " +
                     std::to_string(shape_size(shape)) + " values, got " +
                     std::to_string(data.size()));
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  if (requires_grad) node->ensure_grad();
  return Tensor(std::move(node));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_size(shape);
  return from_data(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::size() const { return node_->data.size(); }
std::span<const double> Tensor::data() const { return node_->data; }

std::span<double> Tensor::mutable_data() {
  if (!is_leaf()) throw Error("mutable_data() is only allowed on leaf tensors");
  return node_->data;
}

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape()));
  return node_->data[0];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }
bool Tensor::is_leaf() const { return !node_->recorded(); }

std::span<const double> Tensor::grad() const { return node_->ensure_grad(); }

void Tensor::zero_grad() {
  auto& g = node_->ensure_grad();
  std::fill(g.begin(), g.end(), 0.0);
  node_->backward_done = false;
}

Tensor Tensor::clone(bool requires_grad) const {
  return from_data(shape(), node_->data, requires_grad);
}

const std::string& Tensor::op() const { return node_->op; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

// ---------------------------------------------------------------------------
// Graph and backward

ComputeGraph ComputeGraph::trace(const Tensor& root) {
  ComputeGraph graph;
  graph.root_ = root.node();
  if (!root.defined() || !root.node()->recorded()) return graph;

  // Iterative post-order DFS; a node is emitted after all of its producers.
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      detail::Node* child = node->inputs[next++].get();
      if (child->recorded() && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      graph.ops_.push_back(node);
      stack.pop_back();
    }
  }
  return graph;
}

std::vector<std::string> ComputeGraph::op_names() const {
  std::vector<std::string> names;
  names.reserve(ops_.size());
  for (const auto* n : ops_) names.push_back(n->op);
  return names;
}

std::size_t backward(const Tensor& loss) {
  require_defined(loss, "backward");
  if (loss.size() != 1) {
    throw ShapeError("backward: loss must be scalar, got shape " + shape_string(loss.shape()));
  }
  auto& root = *loss.node();
  if (!root.recorded()) {
    throw Error("backward: loss was not produced by recorded operations");
  }
  if (root.backward_done) {
    throw Error("backward: already called on this loss; rebuild the graph first");
  }
  const ComputeGraph graph = ComputeGraph::trace(loss);
  for (auto* node : graph.ops()) node->ensure_grad();
  // Intermediate grads start from zero so that a node shared by several
  // losses never sees stale values.
  for (auto* node : graph.ops()) std::fill(node->grad.begin(), node->grad.end(), 0.0);
  root.grad[0] = 1.0;
  const auto& ops = graph.ops();
  for (auto it = ops.rbegin(); it != ops.rend(); ++it) (*it)->backward_fn(**it);
  root.backward_done = true;
  return ops.size();
}

// ---------------------------------------------------------------------------
// Convolution

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias) {
  require_defined(input, "conv2d");
  require_defined(kernel, "conv2d");
  require_defined(bias, "conv2d");
  if (input.rank() != 3) {
    throw ShapeError("conv2d: input must be [C_in,H,W], got " + shape_string(input.shape()));
  }
  if (kernel.rank() != 4) {
    throw ShapeError("conv2d: kernel must be [C_out,C_in,K,K], got " +
                     shape_string(kernel.shape()));
  }
  const std::size_t cin = input.shape()[0];
  const std::size_t h = input.shape()[1];
  const std::size_t w = input.shape()[2];
  const std::size_t cout = kernel.shape()[0];
  const std::size_t k = kernel.shape()[2];
  if (kernel.shape()[1] != cin) {
    throw ShapeError("conv2d: kernel C_in dimension is " + std::to_string(kernel.shape()[1]) +
                     " but input has " + std::to_string(cin) + " channels");
  }
  if (kernel.shape()[3] != k) {
    throw ShapeError("conv2d: kernel must be square, got " + shape_string(kernel.shape()));
  }
  if (k % 2 == 0) throw ShapeError("conv2d: kernel size K must be odd, got " + std::to_string(k));
  if (bias.rank() != 1 || bias.shape()[0] != cout) {
    throw ShapeError("conv2d: bias must be [" + std::to_string(cout) + "], got " +
                     shape_string(bias.shape()));
  }

  // Planes are stored with a padded row stride so that each kernel tap is one
  // contiguous multiply-add over the whole plane. Columns past `w` in the
  // strided output are scratch and discarded.
  const std::size_t r = k / 2;
  const std::size_t wp = w + 2 * r;
  const std::size_t hp = h + 2 * r;
  const std::size_t plane = h * wp;
  const std::size_t padded_plane = hp * wp;

  std::vector<double> padded(cin * padded_plane + 2 * r, 0.0);
  {
    const double* in = input.data().data();
    for (std::size_t c = 0; c < cin; ++c)
      for (std::size_t y = 0; y < h; ++y)
        std::copy(in + (c * h + y) * w, in + (c * h + y + 1) * w,
                  padded.begin() + c * padded_plane + (y + r) * wp + r);
  }

  const double* ker = kernel.data().data();
  std::vector<double> strided(cout * plane, 0.0);
  for (std::size_t o = 0; o < cout; ++o) {
    double* dst = strided.data() + o * plane;
    for (std::size_t c = 0; c < cin; ++c)
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) {
          const double wv = ker[((o * cin + c) * k + i) * k + j];
          const double* src = padded.data() + c * padded_plane + i * wp + j;
          for (std::size_t p = 0; p < plane; ++p) dst[p] += wv * src[p];
        }
  }
  std::vector<double> out(cout * h * w);
  for (std::size_t o = 0; o < cout; ++o) {
    const double b = bias.data()[o];
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        out[(o * h + y) * w + x] = strided[o * plane + y * wp + x] + b;
  }

  return make_result(
      "conv2d", {cout, h, w}, std::move(out), {input.node(), kernel.node(), bias.node()},
      [=, padded = std::move(padded)](detail::Node& self) {
        auto& in_node = *self.inputs[0];
        auto& k_node = *self.inputs[1];
        auto& b_node = *self.inputs[2];
        const double* g = self.grad.data();
        if (b_node.requires_grad) {
          auto& gb = b_node.ensure_grad();
          for (std::size_t o = 0; o < cout; ++o) {
            double sum = 0.0;
            for (std::size_t q = 0; q < h * w; ++q) sum += g[o * h * w + q];
            gb[o] += sum;
          }
        }
        const bool need_in = in_node.requires_grad;
        const bool need_k = k_node.requires_grad;
        if (!need_in && !need_k) return;

        std::vector<double> g_strided(cout * plane, 0.0);
        for (std::size_t o = 0; o < cout; ++o)
          for (std::size_t y = 0; y < h; ++y)
            std::copy(g + (o * h + y) * w, g + (o * h + y + 1) * w,
                      g_strided.begin() + o * plane + y * wp);

        const double* kv = k_node.data.data();
        std::vector<double> g_padded(need_in ? cin * padded_plane + 2 * r : 0, 0.0);
        double* gk = need_k ? k_node.ensure_grad().data() : nullptr;
        for (std::size_t o = 0; o < cout; ++o) {
          const double* go = g_strided.data() + o * plane;
          for (std::size_t c = 0; c < cin; ++c)
            for (std::size_t i = 0; i < k; ++i)
              for (std::size_t j = 0; j < k; ++j) {
                const std::size_t widx = ((o * cin + c) * k + i) * k + j;
                const std::size_t off = c * padded_plane + i * wp + j;
                if (need_in) {
                  const double wv = kv[widx];
                  double* dst = g_padded.data() + off;
                  for (std::size_t p = 0; p < plane; ++p) dst[p] += wv * go[p];
                }
                if (gk) {
                  // Eight fixed lanes keep the reduction vectorizable and its order fixed.
                  const double* src = padded.data() + off;
                  double lanes[8] = {};
                  std::size_t p = 0;
                  for (; p + 8 <= plane; p += 8)
                    for (std::size_t l = 0; l < 8; ++l) lanes[l] += go[p + l] * src[p + l];
                  double total = 0.0;
                  for (; p < plane; ++p) total += go[p] * src[p];
                  for (double lane : lanes) total += lane;
                  gk[widx] += total;
                }
              }
        }
        if (need_in) {
          auto& gin = in_node.ensure_grad();
          for (std::size_t c = 0; c < cin; ++c)
            for (std::size_t y = 0; y < h; ++y)
              for (std::size_t x = 0; x < w; ++x)
                gin[(c * h + y) * w + x] += g_padded[c * padded_plane + (y + r) * wp + x + r];
        }
      });
}

// ---------------------------------------------------------------------------
// Elementwise

Tensor relu(const Tensor& x) {
  return unary("relu", x, [](double z) {
    return std::pair{z > 0.0 ? z : 0.0, z > 0.0 ? 1.0 : 0.0};
  });
}

Tensor sigmoid(const Tensor& x) {
  return unary("sigmoid", x, [](double z) {
    const double s = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    return std::pair{s, s * (1.0 - s)};
  });
}

Tensor tanh(const Tensor& x) {
  return unary("tanh", x, [](double z) {
    const double t = std::tanh(z);
    return std::pair{t, 1.0 - t * t};
  });
}

namespace {

enum class Binary { kAdd, kSub, kMul };

Tensor binary(Binary kind, const char* op, const Tensor& a, const Tensor& b) {
  require_defined(a, op);
  require_defined(b, op);
  const bool broadcast = is_scalar_operand(a, b);
  if (!broadcast) require_same_shape(a, b, op);
  const auto av = a.data();
  const auto bv = b.data();
  const std::size_t n = av.size();
  std::vector<double> out(n);
  if (broadcast) {
    const double y = bv[0];
    switch (kind) {
      case Binary::kAdd: for (std::size_t i = 0; i < n; ++i) out[i] = av[i] + y; break;
      case Binary::kSub: for (std::size_t i = 0; i < n; ++i) out[i] = av[i] - y; break;
      case Binary::kMul: for (std::size_t i = 0; i < n; ++i) out[i] = av[i] * y; break;
    }
  } else {
    switch (kind) {
      case Binary::kAdd: for (std::size_t i = 0; i < n; ++i) out[i] = av[i] + bv[i]; break;
      case Binary::kSub: for (std::size_t i = 0; i < n; ++i) out[i] = av[i] - bv[i]; break;
      case Binary::kMul: for (std::size_t i = 0; i < n; ++i) out[i] = av[i] * bv[i]; break;
    }
  }
  return make_result(op, a.shape(), std::move(out), {a.node(), b.node()},
                     [kind, broadcast](detail::Node& self) {
                       auto& an = *self.inputs[0];
                       auto& bn = *self.inputs[1];
                       const double* g = self.grad.data();
                       const std::size_t n = self.grad.size();
                       if (an.requires_grad) {
                         double* ga = an.ensure_grad().data();
                         if (kind != Binary::kMul) {
                           for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
                         } else if (broadcast) {
                           const double y = bn.data[0];
                           for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * y;
                         } else {
                           const double* y = bn.data.data();
                           for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * y[i];
                         }
                       }
                       if (bn.requires_grad) {
                         double* gb = bn.ensure_grad().data();
                         const double* x = an.data.data();
                         if (broadcast) {
                           double acc = 0.0;
                           for (std::size_t i = 0; i < n; ++i) {
                             acc += kind == Binary::kMul ? g[i] * x[i]
                                                         : (kind == Binary::kSub ? -g[i] : g[i]);
                           }
                           gb[0] += acc;
                         } else if (kind == Binary::kAdd) {
                           for (std::size_t i = 0; i < n; ++i) gb[i] += g[i];
                         } else if (kind == Binary::kSub) {
                           for (std::size_t i = 0; i < n; ++i) gb[i] -= g[i];
                         } else {
                           for (std::size_t i = 0; i < n; ++i) gb[i] += g[i] * x[i];
                         }
                       }
                     });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(Binary::kAdd, "add", a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(Binary::kSub, "sub", a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(Binary::kMul, "mul", a, b); }

Tensor scale(const Tensor& a, double factor) {
  return unary("scale", a, [factor](double z) { return std::pair{z * factor, factor}; });
}

Tensor sum(const Tensor& x) {
  require_defined(x, "sum");
  double s = 0.0;
  for (double v : x.data()) s += v;
  return make_result("sum", {1}, {s}, {x.node()}, [](detail::Node& self) {
    auto& in = *self.inputs[0];
    if (!in.requires_grad) return;
    for (double& g : in.ensure_grad()) g += self.grad[0];
  });
}

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  require_defined(pred, "mse_loss");
  require_defined(target, "mse_loss");
  require_same_shape(pred, target, "mse_loss");
  const auto p = pred.data();
  const auto t = target.data();
  const double n = static_cast<double>(p.size());
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] - t[i]) * (p[i] - t[i]);
  return make_result("mse_loss", {1}, {s / n}, {pred.node(), target.node()},
                     [n](detail::Node& self) {
                       auto& pn = *self.inputs[0];
                       auto& tn = *self.inputs[1];
                       const double g = self.grad[0] * 2.0 / n;
                       if (pn.requires_grad) {
                         auto& gp = pn.ensure_grad();
                         for (std::size_t i = 0; i < gp.size(); ++i)
                           gp[i] += g * (pn.data[i] - tn.data[i]);
                       }
                       if (tn.requires_grad) {
                         auto& gt = tn.ensure_grad();
                         for (std::size_t i = 0; i < gt.size(); ++i)
                           gt[i] -= g * (pn.data[i] - tn.data[i]);
                       }
                     });
}

// ---------------------------------------------------------------------------
// Matrix products

namespace {

// out[M,N] += a[M,K] * b[K,N]
// out[m,n] += a[m,k] * b[k,n]. Columns are processed in register blocks of
// eight; every output element still accumulates over p in increasing order.
void gemm_acc(const double* a, const double* b, double* out, std::size_t m, std::size_t k,
              std::size_t n) {
  const std::size_t blocked = n - n % 8;
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out + i * n;
    const double* arow = a + i * k;
    for (std::size_t j = 0; j < blocked; j += 8) {
      double acc[8];
      for (std::size_t l = 0; l < 8; ++l) acc[l] = row[j + l];
      for (std::size_t p = 0; p < k; ++p) {
        const double av = arow[p];
        const double* brow = b + p * n + j;
        for (std::size_t l = 0; l < 8; ++l) acc[l] += av * brow[l];
      }
      for (std::size_t l = 0; l < 8; ++l) row[j + l] = acc[l];
    }
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + p * n;
      for (std::size_t j = blocked; j < n; ++j) row[j] += av * brow[j];
    }
  }
}

// Dot product with eight fixed partial sums (vectorizable, fixed order).
double dot(const double* x, const double* y, std::size_t n) {
  double lanes[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (std::size_t l = 0; l < 8; ++l) lanes[l] += x[i + l] * y[i + l];
  double total = 0.0;
  for (; i < n; ++i) total += x[i] * y[i];
  for (double lane : lanes) total += lane;
  return total;
}

void check_matmul_shapes(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw ShapeError(std::string(op) + ": expects rank-2 operands, got " +
                     shape_string(a.shape()) + " and " + shape_string(b.shape()));
  }
  if (a.shape()[1] != b.shape()[0]) {
    throw ShapeError(std::string(op) + ": inner dimension mismatch " + shape_string(a.shape()) +
                     " x " + shape_string(b.shape()));
  }
}

// Gradient of out = a*b (+ bias) given upstream g.
void matmul_backward(detail::Node& self, std::size_t m, std::size_t k, std::size_t n) {
  auto& an = *self.inputs[0];
  auto& bn = *self.inputs[1];
  const double* g = self.grad.data();
  if (an.requires_grad) {
    auto& ga = an.ensure_grad();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t p = 0; p < k; ++p) ga[i * k + p] += dot(g + i * n, bn.data.data() + p * n, n);
  }
  if (bn.requires_grad) {
    // gb[k,n] += a^T[k,m] * g[m,n], blocked like gemm_acc over columns of g.
    auto& gb = bn.ensure_grad();
    const double* av = an.data.data();
    const std::size_t blocked = n - n % 8;
    for (std::size_t p = 0; p < k; ++p) {
      double* dst = gb.data() + p * n;
      for (std::size_t j = 0; j < blocked; j += 8) {
        double acc[8];
        for (std::size_t l = 0; l < 8; ++l) acc[l] = dst[j + l];
        for (std::size_t i = 0; i < m; ++i) {
          const double x = av[i * k + p];
          const double* grow = g + i * n + j;
          for (std::size_t l = 0; l < 8; ++l) acc[l] += x * grow[l];
        }
        for (std::size_t l = 0; l < 8; ++l) dst[j + l] = acc[l];
      }
      for (std::size_t i = 0; i < m; ++i) {
        const double x = av[i * k + p];
        for (std::size_t j = blocked; j < n; ++j) dst[j] += x * g[i * n + j];
      }
    }
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  check_matmul_shapes(a, b, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  std::vector<double> out(m * n, 0.0);
  gemm_acc(a.data().data(), b.data().data(), out.data(), m, k, n);
  return make_result("matmul", {m, n}, std::move(out), {a.node(), b.node()},
                     [=](detail::Node& self) { matmul_backward(self, m, k, n); });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  require_defined(x, "linear");
  require_defined(w, "linear");
  require_defined(bias, "linear");
  check_matmul_shapes(x, w, "linear");
  const std::size_t m = x.shape()[0], k = x.shape()[1], n = w.shape()[1];
  if (bias.rank() != 1 || bias.shape()[0] != n) {
    throw ShapeError("linear: bias must be [" + std::to_string(n) + "], got " +
                     shape_string(bias.shape()));
  }
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    std::copy(bias.data().begin(), bias.data().end(), out.begin() + i * n);
  gemm_acc(x.data().data(), w.data().data(), out.data(), m, k, n);
  return make_result("linear", {m, n}, std::move(out), {x.node(), w.node(), bias.node()},
                     [=](detail::Node& self) {
                       matmul_backward(self, m, k, n);
                       auto& bn = *self.inputs[2];
                       if (!bn.requires_grad) return;
                       auto& gb = bn.ensure_grad();
                       for (std::size_t i = 0; i < m; ++i)
                         for (std::size_t j = 0; j < n; ++j) gb[j] += self.grad[i * n + j];
                     });
}

Tensor reshape(const Tensor& x, Shape shape) {
  require_defined(x, "reshape");
  if (shape_size(shape) != x.size()) {
    throw ShapeError("reshape: cannot view " + shape_string(x.shape()) + " as " +
                     shape_string(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_result("reshape", std::move(shape), std::move(out), {x.node()},
                     [](detail::Node& self) {
                       auto& in = *self.inputs[0];
                       if (!in.requires_grad) return;
                       auto& g = in.ensure_grad();
                       for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                     });
}

// ---------------------------------------------------------------------------

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& at, double step,
                  std::span<const std::size_t> coords) {
  require_defined(at, "grad_check");
  Tensor x = at.clone(true);
  Tensor y = f(x);
  if (y.size() != 1) throw ShapeError("grad_check: f must be scalar-valued");
  if (!std::isfinite(y.item())) throw NumericError("grad_check: f is not finite at the point");
  std::vector<double> analytic(at.size(), 0.0);
  if (y.node()->recorded()) {
    backward(y);
    const auto g = x.grad();
    analytic.assign(g.begin(), g.end());
  }

  std::vector<std::size_t> all;
  if (coords.empty()) {
    all.resize(at.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    coords = all;
  }

  NoGradGuard no_grad;
  std::vector<double> probe(at.data().begin(), at.data().end());
  auto eval = [&](std::size_t idx, double value) {
    const double saved = probe[idx];
    probe[idx] = value;
    const double out = f(Tensor::from_data(at.shape(), probe)).item();
    probe[idx] = saved;
    if (!std::isfinite(out)) throw NumericError("grad_check: f is not finite near the point");
    return out;
  };

  double worst = 0.0;
  for (std::size_t idx : coords) {
    if (idx >= at.size()) throw ShapeError("grad_check: coordinate out of range");
    const double x0 = probe[idx];
    const double numeric = (eval(idx, x0 + step) - eval(idx, x0 - step)) / (2.0 * step);
    const double a = analytic[idx];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(a - numeric) / denom);
  }
  return worst;
}

}  // namespace deeptfp::tensor
