#include "glgat/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "glgat/error.hpp"

namespace glgat {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using Strided = Eigen::OuterStride<>;
using StridedMap = Eigen::Map<RowMat, 0, Strided>;
using ConstStridedMap = Eigen::Map<const RowMat, 0, Strided>;
using RowVecMap = Eigen::Map<Eigen::RowVectorXd>;
using ConstRowVecMap = Eigen::Map<const Eigen::RowVectorXd>;

thread_local bool t_grad_enabled = true;

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

void check_finite(const std::vector<double>& v, const char* op) {
  // Branch-free scan: a value is non-finite iff its exponent bits are all set.
  constexpr std::uint64_t kExp = 0x7ff0000000000000ULL;
  std::uint64_t bad = 0;
  for (double x : v) bad |= static_cast<std::uint64_t>((std::bit_cast<std::uint64_t>(x) & kExp) == kExp);
  if (bad) throw NumericalError(std::string("non-finite value produced by ") + op);
}

// Grad buffer of input `k` if it participates in differentiation.
std::vector<double>* grad_of(Node& self, std::size_t k) {
  Node& in = *self.inputs[k];
  if (!in.requires_grad) return nullptr;
  in.ensure_grad();
  return &in.grad;
}

std::vector<std::size_t> strides_of(const Shape& shape) {
  std::vector<std::size_t> s(shape.size(), 1);
  for (std::size_t k = shape.size(); k-- > 1;) s[k - 1] = s[k] * shape[k];
  return s;
}

// Calls fn(dst, src) for every element of `shape` in row-major order, where
// src is the dot product of the multi-index with `src_strides`.
template <typename Fn>
void for_each_mapped(const Shape& shape, const std::vector<std::size_t>& src_strides, Fn&& fn) {
  const std::size_t total = shape_numel(shape);
  if (total == 0) return;
  const std::size_t rank = shape.size();
  std::vector<std::size_t> idx(rank, 0);
  std::size_t src = 0;
  for (std::size_t dst = 0; dst < total; ++dst) {
    fn(dst, src);
    for (std::size_t k = rank; k-- > 0;) {
      ++idx[k];
      src += src_strides[k];
      if (idx[k] < shape[k]) break;
      src -= src_strides[k] * idx[k];
      idx[k] = 0;
    }
  }
}

// Source strides that realize a right-aligned broadcast of `from` to `to`.
std::vector<std::size_t> broadcast_strides(const Shape& from, const Shape& to, const char* op) {
  if (from.size() > to.size()) {
    throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(from) + " to " +
                     shape_str(to));
  }
  const auto src = strides_of(from);
  std::vector<std::size_t> out(to.size(), 0);
  const std::size_t offset = to.size() - from.size();
  for (std::size_t k = 0; k < from.size(); ++k) {
    if (from[k] == to[k + offset]) {
      out[k + offset] = from[k] == 1 ? 0 : src[k];
    } else if (from[k] != 1) {
      throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(from) + " to " +
                       shape_str(to));
    }
  }
  return out;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw ShapeError(std::string(op) + ": undefined tensor");
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t k = 0; k < shape.size(); ++k) os << (k ? "," : "") << shape[k];
  os << ']';
  return os.str();
}

std::shared_ptr<detail::Node> node_of(const Tensor& t) { return t.node_; }

Tensor make_result(Shape shape, std::vector<double> values, const char* op,
                   std::vector<Tensor> inputs, std::function<void(detail::Node&)> backward) {
  check_finite(values, op);
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->op = op;
  const bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const Tensor& t) { return t.defined() && t.requires_grad(); });
  if (t_grad_enabled && any) {
    node->requires_grad = true;
    node->backward = std::move(backward);
    node->inputs.reserve(inputs.size());
    for (auto& t : inputs) {
      // Undefined optional inputs are replaced by an inert placeholder.
      node->inputs.push_back(t.defined() ? node_of(t) : std::make_shared<Node>());
    }
  }
  return Tensor(std::move(node));
}

// ---- Tensor ---------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("tensor: shape " + shape_str(shape) + " does not hold " +
                     std::to_string(values.size()) + " values");
  }
  check_finite(values, "tensor construction");
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value) { return from({}, {value}); }

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) throw ShapeError("axis out of range for " + shape_str(shape()));
  return shape()[axis];
}

std::size_t Tensor::numel() const { return node_->value.size(); }

std::span<const double> Tensor::values() const { return node_->value; }

std::span<double> Tensor::mutable_values() { return node_->value; }

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }

void Tensor::set_requires_grad(bool flag) {
  if (!node_->is_leaf()) throw Error("requires_grad can only be changed on leaf tensors");
  node_->requires_grad = flag;
}

bool Tensor::has_grad() const { return node_->grad.size() == node_->value.size(); }

std::span<const double> Tensor::grad() const { return node_->grad; }

std::span<double> Tensor::mutable_grad() {
  node_->ensure_grad();
  return node_->grad;
}

void Tensor::zero_grad() {
  if (has_grad()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

void Tensor::backward() const {
  if (numel() != 1) throw ShapeError("backward() needs a single-element tensor");
  Tape tape(*this);
  tape.backward();
}

Tensor Tensor::detach() const { return from(shape(), node_->value, false); }

const char* Tensor::op_name() const { return node_->op; }

// ---- Tape -----------------------------------------------------------------

Tape::Tape(const Tensor& root) {
  if (!root.defined() || !root.requires_grad()) return;
  std::unordered_set<const Node*> seen;
  // Iterative post-order DFS: (node, next input index).
  std::vector<std::pair<NodePtr, std::size_t>> stack;
  stack.emplace_back(node_of(root), 0);
  seen.insert(stack.back().first.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      NodePtr in = node->inputs[next++];
      if (in->requires_grad && seen.insert(in.get()).second) stack.emplace_back(std::move(in), 0);
    } else {
      order_.push_back(node);
      stack.pop_back();
    }
  }
  view_.reserve(order_.size());
  for (const auto& n : order_) view_.push_back(n.get());
}

std::size_t Tape::position(const Tensor& t) const {
  const auto it = std::find(view_.begin(), view_.end(), t.node_id());
  return static_cast<std::size_t>(it - view_.begin());
}

void Tape::backward() {
  if (order_.empty()) return;
  for (auto& n : order_) {
    if (n->is_leaf()) {
      n->ensure_grad();
    } else {
      n->grad.assign(n->value.size(), 0.0);
    }
  }
  Node& root = *order_.back();
  for (double& g : root.grad) g += 1.0;
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    Node& n = **it;
    if (!n.is_leaf()) n.backward(n);
  }
}

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

bool grad_enabled() { return t_grad_enabled; }

// ---- linear algebra -------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), p = b.dim(1);
  std::vector<double> out(m * p);
  MatMap(out.data(), m, p).noalias() = ConstMatMap(a.values().data(), m, k) *
                                       ConstMatMap(b.values().data(), k, p);
  return make_result({m, p}, std::move(out), "matmul", {a, b}, [m, k, p](Node& self) {
    ConstMatMap g(self.grad.data(), m, p);
    if (auto* ga = grad_of(self, 0)) {
      MatMap(ga->data(), m, k).noalias() +=
          g * ConstMatMap(self.inputs[1]->value.data(), k, p).transpose();
    }
    if (auto* gb = grad_of(self, 1)) {
      MatMap(gb->data(), k, p).noalias() +=
          ConstMatMap(self.inputs[0]->value.data(), m, k).transpose() * g;
    }
  });
}

Tensor bmm(const Tensor& a, const Tensor& b) {
  require_defined(a, "bmm");
  require_defined(b, "bmm");
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1)) {
    throw ShapeError("bmm: incompatible shapes " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  const std::size_t nb = a.dim(0), m = a.dim(1), k = a.dim(2), p = b.dim(2);
  std::vector<double> out(nb * m * p);
  const double* pa = a.values().data();
  const double* pb = b.values().data();
  for (std::size_t i = 0; i < nb; ++i) {
    MatMap(out.data() + i * m * p, m, p).noalias() =
        ConstMatMap(pa + i * m * k, m, k) * ConstMatMap(pb + i * k * p, k, p);
  }
  return make_result({nb, m, p}, std::move(out), "bmm", {a, b}, [nb, m, k, p](Node& self) {
    auto* ga = grad_of(self, 0);
    auto* gb = grad_of(self, 1);
    const double* va = self.inputs[0]->value.data();
    const double* vb = self.inputs[1]->value.data();
    for (std::size_t i = 0; i < nb; ++i) {
      ConstMatMap g(self.grad.data() + i * m * p, m, p);
      if (ga) {
        MatMap(ga->data() + i * m * k, m, k).noalias() +=
            g * ConstMatMap(vb + i * k * p, k, p).transpose();
      }
      if (gb) {
        MatMap(gb->data() + i * k * p, k, p).noalias() +=
            ConstMatMap(va + i * m * k, m, k).transpose() * g;
      }
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  require_defined(x, "linear");
  require_defined(w, "linear");
  if (x.rank() < 1 || w.rank() != 2 || x.shape().back() != w.dim(1)) {
    throw ShapeError("linear: input " + shape_str(x.shape()) + " incompatible with weight " +
                     shape_str(w.shape()));
  }
  const std::size_t in = w.dim(1), out_f = w.dim(0);
  if (b.defined() && b.shape() != Shape{out_f}) {
    throw ShapeError("linear: bias " + shape_str(b.shape()) + " for output width " +
                     std::to_string(out_f));
  }
  const std::size_t rows = x.numel() / std::max<std::size_t>(in, 1);
  Shape shape = x.shape();
  shape.back() = out_f;
  std::vector<double> out(rows * out_f);
  MatMap y(out.data(), rows, out_f);
  if (in > 0) {
    y.noalias() = ConstMatMap(x.values().data(), rows, in) *
                  ConstMatMap(w.values().data(), out_f, in).transpose();
  } else {
    y.setZero();
  }
  if (b.defined()) y.rowwise() += ConstRowVecMap(b.values().data(), out_f);
  return make_result(std::move(shape), std::move(out), "linear", {x, w, b},
                     [rows, in, out_f](Node& self) {
                       ConstMatMap g(self.grad.data(), rows, out_f);
                       if (auto* gx = grad_of(self, 0); gx && in > 0) {
                         MatMap(gx->data(), rows, in).noalias() +=
                             g * ConstMatMap(self.inputs[1]->value.data(), out_f, in);
                       }
                       if (auto* gw = grad_of(self, 1); gw && in > 0) {
                         MatMap(gw->data(), out_f, in).noalias() +=
                             g.transpose() * ConstMatMap(self.inputs[0]->value.data(), rows, in);
                       }
                       if (auto* gb = grad_of(self, 2)) {
                         RowVecMap(gb->data(), out_f) += g.colwise().sum();
                       }
                     });
}

Tensor per_vertex_linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  require_defined(x, "per_vertex_linear");
  require_defined(w, "per_vertex_linear");
  require_defined(b, "per_vertex_linear");
  if (x.rank() != 3 || w.rank() != 3 || b.rank() != 2 || x.dim(1) != w.dim(0) ||
      x.dim(2) != w.dim(2) || b.dim(0) != w.dim(0) || b.dim(1) != w.dim(1)) {
    throw ShapeError("per_vertex_linear: incompatible shapes x" + shape_str(x.shape()) + " w" +
                     shape_str(w.shape()) + " b" + shape_str(b.shape()));
  }
  const std::size_t g_count = x.dim(0), n = x.dim(1), in = x.dim(2), out_f = w.dim(1);
  std::vector<double> out(g_count * n * out_f);
  const double* px = x.values().data();
  const double* pw = w.values().data();
  const double* pb = b.values().data();
  for (std::size_t v = 0; v < n; ++v) {
    StridedMap y(out.data() + v * out_f, g_count, out_f, Strided(n * out_f));
    if (in > 0) {
      y.noalias() = ConstStridedMap(px + v * in, g_count, in, Strided(n * in)) *
                    ConstMatMap(pw + v * out_f * in, out_f, in).transpose();
    } else {
      y.setZero();
    }
    y.rowwise() += ConstRowVecMap(pb + v * out_f, out_f);
  }
  return make_result(
      {g_count, n, out_f}, std::move(out), "per_vertex_linear", {x, w, b},
      [g_count, n, in, out_f](Node& self) {
        auto* gx = grad_of(self, 0);
        auto* gw = grad_of(self, 1);
        auto* gb = grad_of(self, 2);
        const double* vx = self.inputs[0]->value.data();
        const double* vw = self.inputs[1]->value.data();
        for (std::size_t v = 0; v < n; ++v) {
          ConstStridedMap g(self.grad.data() + v * out_f, g_count, out_f, Strided(n * out_f));
          if (gx && in > 0) {
            StridedMap(gx->data() + v * in, g_count, in, Strided(n * in)).noalias() +=
                g * ConstMatMap(vw + v * out_f * in, out_f, in);
          }
          if (gw && in > 0) {
            MatMap(gw->data() + v * out_f * in, out_f, in).noalias() +=
                g.transpose() * ConstStridedMap(vx + v * in, g_count, in, Strided(n * in));
          }
          if (gb) RowVecMap(gb->data() + v * out_f, out_f) += g.colwise().sum();
        }
      });
}

// ---- elementwise ----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  const auto va = a.values(), vb = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] + vb[i];
  return make_result(a.shape(), std::move(out), "add", {a, b}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (auto* g = grad_of(self, k)) {
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
      }
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  const auto va = a.values(), vb = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] - vb[i];
  return make_result(a.shape(), std::move(out), "sub", {a, b}, [](Node& self) {
    if (auto* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    }
    if (auto* g = grad_of(self, 1)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  const auto va = a.values(), vb = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] * vb[i];
  return make_result(a.shape(), std::move(out), "mul", {a, b}, [](Node& self) {
    const auto& va = self.inputs[0]->value;
    const auto& vb = self.inputs[1]->value;
    if (auto* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * vb[i];
    }
    if (auto* g = grad_of(self, 1)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * va[i];
    }
  });
}

Tensor scale(const Tensor& x, double factor) {
  require_defined(x, "scale");
  std::vector<double> out(x.values().begin(), x.values().end());
  for (double& v : out) v *= factor;
  return make_result(x.shape(), std::move(out), "scale", {x}, [factor](Node& self) {
    if (auto* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += factor * self.grad[i];
    }
  });
}

Tensor add_scalar(const Tensor& x, double offset) {
  require_defined(x, "add_scalar");
  std::vector<double> out(x.values().begin(), x.values().end());
  for (double& v : out) v += offset;
  return make_result(x.shape(), std::move(out), "add_scalar", {x}, [](Node& self) {
    if (auto* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    }
  });
}

Tensor broadcast_to(const Tensor& x, const Shape& shape) {
  require_defined(x, "broadcast_to");
  auto src = broadcast_strides(x.shape(), shape, "broadcast_to");
  std::vector<double> out(shape_numel(shape));
  const auto vx = x.values();
  for_each_mapped(shape, src, [&](std::size_t d, std::size_t s) { out[d] = vx[s]; });
  return make_result(shape, std::move(out), "broadcast_to", {x},
                     [shape, src = std::move(src)](Node& self) {
                       auto* g = grad_of(self, 0);
                       if (!g) return;
                       for_each_mapped(shape, src, [&](std::size_t d, std::size_t s) {
                         (*g)[s] += self.grad[d];
                       });
                     });
}

Tensor gelu(const Tensor& x) {
  require_defined(x, "gelu");
  std::vector<double> out(x.numel());
  const auto vx = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = 0.5 * vx[i] * (1.0 + std::erf(vx[i] * std::numbers::sqrt2 / 2.0));
  }
  return make_result(x.shape(), std::move(out), "gelu", {x}, [](Node& self) {
    auto* g = grad_of(self, 0);
    if (!g) return;
    const auto& vx = self.inputs[0]->value;
    constexpr double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
    for (std::size_t i = 0; i < g->size(); ++i) {
      const double v = vx[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      (*g)[i] += self.grad[i] * (cdf + v * pdf);
    }
  });
}

Tensor masked_softmax(const Tensor& scores, const Tensor& weights) {
  require_defined(scores, "masked_softmax");
  require_defined(weights, "masked_softmax");
  if (scores.rank() < 1) throw ShapeError("masked_softmax: scores need at least one axis");
  const Shape& shape = scores.shape();
  const std::size_t cols = shape.back();
  const std::size_t rows = cols ? scores.numel() / cols : 0;

  std::vector<double> w(scores.numel());
  const auto vw = weights.values();
  for_each_mapped(shape, broadcast_strides(weights.shape(), shape, "masked_softmax"),
                  [&](std::size_t d, std::size_t s) { w[d] = vw[s]; });
  for (double v : vw) {
    if (!(v >= 0.0 && v <= 1.0)) throw DataError("masked_softmax: weight outside [0,1]");
  }

  const auto vs = scores.values();
  std::vector<double> out(scores.numel(), 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t base = r * cols;
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cols; ++c) {
      if (w[base + c] > 0.0) peak = std::max(peak, vs[base + c]);
    }
    if (!std::isfinite(peak)) {
      throw DegenerateRowError("masked_softmax: row " + std::to_string(r) +
                               " has no positive weight");
    }
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double e = w[base + c] > 0.0 ? std::exp(vs[base + c] - peak) * w[base + c] : 0.0;
      out[base + c] = e;
      total += e;
    }
    if (!(total > 0.0)) {
      throw DegenerateRowError("masked_softmax: row " + std::to_string(r) + " underflows");
    }
    for (std::size_t c = 0; c < cols; ++c) out[base + c] /= total;
  }
  return make_result(shape, std::move(out), "masked_softmax", {scores, weights},
                     [rows, cols](Node& self) {
                       auto* g = grad_of(self, 0);
                       if (!g) return;
                       // Same Jacobian as softmax(s + log w): dy/ds = diag(y) - y y^T.
                       const std::vector<double>& y = self.value;
                       for (std::size_t r = 0; r < rows; ++r) {
                         const std::size_t base = r * cols;
                         double dot = 0.0;
                         for (std::size_t c = 0; c < cols; ++c) dot += y[base + c] * self.grad[base + c];
                         for (std::size_t c = 0; c < cols; ++c) {
                           (*g)[base + c] += y[base + c] * (self.grad[base + c] - dot);
                         }
                       }
                     });
}

// ---- structural -----------------------------------------------------------

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  for (const auto& p : parts) require_defined(p, "concat");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw ShapeError("concat: axis out of range");
  Shape shape = first;
  shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t k = 0; ok && k < s.size(); ++k) ok = k == axis || s[k] == first[k];
    if (!ok) {
      throw ShapeError("concat: incompatible shapes " + shape_str(first) + " and " + shape_str(s));
    }
    shape[axis] += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t k = 0; k < axis; ++k) outer *= shape[k];
  for (std::size_t k = axis + 1; k < shape.size(); ++k) inner *= shape[k];

  std::vector<std::size_t> block;  // contiguous run per outer index for each part
  for (const auto& p : parts) block.push_back(p.shape()[axis] * inner);
  const std::size_t row = shape[axis] * inner;

  std::vector<double> out(shape_numel(shape));
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto v = parts[k].values();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(v.data() + o * block[k], block[k], out.data() + o * row + offset);
    }
    offset += block[k];
  }
  return make_result(std::move(shape), std::move(out), "concat", parts,
                     [outer, row, block](Node& self) {
                       std::size_t off = 0;
                       for (std::size_t k = 0; k < block.size(); ++k) {
                         if (auto* g = grad_of(self, k)) {
                           for (std::size_t o = 0; o < outer; ++o) {
                             const double* src = self.grad.data() + o * row + off;
                             double* dst = g->data() + o * block[k];
                             for (std::size_t i = 0; i < block[k]; ++i) dst[i] += src[i];
                           }
                         }
                         off += block[k];
                       }
                     });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  require_defined(x, "slice");
  if (axis >= x.rank() || begin > end || end > x.dim(axis)) {
    throw ShapeError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") invalid for axis " + std::to_string(axis) + " of " + shape_str(x.shape()));
  }
  Shape shape = x.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t k = 0; k < axis; ++k) outer *= shape[k];
  for (std::size_t k = axis + 1; k < shape.size(); ++k) inner *= shape[k];
  const std::size_t src_row = shape[axis] * inner;
  const std::size_t len = (end - begin) * inner;
  const std::size_t first = begin * inner;
  shape[axis] = end - begin;
  std::vector<double> out(outer * len);
  const auto v = x.values();
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(v.data() + o * src_row + first, len, out.data() + o * len);
  }
  return make_result(std::move(shape), std::move(out), "slice", {x},
                     [outer, src_row, len, first](Node& self) {
                       auto* g = grad_of(self, 0);
                       if (!g) return;
                       for (std::size_t o = 0; o < outer; ++o) {
                         double* dst = g->data() + o * src_row + first;
                         const double* src = self.grad.data() + o * len;
                         for (std::size_t i = 0; i < len; ++i) dst[i] += src[i];
                       }
                     });
}

Tensor reshape(const Tensor& x, Shape shape) {
  require_defined(x, "reshape");
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape) +
                     " changes element count");
  }
  std::vector<double> out(x.values().begin(), x.values().end());
  return make_result(std::move(shape), std::move(out), "reshape", {x}, [](Node& self) {
    if (auto* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    }
  });
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes) {
  require_defined(x, "permute");
  const Shape& in = x.shape();
  if (axes.size() != in.size()) throw ShapeError("permute: axis count mismatch");
  std::vector<bool> used(in.size(), false);
  for (auto a : axes) {
    if (a >= in.size() || used[a]) throw ShapeError("permute: axes are not a permutation");
    used[a] = true;
  }
  const auto in_strides = strides_of(in);
  Shape shape(in.size());
  std::vector<std::size_t> src(in.size());
  for (std::size_t k = 0; k < axes.size(); ++k) {
    shape[k] = in[axes[k]];
    src[k] = in_strides[axes[k]];
  }
  std::vector<double> out(x.numel());
  const auto vx = x.values();
  for_each_mapped(shape, src, [&](std::size_t d, std::size_t s) { out[d] = vx[s]; });
  return make_result(shape, std::move(out), "permute", {x}, [shape, src](Node& self) {
    auto* g = grad_of(self, 0);
    if (!g) return;
    for_each_mapped(shape, src, [&](std::size_t d, std::size_t s) { (*g)[s] += self.grad[d]; });
  });
}

Tensor reduce_sum(const Tensor& x) {
  require_defined(x, "reduce_sum");
  double total = 0.0;
  for (double v : x.values()) total += v;
  return make_result({}, {total}, "reduce_sum", {x}, [](Node& self) {
    if (auto* g = grad_of(self, 0)) {
      for (double& v : *g) v += self.grad[0];
    }
  });
}

Tensor batch_smooth_l1(const Tensor& pred, std::span<const double> target,
                       std::span<const unsigned char> mask) {
  require_defined(pred, "batch_smooth_l1");
  if (pred.rank() < 1 || target.size() != pred.numel() || mask.size() != pred.numel()) {
    throw ShapeError("smooth_l1: prediction " + shape_str(pred.shape()) +
                     " does not match target/mask sizes");
  }
  const std::size_t batch = pred.dim(0);
  const std::size_t per = batch ? pred.numel() / batch : 0;
  const auto vp = pred.values();
  std::vector<double> weight(pred.numel(), 0.0);  // d(loss)/d(elementwise loss)
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    std::size_t count = 0;
    for (std::size_t i = b * per; i < (b + 1) * per; ++i) count += mask[i] ? 1 : 0;
    if (count == 0) continue;
    double sum = 0.0;
    for (std::size_t i = b * per; i < (b + 1) * per; ++i) {
      if (!mask[i]) continue;
      const double d = vp[i] - target[i];
      sum += std::abs(d) < 1.0 ? 0.5 * d * d : std::abs(d) - 0.5;
      weight[i] = 1.0 / (static_cast<double>(count) * static_cast<double>(batch));
    }
    total += sum / static_cast<double>(count);
  }
  if (batch > 0) total /= static_cast<double>(batch);
  std::vector<double> tgt(target.begin(), target.end());
  return make_result({}, {total}, "smooth_l1", {pred},
                     [weight = std::move(weight), tgt = std::move(tgt)](Node& self) {
                       auto* g = grad_of(self, 0);
                       if (!g) return;
                       const auto& vp = self.inputs[0]->value;
                       for (std::size_t i = 0; i < g->size(); ++i) {
                         if (weight[i] == 0.0) continue;
                         const double d = vp[i] - tgt[i];
                         const double slope = std::abs(d) < 1.0 ? d : (d > 0.0 ? 1.0 : -1.0);
                         (*g)[i] += self.grad[0] * weight[i] * slope;
                       }
                     });
}

}  // namespace glgat
