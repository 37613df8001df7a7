#pragma once

// Dense 64-bit tensors with reverse-mode automatic differentiation.
//
// A Tensor is a cheap handle onto a graph node. Operations on tensors that
// require gradients record their inputs and a backward rule; Tensor::backward
// linearizes the reachable graph into a Tape and runs the rules in reverse.
// Leaf gradients accumulate across backward calls until zero_grad().
//
// Every operation checks that its output is finite and throws
// NumericalError otherwise. GELU is the exact erf form, not the tanh
// approximation.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace glgat {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into the grads of `inputs`.
  std::function<void(Node&)> backward;

  bool is_leaf() const { return !backward; }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> values() const;
  // Mutable access is for leaves only (optimizers, initializers, tests).
  std::span<double> mutable_values();
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  // Seeds d(self)/d(self) = 1; self must hold exactly one element.
  void backward() const;

  // Value copy without graph history.
  Tensor detach() const;
  const char* op_name() const;

  // Identity of the underlying node; equal handles share storage.
  const detail::Node* node_id() const { return node_.get(); }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;

  friend class Tape;
  friend Tensor make_result(Shape, std::vector<double>, const char*,
                            std::vector<Tensor>,
                            std::function<void(detail::Node&)>);
  friend std::shared_ptr<detail::Node> node_of(const Tensor&);
};

// Topologically ordered record of every gradient-carrying node reachable
// from a root. Inputs always precede the operations that consume them.
class Tape {
 public:
  explicit Tape(const Tensor& root);

  std::size_t size() const { return order_.size(); }
  // Position of a tensor's node on the tape, or size() if absent.
  std::size_t position(const Tensor& t) const;
  const std::vector<const detail::Node*>& order() const { return view_; }

  // Zeroes intermediate grads, seeds the root with 1, runs each rule once.
  void backward();

 private:
  std::vector<std::shared_ptr<detail::Node>> order_;
  std::vector<const detail::Node*> view_;
};

// Disables graph recording on the current thread while alive.
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

// ---- primitives -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);                  // [M,K]x[K,P]
Tensor bmm(const Tensor& a, const Tensor& b);                     // [B,M,K]x[B,K,P]
// y[..., o] = sum_i x[..., i] * w[o, i] + b[o]; `b` may be undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
// x: [G,N,I], w: [N,O,I], b: [N,O]; vertex n uses its own w[n], b[n].
Tensor per_vertex_linear(const Tensor& x, const Tensor& w, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double offset);
// Right-aligned broadcasting; source dims must be 1 or equal to the target.
Tensor broadcast_to(const Tensor& x, const Shape& shape);

Tensor gelu(const Tensor& x);

// Softmax over the last axis with multiplicative [0,1] weights:
//   out[.., i, j] = exp(s[.., i, j]) w[.., i, j] / sum_k exp(s[.., i, k]) w[.., i, k]
// `weights` broadcasts to the scores' shape and never receives gradient.
Tensor masked_softmax(const Tensor& scores, const Tensor& weights);

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end);
Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes);
Tensor reduce_sum(const Tensor& x);

// Smooth-L1 averaged over mask-true elements of each leading-axis sample,
// then averaged over samples. Gradient flows to `pred` only. Samples with an
// empty mask contribute 0.
Tensor batch_smooth_l1(const Tensor& pred, std::span<const double> target,
                       std::span<const unsigned char> mask);

}  // namespace glgat
