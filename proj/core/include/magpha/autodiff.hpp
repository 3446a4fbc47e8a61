// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "magpha/tensor.hpp"

namespace magpha {

// Reverse-mode automatic differentiation over batched tensors.
//
// A graph is built dynamically by applying ops to Var handles; backward()
// on a scalar output accumulates gradients into every reachable node that
// requires them. Leaf gradients accumulate across backward() calls until
// cleared; interior gradients are refreshed on each call.

struct Node {
  Tensor value;
  Tensor grad;  // allocated on first write, same shape as value
  bool requires_grad = false;
  std::string op;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void()> backprop;  // pushes this->grad into input grads

  bool is_leaf() const { return inputs.empty(); }
  Tensor& ensure_grad();
};

using NodeRef = std::shared_ptr<Node>;

/// Value-semantic handle to a graph node.
class Var {
 public:
  Var() = default;
  explicit Var(NodeRef n) : node_(std::move(n)) {}

  /// New leaf holding `value`. Parameters pass requires_grad = true.
  static Var leaf(Tensor value, bool requires_grad = false);
  static Var constant(Tensor value) { return leaf(std::move(value), false); }

  bool valid() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  Tensor& grad() { return node_->ensure_grad(); }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool rg);
  void clear_grad();

  const NodeRef& node() const { return node_; }

 private:
  NodeRef node_;
};

enum class ConvPadding { Circular, Zero };
enum class QuantizerMode { Training, Deployment };

// ---- elementwise ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var affine(const Var& x, double scale, double shift);
Var vtanh(const Var& x);
Var vsigmoid(const Var& x);
Var leaky_linear(const Var& x, double negative_slope);
Var vabs(const Var& x);
Var vsin(const Var& x);
Var vcos(const Var& x);
Var square(const Var& x);
/// Value is the exact sqrt(max(x, 0)); the derivative uses max(x, grad_floor)
/// in the denominator so it stays bounded near zero.
Var sqrt_guarded(const Var& x, double grad_floor);
/// Elementwise sqrt(max(1 - x^2, 0)) (bit-identical to the analytic
/// recombination); derivative -x / sqrt(max(1 - x^2, grad_floor)).
Var pythag_sine(const Var& x, double grad_floor);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator*(double s, const Var& x) { return affine(x, s, 0.0); }

// ---- shape ----
Var reshape(const Var& x, std::vector<int64_t> shape);
/// Concatenate along the channel axis: [N,Ca,H,W] + [N,Cb,H,W] -> [N,Ca+Cb,H,W].
Var concat_channels(const Var& a, const Var& b);

// ---- linear algebra ----
/// Affine map. x: [N,Fin] or [Fin]; w: [Fout,Fin]; b: [Fout].
Var dense(const Var& x, const Var& w, const Var& b);

/// 2-D cross-correlation, output spatial size equals input size.
/// x: [N,Cin,H,W]; k: [Cout,Cin,kh,kw] with kh == kw odd; b: [Cout].
/// Circular padding wraps both spatial dimensions; Zero pads with zeros.
Var conv2d(const Var& x, const Var& k, const Var& b, ConvPadding padding);
inline Var circular_conv2d(const Var& x, const Var& k, const Var& b) {
  return conv2d(x, k, b, ConvPadding::Circular);
}
inline Var linear_conv2d(const Var& x, const Var& k, const Var& b) {
  return conv2d(x, k, b, ConvPadding::Zero);
}

// ---- reductions ----
Var sum(const Var& x);  // -> scalar [1]

// ---- quantizers ----
/// Sum-of-sigmoid quantizer over k bits.
/// Training mode is the smooth staircase (1/(2^k-1)) * sum_i sigmoid(alpha*(x - i/2^k));
/// Deployment mode hard-rounds to the 2^k levels {0, 1/(2^k-1), ..., 1} and
/// passes no gradient.
Var ssq_quantize(const Var& x, int bits, double sharpness, QuantizerMode mode);

/// Binary-level quantizer: forward thresholds at 0.5 into {0,1}; backward is
/// straight-through (identity inside [0,1], zero outside).
Var blq_quantize(const Var& x);

/// Reverse-mode sweep from a scalar output. Leaf grads accumulate across
/// calls; interior grads are reset each call.
void backward(const Var& output);

}  // namespace magpha
