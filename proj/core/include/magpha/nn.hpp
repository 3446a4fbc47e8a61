// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "magpha/autodiff.hpp"
#include "magpha/rng.hpp"
#include "magpha/tensor.hpp"

namespace magpha {

enum class Activation { None, Tanh, Sigmoid, LeakyLinear };
enum class LayerKind { CircularConv, LinearConv, Dense };

/// One core-network layer. Conv layers use kernel/in_channels/out_channels;
/// dense layers use in_width/out_width.
struct LayerSpec {
  LayerKind kind = LayerKind::CircularConv;
  int64_t kernel = 7;
  int64_t in_channels = 0;
  int64_t out_channels = 0;
  int64_t in_width = 0;
  int64_t out_width = 0;
  Activation activation = Activation::None;

  void validate() const;
  int64_t parameter_count() const;
};

/// Named trainable tensors with a stable creation order.
class ParameterStore {
 public:
  /// Registers a new parameter; names must be unique.
  Var create(const std::string& name, Tensor init);
  bool has(const std::string& name) const { return params_.count(name) > 0; }
  Var get(const std::string& name) const;

  /// Names in creation order.
  const std::vector<std::string>& names() const { return order_; }
  std::vector<std::string> names_with_prefix(const std::string& prefix) const;
  int64_t parameter_count(const std::string& prefix = "") const;
  void zero_grads();

 private:
  std::vector<std::string> order_;
  std::unordered_map<std::string, Var> params_;
};

/// Uniform Glorot-style initialization, U(-L, L) with L = sqrt(6/(fan_in+fan_out)).
Tensor glorot_uniform(const std::vector<int64_t>& shape, int64_t fan_in, int64_t fan_out,
                      SeededRng& rng);

Var apply_activation(const Var& x, Activation act, double leaky_slope = 0.3);

struct GradientCheckReport {
  bool pass = false;
  double max_rel_error = 0.0;
  double tol = 0.0;
  int64_t coords_checked = 0;
  std::string worst_target;
  int64_t worst_coord = -1;
};

/// Compares reverse-mode gradients of the scalar-valued rebuildable function
/// `f` against central finite differences at each checked coordinate of the
/// target leaves. `max_coords_per_target` < 0 checks every coordinate;
/// otherwise a seeded subset is sampled.
GradientCheckReport gradient_check(const std::function<Var()>& f,
                                   const std::vector<std::pair<std::string, Var>>& targets,
                                   double eps, double tol, int64_t max_coords_per_target = -1,
                                   uint64_t sample_seed = 0);

/// Single-input convenience form: checks d f(x) / dx.
GradientCheckReport gradient_check(const std::function<Var(const Var&)>& f, const Tensor& x,
                                   double eps, double tol);

}  // namespace magpha
