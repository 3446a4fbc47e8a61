// SPDX-License-Identifier: Apache-2.0
#include "magpha/nn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace magpha {

void LayerSpec::validate() const {
  if (kind == LayerKind::Dense) {
    if (in_width <= 0 || out_width <= 0) {
      throw std::invalid_argument("LayerSpec: dense widths must be positive");
    }
    return;
  }
  if (in_channels <= 0 || out_channels <= 0) {
    throw std::invalid_argument("LayerSpec: conv channels must be positive");
  }
  if (kernel <= 0 || kernel % 2 == 0) {
    throw std::invalid_argument("LayerSpec: kernel must be positive and odd");
  }
}

int64_t LayerSpec::parameter_count() const {
  validate();
  if (kind == LayerKind::Dense) return out_width * in_width + out_width;
  return out_channels * in_channels * kernel * kernel + out_channels;
}

Var ParameterStore::create(const std::string& name, Tensor init) {
  if (params_.count(name)) {
    throw std::invalid_argument("ParameterStore: duplicate parameter '" + name + "'");
  }
  Var v = Var::leaf(std::move(init), /*requires_grad=*/true);
  order_.push_back(name);
  params_.emplace(name, v);
  return v;
}

Var ParameterStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) {
    throw std::invalid_argument("ParameterStore: unknown parameter '" + name + "'");
  }
  return it->second;
}

std::vector<std::string> ParameterStore::names_with_prefix(const std::string& prefix) const {
  std::vector<std::string> out;
  for (const auto& n : order_) {
    if (n.rfind(prefix, 0) == 0) out.push_back(n);
  }
  return out;
}

int64_t ParameterStore::parameter_count(const std::string& prefix) const {
  int64_t total = 0;
  for (const auto& n : order_) {
    if (n.rfind(prefix, 0) == 0) total += params_.at(n).value().numel();
  }
  return total;
}

void ParameterStore::zero_grads() {
  for (const auto& n : order_) {
    auto it = params_.find(n);
    it->second.clear_grad();
  }
}

Tensor glorot_uniform(const std::vector<int64_t>& shape, int64_t fan_in, int64_t fan_out,
                      SeededRng& rng) {
  if (fan_in <= 0 || fan_out <= 0) {
    throw std::invalid_argument("glorot_uniform: fans must be positive");
  }
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t(shape);
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-limit, limit);
  return t;
}

Var apply_activation(const Var& x, Activation act, double leaky_slope) {
  switch (act) {
    case Activation::None:
      return x;
    case Activation::Tanh:
      return vtanh(x);
    case Activation::Sigmoid:
      return vsigmoid(x);
    case Activation::LeakyLinear:
      return leaky_linear(x, leaky_slope);
  }
  throw std::invalid_argument("apply_activation: unknown activation");
}

GradientCheckReport gradient_check(const std::function<Var()>& f,
                                   const std::vector<std::pair<std::string, Var>>& targets,
                                   double eps, double tol, int64_t max_coords_per_target,
                                   uint64_t sample_seed) {
  if (!(eps > 0.0) || !(tol > 0.0)) {
    throw std::invalid_argument("gradient_check: eps and tol must be positive");
  }
  for (const auto& [name, v] : targets) {
    if (!v.requires_grad()) {
      throw std::invalid_argument("gradient_check: target '" + name + "' does not require grad");
    }
    const_cast<Var&>(v).clear_grad();
  }
  Var y = f();
  if (y.value().numel() != 1) {
    throw std::invalid_argument("gradient_check: f must be scalar-valued");
  }
  backward(y);

  std::vector<Tensor> analytic;
  analytic.reserve(targets.size());
  for (const auto& [name, v] : targets) {
    analytic.push_back(v.grad());
  }

  GradientCheckReport report;
  report.tol = tol;
  SeededRng pick(mix_seed(sample_seed, 0xC0FFEEULL));
  for (size_t t = 0; t < targets.size(); ++t) {
    Var v = targets[t].second;
    Tensor& val = v.mutable_value();
    const int64_t n = val.numel();
    std::vector<int64_t> coords;
    if (max_coords_per_target < 0 || max_coords_per_target >= n) {
      coords.resize(static_cast<size_t>(n));
      for (int64_t i = 0; i < n; ++i) coords[static_cast<size_t>(i)] = i;
    } else {
      for (int64_t i = 0; i < max_coords_per_target; ++i) {
        coords.push_back(static_cast<int64_t>(pick.uniform_int(static_cast<uint64_t>(n))));
      }
    }
    for (int64_t c : coords) {
      const double saved = val[c];
      val[c] = saved + eps;
      const double yp = f().value()[0];
      val[c] = saved - eps;
      const double ym = f().value()[0];
      val[c] = saved;
      const double fd = (yp - ym) / (2.0 * eps);
      const double an = analytic[t][c];
      const double rel = std::fabs(fd - an) / std::max({std::fabs(fd), std::fabs(an), 1.0});
      ++report.coords_checked;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_target = targets[t].first;
        report.worst_coord = c;
      }
    }
  }
  report.pass = report.max_rel_error <= tol;
  return report;
}

GradientCheckReport gradient_check(const std::function<Var(const Var&)>& f, const Tensor& x,
                                   double eps, double tol) {
  Var leaf = Var::leaf(x, /*requires_grad=*/true);
  auto builder = [&f, leaf]() { return f(leaf); };
  return gradient_check(builder, {{"x", leaf}}, eps, tol);
}

}  // namespace magpha
