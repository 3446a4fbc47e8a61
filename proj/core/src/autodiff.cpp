// SPDX-License-Identifier: Apache-2.0
#include "magpha/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <unordered_set>

#include "magpha/errors.hpp"
#include "magpha/numeric.hpp"

namespace magpha {

namespace {

void check_finite(const char* op, const Tensor& t) {
  if (!t.all_finite()) {
    throw NumericError(std::string(op) + ": non-finite values in forward output");
  }
}

NodeRef make_node(const char* op, Tensor value, std::vector<NodeRef> inputs) {
  check_finite(op, value);
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->op = op;
  n->inputs = std::move(inputs);
  for (const auto& in : n->inputs) {
    if (in->requires_grad) n->requires_grad = true;
  }
  return n;
}

void require_same_shape(const char* op, const Var& a, const Var& b) {
  if (!a.value().same_shape(b.value())) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.value().shape_str() +
                                " vs " + b.value().shape_str());
  }
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

Tensor& Node::ensure_grad() {
  if (grad.numel() != value.numel()) grad = Tensor(value.shape());
  return grad;
}

Var Var::leaf(Tensor value, bool requires_grad) {
  check_finite("leaf", value);
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->op = "leaf";
  n->requires_grad = requires_grad;
  return Var(n);
}

void Var::set_requires_grad(bool rg) {
  if (!node_->is_leaf()) {
    throw std::invalid_argument("set_requires_grad: only valid on leaf nodes");
  }
  node_->requires_grad = rg;
}

void Var::clear_grad() {
  if (node_->grad.numel() > 0) node_->grad.fill(0.0);
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

namespace {

// Builds an elementwise binary node. dfa/dfb give per-element partials.
Var binary_elemwise(const char* op, const Var& a, const Var& b,
                    double (*fv)(double, double), double (*dfa)(double, double),
                    double (*dfb)(double, double)) {
  require_same_shape(op, a, b);
  const int64_t n = a.value().numel();
  Tensor out(a.value().shape());
  const double* pa = a.value().data();
  const double* pb = b.value().data();
  double* po = out.data();
  for (int64_t i = 0; i < n; ++i) po[i] = fv(pa[i], pb[i]);
  auto node = make_node(op, std::move(out), {a.node(), b.node()});
  if (node->requires_grad) {
    Node* raw = node.get();
    Node* na = a.node().get();
    Node* nb = b.node().get();
    node->backprop = [raw, na, nb, dfa, dfb, n]() {
      const double* g = raw->grad.data();
      const double* pa2 = na->value.data();
      const double* pb2 = nb->value.data();
      if (na->requires_grad) {
        double* ga = na->ensure_grad().data();
        for (int64_t i = 0; i < n; ++i) ga[i] += g[i] * dfa(pa2[i], pb2[i]);
      }
      if (nb->requires_grad) {
        double* gb = nb->ensure_grad().data();
        for (int64_t i = 0; i < n; ++i) gb[i] += g[i] * dfb(pa2[i], pb2[i]);
      }
    };
  }
  return Var(node);
}

}  // namespace

Var add(const Var& a, const Var& b) {
  return binary_elemwise(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Var sub(const Var& a, const Var& b) {
  return binary_elemwise(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Var mul(const Var& a, const Var& b) {
  return binary_elemwise(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

namespace {

// Unary op where the derivative is a function of (input, output).
template <typename FwdFn, typename GradFn>
Var unary_elemwise(const char* op, const Var& x, FwdFn fv, GradFn dfx) {
  const int64_t n = x.value().numel();
  Tensor out(x.value().shape());
  const double* px = x.value().data();
  double* po = out.data();
  for (int64_t i = 0; i < n; ++i) po[i] = fv(px[i]);
  auto node = make_node(op, std::move(out), {x.node()});
  if (node->requires_grad) {
    Node* raw = node.get();
    Node* nx = x.node().get();
    node->backprop = [raw, nx, dfx, n]() {
      if (!nx->requires_grad) return;
      const double* g = raw->grad.data();
      const double* px2 = nx->value.data();
      const double* py2 = raw->value.data();
      double* gx = nx->ensure_grad().data();
      for (int64_t i = 0; i < n; ++i) gx[i] += g[i] * dfx(px2[i], py2[i]);
    };
  }
  return Var(node);
}

}  // namespace

Var affine(const Var& x, double scale, double shift) {
  return unary_elemwise(
      "affine", x, [scale, shift](double v) { return scale * v + shift; },
      [scale](double, double) { return scale; });
}

Var vtanh(const Var& x) {
  return unary_elemwise(
      "tanh", x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Var vsigmoid(const Var& x) {
  return unary_elemwise(
      "sigmoid", x, [](double v) { return sigmoid(v); },
      [](double, double y) { return y * (1.0 - y); });
}

Var leaky_linear(const Var& x, double negative_slope) {
  return unary_elemwise(
      "leaky_linear", x,
      [negative_slope](double v) { return v >= 0.0 ? v : negative_slope * v; },
      [negative_slope](double v, double) { return v >= 0.0 ? 1.0 : negative_slope; });
}

Var vabs(const Var& x) {
  return unary_elemwise(
      "abs", x, [](double v) { return std::fabs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Var vsin(const Var& x) {
  return unary_elemwise(
      "sin", x, [](double v) { return std::sin(v); },
      [](double v, double) { return std::cos(v); });
}

Var vcos(const Var& x) {
  return unary_elemwise(
      "cos", x, [](double v) { return std::cos(v); },
      [](double v, double) { return -std::sin(v); });
}

Var square(const Var& x) {
  return unary_elemwise(
      "square", x, [](double v) { return v * v; },
      [](double v, double) { return 2.0 * v; });
}

Var sqrt_guarded(const Var& x, double grad_floor) {
  if (!(grad_floor > 0.0)) throw std::invalid_argument("sqrt_guarded: grad_floor must be > 0");
  return unary_elemwise(
      "sqrt_guarded", x,
      [](double v) { return std::sqrt(v > 0.0 ? v : 0.0); },
      [grad_floor](double v, double) { return 0.5 / std::sqrt(v > grad_floor ? v : grad_floor); });
}

Var pythag_sine(const Var& x, double grad_floor) {
  if (!(grad_floor > 0.0)) throw std::invalid_argument("pythag_sine: grad_floor must be > 0");
  return unary_elemwise(
      "pythag_sine", x, [](double v) { return pythag_sine_value(v); },
      [grad_floor](double v, double) {
        const double rem = 1.0 - v * v;
        return -v / std::sqrt(rem > grad_floor ? rem : grad_floor);
      });
}

// ---------------------------------------------------------------------------
// shape
// ---------------------------------------------------------------------------

Var reshape(const Var& x, std::vector<int64_t> shape) {
  if (Tensor::numel_of(shape) != x.value().numel()) {
    throw std::invalid_argument("reshape: element count mismatch for " + x.value().shape_str());
  }
  Tensor out(std::move(shape), x.value().values());
  auto node = make_node("reshape", std::move(out), {x.node()});
  if (node->requires_grad) {
    Node* raw = node.get();
    Node* nx = x.node().get();
    node->backprop = [raw, nx]() {
      if (!nx->requires_grad) return;
      const int64_t n = raw->grad.numel();
      const double* g = raw->grad.data();
      double* gx = nx->ensure_grad().data();
      for (int64_t i = 0; i < n; ++i) gx[i] += g[i];
    };
  }
  return Var(node);
}

Var concat_channels(const Var& a, const Var& b) {
  const auto& sa = a.value().shape();
  const auto& sb = b.value().shape();
  if (sa.size() != 4 || sb.size() != 4 || sa[0] != sb[0] || sa[2] != sb[2] || sa[3] != sb[3]) {
    throw std::invalid_argument("concat_channels: incompatible shapes " + a.value().shape_str() +
                                " vs " + b.value().shape_str());
  }
  const int64_t n = sa[0], ca = sa[1], cb = sb[1], hw = sa[2] * sa[3];
  Tensor out({n, ca + cb, sa[2], sa[3]});
  for (int64_t i = 0; i < n; ++i) {
    std::memcpy(out.data() + i * (ca + cb) * hw, a.value().data() + i * ca * hw,
                static_cast<size_t>(ca * hw) * sizeof(double));
    std::memcpy(out.data() + i * (ca + cb) * hw + ca * hw, b.value().data() + i * cb * hw,
                static_cast<size_t>(cb * hw) * sizeof(double));
  }
  auto node = make_node("concat_channels", std::move(out), {a.node(), b.node()});
  if (node->requires_grad) {
    Node* raw = node.get();
    Node* na = a.node().get();
    Node* nb = b.node().get();
    node->backprop = [raw, na, nb, n, ca, cb, hw]() {
      const double* g = raw->grad.data();
      if (na->requires_grad) {
        double* ga = na->ensure_grad().data();
        for (int64_t i = 0; i < n; ++i) {
          const double* gi = g + i * (ca + cb) * hw;
          double* gai = ga + i * ca * hw;
          for (int64_t j = 0; j < ca * hw; ++j) gai[j] += gi[j];
        }
      }
      if (nb->requires_grad) {
        double* gb = nb->ensure_grad().data();
        for (int64_t i = 0; i < n; ++i) {
          const double* gi = g + i * (ca + cb) * hw + ca * hw;
          double* gbi = gb + i * cb * hw;
          for (int64_t j = 0; j < cb * hw; ++j) gbi[j] += gi[j];
        }
      }
    };
  }
  return Var(node);
}

// ---------------------------------------------------------------------------
// dense
// ---------------------------------------------------------------------------

Var dense(const Var& x, const Var& w, const Var& b) {
  const auto& sx = x.value().shape();
  const auto& sw = w.value().shape();
  const auto& sb = b.value().shape();
  if (sw.size() != 2 || sb.size() != 1 || sb[0] != sw[0]) {
    throw std::invalid_argument("dense: weights must be [m,n] with bias [m]");
  }
  const bool batched = sx.size() == 2;
  if (!batched && sx.size() != 1) {
    throw std::invalid_argument("dense: input must be [n] or [N,n]");
  }
  const int64_t fin = batched ? sx[1] : sx[0];
  const int64_t rows = batched ? sx[0] : 1;
  const int64_t fout = sw[0];
  if (fin != sw[1]) {
    throw std::invalid_argument("dense: input width " + std::to_string(fin) +
                                " does not match weights " + w.value().shape_str());
  }
  Tensor out(batched ? std::vector<int64_t>{rows, fout} : std::vector<int64_t>{fout});
  {
    const double* xd = x.value().data();
    const double* wd = w.value().data();
    const double* bd = b.value().data();
    double* od = out.data();
    for (int64_t n = 0; n < rows; ++n) {
      const double* xr = xd + n * fin;
      double* orow = od + n * fout;
      for (int64_t o = 0; o < fout; ++o) {
        // independent vector-width partials folded in a fixed order
        const double* wr = wd + o * fin;
        double part[8] = {0};
        double tail = 0.0;
        int64_t i = 0;
        for (; i + 8 <= fin; i += 8) {
          for (int64_t j = 0; j < 8; ++j) part[j] += xr[i + j] * wr[i + j];
        }
        for (; i < fin; ++i) tail += xr[i] * wr[i];
        double acc = bd[o] + tail;
        for (int64_t j = 0; j < 8; ++j) acc += part[j];
        orow[o] = acc;
      }
    }
  }
  auto node = make_node("dense", std::move(out), {x.node(), w.node(), b.node()});
  if (node->requires_grad) {
    Node* raw = node.get();
    Node* nx = x.node().get();
    Node* nw = w.node().get();
    Node* nb = b.node().get();
    node->backprop = [raw, nx, nw, nb, rows, fin, fout]() {
      const double* gy = raw->grad.data();
      if (nw->requires_grad) {
        double* gw = nw->ensure_grad().data();
        const double* xd = nx->value.data();
        for (int64_t n = 0; n < rows; ++n) {
          const double* xr = xd + n * fin;
          const double* gyr = gy + n * fout;
          for (int64_t o = 0; o < fout; ++o) {
            const double g = gyr[o];
            double* gwr = gw + o * fin;
            for (int64_t i = 0; i < fin; ++i) gwr[i] += g * xr[i];
          }
        }
      }
      if (nb->requires_grad) {
        double* gb = nb->ensure_grad().data();
        for (int64_t o = 0; o < fout; ++o) {
          double acc = 0.0;
          for (int64_t n = 0; n < rows; ++n) acc += gy[n * fout + o];
          gb[o] += acc;
        }
      }
      if (nx->requires_grad) {
        double* gx = nx->ensure_grad().data();
        const double* wd = nw->value.data();
        for (int64_t n = 0; n < rows; ++n) {
          double* gxr = gx + n * fin;
          const double* gyr = gy + n * fout;
          for (int64_t o = 0; o < fout; ++o) {
            const double g = gyr[o];
            const double* wr = wd + o * fin;
            for (int64_t i = 0; i < fin; ++i) gxr[i] += g * wr[i];
          }
        }
      }
    };
  }
  return Var(node);
}

// ---------------------------------------------------------------------------
// conv2d
// ---------------------------------------------------------------------------

namespace {

struct ConvDims {
  int64_t n, cin, h, w, cout, k, pad, hw, cikk, ph, pw;
};

ConvDims conv_dims(const Var& x, const Var& kr, const Var& b) {
  const auto& sx = x.value().shape();
  const auto& sk = kr.value().shape();
  const auto& sb = b.value().shape();
  if (sx.size() != 4) throw std::invalid_argument("conv2d: input must be [N,C,H,W]");
  if (sk.size() != 4 || sk[2] != sk[3]) {
    throw std::invalid_argument("conv2d: kernels must be [Cout,Cin,k,k]");
  }
  if (sk[2] % 2 == 0) throw std::invalid_argument("conv2d: kernel size must be odd");
  if (sk[1] != sx[1]) {
    throw std::invalid_argument("conv2d: kernel expects " + std::to_string(sk[1]) +
                                " input channels, got " + std::to_string(sx[1]));
  }
  if (sb.size() != 1 || sb[0] != sk[0]) {
    throw std::invalid_argument("conv2d: bias must be [Cout]");
  }
  ConvDims d;
  d.n = sx[0];
  d.cin = sx[1];
  d.h = sx[2];
  d.w = sx[3];
  d.cout = sk[0];
  d.k = sk[2];
  d.pad = (d.k - 1) / 2;
  d.hw = d.h * d.w;
  d.cikk = d.cin * d.k * d.k;
  d.ph = d.h + 2 * d.pad;
  d.pw = d.w + 2 * d.pad;
  return d;
}

// Source index per padded coordinate; -1 marks zero fill.
std::vector<int64_t> pad_sources(int64_t size, int64_t pad, ConvPadding mode) {
  std::vector<int64_t> t(static_cast<size_t>(size + 2 * pad));
  for (int64_t p = 0; p < size + 2 * pad; ++p) {
    int64_t src = p - pad;
    if (mode == ConvPadding::Circular) {
      src %= size;
      if (src < 0) src += size;
    } else if (src < 0 || src >= size) {
      src = -1;
    }
    t[static_cast<size_t>(p)] = src;
  }
  return t;
}

void pad_plane(const double* src, int64_t w, const std::vector<int64_t>& ys,
               const std::vector<int64_t>& xs, double* dst) {
  const int64_t ph = static_cast<int64_t>(ys.size());
  const int64_t pw = static_cast<int64_t>(xs.size());
  for (int64_t py = 0; py < ph; ++py) {
    double* drow = dst + py * pw;
    const int64_t sy = ys[static_cast<size_t>(py)];
    if (sy < 0) {
      for (int64_t px = 0; px < pw; ++px) drow[px] = 0.0;
      continue;
    }
    const double* srow = src + sy * w;
    for (int64_t px = 0; px < pw; ++px) {
      const int64_t sx = xs[static_cast<size_t>(px)];
      drow[px] = sx < 0 ? 0.0 : srow[sx];
    }
  }
}

// acc[y][x] += sum_{dy,dx} k[dy][dx] * padded[y+dy][x+dx]
// Output stripes stay in registers across the whole kernel window; the wide
// stripe keeps four independent FMA chains in flight.
template <int64_t Block>
inline void corr_stripe(const double* __restrict__ padded, int64_t pw,
                        const double* __restrict__ kern, int64_t k, double* __restrict__ arow,
                        int64_t y, int64_t x0, int64_t w) {
  double blk[Block];
  for (int64_t j = 0; j < Block; ++j) blk[j] = arow[x0 + j];
  for (int64_t dy = 0; dy < k; ++dy) {
    const double* srow = padded + (y + dy) * pw + x0;
    const double* krow = kern + dy * k;
    for (int64_t dx = 0; dx < k; ++dx) {
      const double kv = krow[dx];
      const double* s = srow + dx;
      for (int64_t j = 0; j < Block; ++j) blk[j] += kv * s[j];
    }
  }
  for (int64_t j = 0; j < Block; ++j) arow[x0 + j] = blk[j];
  (void)w;
}

inline void corr_accumulate(const double* __restrict__ padded, int64_t pw,
                            const double* __restrict__ kern, int64_t k, double* __restrict__ acc,
                            int64_t h, int64_t w) {
  for (int64_t y = 0; y < h; ++y) {
    double* arow = acc + y * w;
    int64_t x0 = 0;
    for (; x0 + 32 <= w; x0 += 32) corr_stripe<32>(padded, pw, kern, k, arow, y, x0, w);
    for (; x0 + 8 <= w; x0 += 8) corr_stripe<8>(padded, pw, kern, k, arow, y, x0, w);
    for (; x0 < w; ++x0) {
      double v = arow[x0];
      for (int64_t dy = 0; dy < k; ++dy) {
        const double* srow = padded + (y + dy) * pw;
        const double* krow = kern + dy * k;
        for (int64_t dx = 0; dx < k; ++dx) v += krow[dx] * srow[x0 + dx];
      }
      arow[x0] = v;
    }
  }
}

}  // namespace

Var conv2d(const Var& x, const Var& kr, const Var& b, ConvPadding padding) {
  const ConvDims d = conv_dims(x, kr, b);
  const auto ys = pad_sources(d.h, d.pad, padding);
  const auto xs = pad_sources(d.w, d.pad, padding);

  Tensor out({d.n, d.cout, d.h, d.w});
  {
    std::vector<double> padded(static_cast<size_t>(d.cin * d.ph * d.pw));
    const double* kdata = kr.value().data();
    const double* bias = b.value().data();
    for (int64_t n = 0; n < d.n; ++n) {
      const double* sample = x.value().data() + n * d.cin * d.hw;
      for (int64_t ci = 0; ci < d.cin; ++ci) {
        pad_plane(sample + ci * d.hw, d.w, ys, xs, padded.data() + ci * d.ph * d.pw);
      }
      for (int64_t co = 0; co < d.cout; ++co) {
        double* plane = out.data() + (n * d.cout + co) * d.hw;
        for (int64_t p = 0; p < d.hw; ++p) plane[p] = bias[co];
        for (int64_t ci = 0; ci < d.cin; ++ci) {
          corr_accumulate(padded.data() + ci * d.ph * d.pw, d.pw,
                          kdata + (co * d.cin + ci) * d.k * d.k, d.k, plane, d.h, d.w);
        }
      }
    }
  }

  auto node = make_node(padding == ConvPadding::Circular ? "circular_conv2d" : "linear_conv2d",
                        std::move(out), {x.node(), kr.node(), b.node()});
  if (node->requires_grad) {
    Node* raw = node.get();
    Node* nx = x.node().get();
    Node* nk = kr.node().get();
    Node* nb = b.node().get();
    node->backprop = [raw, nx, nk, nb, d, ys, xs]() {
      const bool need_dk = nk->requires_grad;
      const bool need_dx = nx->requires_grad;
      const bool need_db = nb->requires_grad;
      const int64_t kk = d.k * d.k;

      if (need_db) {
        double* gb = nb->ensure_grad().data();
        for (int64_t co = 0; co < d.cout; ++co) {
          double acc = 0.0;
          for (int64_t n = 0; n < d.n; ++n) {
            const double* plane = raw->grad.data() + (n * d.cout + co) * d.hw;
            for (int64_t p = 0; p < d.hw; ++p) acc += plane[p];
          }
          gb[co] += acc;
        }
      }

      if (need_dk || need_dx) {
        std::vector<double> padded_in(need_dk ? static_cast<size_t>(d.cin * d.ph * d.pw) : 0);
        std::vector<double> padded_gy(need_dx ? static_cast<size_t>(d.cout * d.ph * d.pw) : 0);
        std::vector<double> kflip(need_dx ? static_cast<size_t>(d.cout * d.cin * kk) : 0);
        if (need_dx) {
          const double* kdata = nk->value.data();
          for (int64_t co = 0; co < d.cout; ++co) {
            for (int64_t ci = 0; ci < d.cin; ++ci) {
              const double* src = kdata + (co * d.cin + ci) * kk;
              double* dst = kflip.data() + (co * d.cin + ci) * kk;
              for (int64_t i = 0; i < kk; ++i) dst[i] = src[kk - 1 - i];
            }
          }
        }
        double* gk = need_dk ? nk->ensure_grad().data() : nullptr;
        double* gx = need_dx ? nx->ensure_grad().data() : nullptr;
        for (int64_t n = 0; n < d.n; ++n) {
          const double* gy = raw->grad.data() + n * d.cout * d.hw;
          if (need_dk) {
            const double* sample = nx->value.data() + n * d.cin * d.hw;
            for (int64_t ci = 0; ci < d.cin; ++ci) {
              pad_plane(sample + ci * d.hw, d.w, ys, xs, padded_in.data() + ci * d.ph * d.pw);
            }
            for (int64_t co = 0; co < d.cout; ++co) {
              const double* gplane = gy + co * d.hw;
              for (int64_t ci = 0; ci < d.cin; ++ci) {
                const double* pp = padded_in.data() + ci * d.ph * d.pw;
                double* gkp = gk + (co * d.cin + ci) * kk;
                for (int64_t dy = 0; dy < d.k; ++dy) {
                  for (int64_t dx = 0; dx < d.k; ++dx) {
                    // independent vector-width partial sums, folded in a
                    // fixed order
                    double part[16] = {0};
                    double tail = 0.0;
                    for (int64_t y = 0; y < d.h; ++y) {
                      const double* __restrict__ prow = pp + (y + dy) * d.pw + dx;
                      const double* __restrict__ grow = gplane + y * d.w;
                      int64_t x2 = 0;
                      for (; x2 + 16 <= d.w; x2 += 16) {
                        for (int64_t j = 0; j < 16; ++j) part[j] += prow[x2 + j] * grow[x2 + j];
                      }
                      for (; x2 + 8 <= d.w; x2 += 8) {
                        for (int64_t j = 0; j < 8; ++j) part[j] += prow[x2 + j] * grow[x2 + j];
                      }
                      for (; x2 < d.w; ++x2) tail += prow[x2] * grow[x2];
                    }
                    double acc = tail;
                    for (int64_t j = 0; j < 16; ++j) acc += part[j];
                    gkp[dy * d.k + dx] += acc;
                  }
                }
              }
            }
          }
          if (need_dx) {
            for (int64_t co = 0; co < d.cout; ++co) {
              pad_plane(gy + co * d.hw, d.w, ys, xs, padded_gy.data() + co * d.ph * d.pw);
            }
            for (int64_t ci = 0; ci < d.cin; ++ci) {
              double* gplane = gx + (n * d.cin + ci) * d.hw;
              for (int64_t co = 0; co < d.cout; ++co) {
                corr_accumulate(padded_gy.data() + co * d.ph * d.pw, d.pw,
                                kflip.data() + (co * d.cin + ci) * kk, d.k, gplane, d.h, d.w);
              }
            }
          }
        }
      }
    };
  }
  return Var(node);
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

Var sum(const Var& x) {
  double acc = 0.0;
  const double* px = x.value().data();
  const int64_t n = x.value().numel();
  for (int64_t i = 0; i < n; ++i) acc += px[i];
  auto node = make_node("sum", Tensor::scalar(acc), {x.node()});
  if (node->requires_grad) {
    Node* raw = node.get();
    Node* nx = x.node().get();
    node->backprop = [raw, nx, n]() {
      if (!nx->requires_grad) return;
      const double g = raw->grad[0];
      double* gx = nx->ensure_grad().data();
      for (int64_t i = 0; i < n; ++i) gx[i] += g;
    };
  }
  return Var(node);
}

// ---------------------------------------------------------------------------
// quantizers
// ---------------------------------------------------------------------------

Var ssq_quantize(const Var& x, int bits, double sharpness, QuantizerMode mode) {
  if (bits < 1 || bits > 16) throw std::invalid_argument("ssq_quantize: bits must be in [1,16]");
  if (!(sharpness > 0.0)) throw std::invalid_argument("ssq_quantize: sharpness must be > 0");
  const int64_t n = x.value().numel();
  const double levels = static_cast<double>((1 << bits) - 1);
  Tensor out(x.value().shape());
  const double* px = x.value().data();
  double* po = out.data();

  if (mode == QuantizerMode::Deployment) {
    for (int64_t i = 0; i < n; ++i) {
      double idx = std::round(std::clamp(px[i], 0.0, 1.0) * levels);
      po[i] = idx / levels;
    }
    auto node = make_node("ssq_hard", std::move(out), {x.node()});
    // Hard rounding is a step function; the deployment path carries no gradient.
    return Var(node);
  }

  const double steps = static_cast<double>(1 << bits);
  std::vector<double> dsum(static_cast<size_t>(n), 0.0);
  for (int i = 1; i < (1 << bits); ++i) {
    const double offset = static_cast<double>(i) / steps;
    for (int64_t j = 0; j < n; ++j) {
      const double s = sigmoid(sharpness * (px[j] - offset));
      po[j] += s;
      dsum[static_cast<size_t>(j)] += s * (1.0 - s);
    }
  }
  for (int64_t j = 0; j < n; ++j) po[j] /= levels;

  auto node = make_node("ssq_soft", std::move(out), {x.node()});
  if (node->requires_grad) {
    Node* raw = node.get();
    Node* nx = x.node().get();
    const double scale = sharpness / levels;
    node->backprop = [raw, nx, dsum = std::move(dsum), scale, n]() {
      if (!nx->requires_grad) return;
      const double* g = raw->grad.data();
      double* gx = nx->ensure_grad().data();
      for (int64_t i = 0; i < n; ++i) gx[i] += g[i] * scale * dsum[static_cast<size_t>(i)];
    };
  }
  return Var(node);
}

Var blq_quantize(const Var& x) {
  const int64_t n = x.value().numel();
  Tensor out(x.value().shape());
  const double* px = x.value().data();
  double* po = out.data();
  for (int64_t i = 0; i < n; ++i) po[i] = px[i] > 0.5 ? 1.0 : 0.0;
  auto node = make_node("blq", std::move(out), {x.node()});
  if (node->requires_grad) {
    Node* raw = node.get();
    Node* nx = x.node().get();
    node->backprop = [raw, nx, n]() {
      if (!nx->requires_grad) return;
      const double* g = raw->grad.data();
      const double* px2 = nx->value.data();
      double* gx = nx->ensure_grad().data();
      for (int64_t i = 0; i < n; ++i) {
        if (px2[i] >= 0.0 && px2[i] <= 1.0) gx[i] += g[i];
      }
    };
  }
  return Var(node);
}

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

void backward(const Var& output) {
  if (!output.valid()) throw std::invalid_argument("backward: empty Var");
  if (output.value().numel() != 1) {
    throw std::invalid_argument("backward: output must be scalar, got " +
                                output.value().shape_str());
  }
  // Iterative post-order DFS for a topological order.
  std::vector<Node*> topo;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(output.node().get(), 0);
  visited.insert(output.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      topo.push_back(node);
      stack.pop_back();
    }
  }
  // Interior grads are scratch for this sweep; leaf grads persist/accumulate.
  for (Node* n : topo) {
    if (!n->is_leaf()) n->ensure_grad().fill(0.0);
  }
  output.node()->ensure_grad()[0] += 1.0;
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    Node* n = *it;
    if (n->requires_grad && n->backprop) n->backprop();
  }
}

}  // namespace magpha
