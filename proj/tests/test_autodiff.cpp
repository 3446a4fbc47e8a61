// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <vector>

#include "magpha/autodiff.hpp"
#include "magpha/errors.hpp"
#include "magpha/nn.hpp"
#include "magpha/rng.hpp"

using namespace magpha;

namespace {

Tensor random_tensor(std::vector<int64_t> shape, SeededRng& rng, double lo = -1.0,
                     double hi = 1.0) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// Plain reference correlation with explicit wrap/zero handling.
Tensor conv_reference(const Tensor& x, const Tensor& k, const Tensor& b, bool circular) {
  const int64_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int64_t cout = k.dim(0), ks = k.dim(2), p = (ks - 1) / 2;
  Tensor out({n, cout, h, w});
  for (int64_t ni = 0; ni < n; ++ni) {
    for (int64_t co = 0; co < cout; ++co) {
      for (int64_t y = 0; y < h; ++y) {
        for (int64_t xx = 0; xx < w; ++xx) {
          double acc = b[co];
          for (int64_t ci = 0; ci < cin; ++ci) {
            for (int64_t dy = 0; dy < ks; ++dy) {
              for (int64_t dx = 0; dx < ks; ++dx) {
                int64_t sy = y + dy - p, sx = xx + dx - p;
                if (circular) {
                  sy = ((sy % h) + h) % h;
                  sx = ((sx % w) + w) % w;
                } else if (sy < 0 || sy >= h || sx < 0 || sx >= w) {
                  continue;
                }
                acc += x[((ni * cin + ci) * h + sy) * w + sx] *
                       k[((co * cin + ci) * ks + dy) * ks + dx];
              }
            }
          }
          out[((ni * cout + co) * h + y) * w + xx] = acc;
        }
      }
    }
  }
  return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.numel() == b.numel());
  double m = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("tensor shape validation") {
  CHECK_THROWS_AS(Tensor({2, -1}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0}), std::invalid_argument);
  Tensor t({2, 3});
  CHECK(t.numel() == 6);
  CHECK(t.shape_str() == "[2, 3]");
}

TEST_CASE("activation values and derivative of tanh at zero") {
  Var x = Var::leaf(Tensor({3}, {0.0, 0.0, -1.0}), true);
  CHECK(vtanh(x).value()[0] == 0.0);
  CHECK(vsigmoid(x).value()[1] == 0.5);
  CHECK(leaky_linear(x, 0.3).value()[2] == doctest::Approx(-0.3));

  Var x0 = Var::leaf(Tensor::scalar(0.0), true);
  Var y = vtanh(x0);
  backward(y);
  CHECK(x0.grad()[0] == doctest::Approx(1.0));
}

TEST_CASE("backward on sum of squares gives 2x") {
  SeededRng rng(11);
  Tensor xt = random_tensor({7}, rng);
  Var x = Var::leaf(xt, true);
  backward(sum(square(x)));
  for (int64_t i = 0; i < 7; ++i) CHECK(x.grad()[i] == doctest::Approx(2.0 * xt[i]));
}

TEST_CASE("backward through tanh chain matches the analytic derivative") {
  // y = tanh(w * x) with scalars: dy/dw = (1 - tanh^2(wx)) * x
  const double wv = 0.8, xv = -0.6;
  Var w = Var::leaf(Tensor::scalar(wv), true);
  Var x = Var::leaf(Tensor::scalar(xv), false);
  Var y = vtanh(mul(w, x));
  backward(y);
  const double t = std::tanh(wv * xv);
  CHECK(w.grad()[0] == doctest::Approx((1.0 - t * t) * xv).epsilon(1e-12));
}

TEST_CASE("two backward calls without clearing double the leaf grads") {
  Var x = Var::leaf(Tensor({2}, {1.0, 2.0}), true);
  Var y = sum(square(x));
  backward(y);
  const double g0 = x.grad()[0];
  backward(y);
  CHECK(x.grad()[0] == doctest::Approx(2.0 * g0));
}

TEST_CASE("backward rejects non-scalar outputs") {
  Var x = Var::leaf(Tensor({3}), true);
  CHECK_THROWS_AS(backward(square(x)), std::invalid_argument);
}

TEST_CASE("non-finite forward output raises NumericError") {
  Var x = Var::leaf(Tensor({1}, {1e308}), false);
  CHECK_THROWS_AS(mul(x, x), NumericError);
}

TEST_CASE("dense layer forward cases") {
  // identity weights, zero bias
  Var x = Var::leaf(Tensor({3}, {1.0, -2.0, 3.0}), false);
  Var w = Var::leaf(Tensor({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1}), false);
  Var b = Var::leaf(Tensor({3}), false);
  Var yv = dense(x, w, b);
  const Tensor& y = yv.value();
  CHECK(y[0] == 1.0);
  CHECK(y[1] == -2.0);
  CHECK(y[2] == 3.0);

  // zero weights, bias passes through
  Var wz = Var::leaf(Tensor({2, 3}), false);
  Var bz = Var::leaf(Tensor({2}, {4.0, -5.0}), false);
  Var y2v = dense(x, wz, bz);
  const Tensor& y2 = y2v.value();
  CHECK(y2[0] == 4.0);
  CHECK(y2[1] == -5.0);

  // random 3x2 case against a direct product
  SeededRng rng(3);
  Tensor xw = random_tensor({2}, rng);
  Tensor ww = random_tensor({3, 2}, rng);
  Tensor bw = random_tensor({3}, rng);
  Var y3v = dense(Var::leaf(xw, false), Var::leaf(ww, false), Var::leaf(bw, false));
  const Tensor& y3 = y3v.value();
  for (int64_t r = 0; r < 3; ++r) {
    double acc = bw[r];
    for (int64_t c = 0; c < 2; ++c) acc += ww[r * 2 + c] * xw[c];
    CHECK(y3[r] == doctest::Approx(acc).epsilon(1e-14));
  }

  CHECK_THROWS_AS(dense(x, Var::leaf(Tensor({3, 4}), false), b), std::invalid_argument);
}

TEST_CASE("circular conv identity kernel reproduces the input") {
  SeededRng rng(5);
  Tensor xt = random_tensor({2, 1, 5, 6}, rng);
  Tensor kt({1, 1, 3, 3});
  kt[4] = 1.0;  // center tap
  Var y = circular_conv2d(Var::leaf(xt, false), Var::leaf(kt, false),
                          Var::leaf(Tensor({1}), false));
  CHECK(max_abs_diff(y.value(), xt) == 0.0);
}

TEST_CASE("circular conv shift equivariance") {
  SeededRng rng(6);
  const int64_t h = 6, w = 9;
  Tensor xt = random_tensor({1, 2, h, w}, rng);
  Tensor kt = random_tensor({3, 2, 3, 3}, rng);
  Tensor bt = random_tensor({3}, rng);
  const int64_t s1 = 2, s2 = 5;
  Tensor shifted({1, 2, h, w});
  for (int64_t c = 0; c < 2; ++c) {
    for (int64_t y = 0; y < h; ++y) {
      for (int64_t x = 0; x < w; ++x) {
        shifted[(c * h + (y + s1) % h) * w + (x + s2) % w] = xt[(c * h + y) * w + x];
      }
    }
  }
  Tensor out = circular_conv2d(Var::leaf(xt, false), Var::leaf(kt, false), Var::leaf(bt, false))
                   .value();
  Tensor out_shifted = circular_conv2d(Var::leaf(shifted, false), Var::leaf(kt, false),
                                       Var::leaf(bt, false))
                           .value();
  double m = 0.0;
  for (int64_t c = 0; c < 3; ++c) {
    for (int64_t y = 0; y < h; ++y) {
      for (int64_t x = 0; x < w; ++x) {
        m = std::max(m, std::fabs(out_shifted[(c * h + (y + s1) % h) * w + (x + s2) % w] -
                                  out[(c * h + y) * w + x]));
      }
    }
  }
  CHECK(m <= 1e-12);
}

TEST_CASE("circular conv equals linear conv on a 3x3-tiled input, center-cropped") {
  SeededRng rng(7);
  const int64_t h = 4, w = 4;
  Tensor xt = random_tensor({1, 1, h, w}, rng);
  Tensor kt = random_tensor({1, 1, 3, 3}, rng);
  Tensor bt({1});
  Tensor tiled({1, 1, 3 * h, 3 * w});
  for (int64_t ty = 0; ty < 3 * h; ++ty) {
    for (int64_t tx = 0; tx < 3 * w; ++tx) {
      tiled[ty * 3 * w + tx] = xt[(ty % h) * w + (tx % w)];
    }
  }
  Tensor circ = circular_conv2d(Var::leaf(xt, false), Var::leaf(kt, false), Var::leaf(bt, false))
                    .value();
  Tensor lin = linear_conv2d(Var::leaf(tiled, false), Var::leaf(kt, false), Var::leaf(bt, false))
                   .value();
  double m = 0.0;
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      m = std::max(m, std::fabs(circ[y * w + x] - lin[(y + h) * 3 * w + (x + w)]));
    }
  }
  CHECK(m <= 1e-12);
}

TEST_CASE("conv matches the reference implementation on random shapes") {
  SeededRng rng(8);
  for (bool circular : {true, false}) {
    Tensor xt = random_tensor({2, 3, 5, 8}, rng);
    Tensor kt = random_tensor({4, 3, 5, 5}, rng);
    Tensor bt = random_tensor({4}, rng);
    Var y = conv2d(Var::leaf(xt, false), Var::leaf(kt, false), Var::leaf(bt, false),
                   circular ? ConvPadding::Circular : ConvPadding::Zero);
    Tensor ref = conv_reference(xt, kt, bt, circular);
    CHECK(max_abs_diff(y.value(), ref) <= 1e-12);
  }
}

TEST_CASE("conv shape validation") {
  Var x = Var::leaf(Tensor({1, 2, 4, 4}), false);
  Var b = Var::leaf(Tensor({3}), false);
  CHECK_THROWS_AS(conv2d(x, Var::leaf(Tensor({3, 2, 4, 4}), false), b, ConvPadding::Circular),
                  std::invalid_argument);  // even kernel
  CHECK_THROWS_AS(conv2d(x, Var::leaf(Tensor({3, 1, 3, 3}), false), b, ConvPadding::Circular),
                  std::invalid_argument);  // wrong input channels
  CHECK_THROWS_AS(conv2d(x, Var::leaf(Tensor({4, 2, 3, 3}), false), b, ConvPadding::Circular),
                  std::invalid_argument);  // bias mismatch
}

TEST_CASE("ssq deployment mode rounds to the level grid") {
  Var x = Var::leaf(Tensor({2}, {0.4, 0.6}), false);
  const Tensor& y = ssq_quantize(x, 1, 50.0, QuantizerMode::Deployment).value();
  CHECK(y[0] == 0.0);
  CHECK(y[1] == 1.0);

  SeededRng rng(9);
  Tensor xt = random_tensor({64}, rng, 0.0, 1.0);
  const Tensor& y8 =
      ssq_quantize(Var::leaf(xt, false), 8, 50.0, QuantizerMode::Deployment).value();
  const double levels = 255.0;
  for (int64_t i = 0; i < 64; ++i) {
    const double idx = y8[i] * levels;
    CHECK(std::fabs(idx - std::round(idx)) <= 1e-9);
  }
}

TEST_CASE("ssq training mode is a soft staircase") {
  // q(0) for k=2, alpha=100 evaluated directly from the level sum
  Var x0 = Var::leaf(Tensor::scalar(0.0), false);
  const double q0 = ssq_quantize(x0, 2, 100.0, QuantizerMode::Training).value()[0];
  double direct = 0.0;
  for (int i = 1; i < 4; ++i) direct += 1.0 / (1.0 + std::exp(100.0 * (i / 4.0)));
  direct /= 3.0;
  CHECK(q0 == doctest::Approx(direct).epsilon(1e-12));
  CHECK(q0 < 0.01);

  // monotone nondecreasing on a 1,000-point grid, outputs inside (0,1)
  for (int k : {1, 2, 4, 8}) {
    double prev = -1.0;
    for (int i = 0; i < 1000; ++i) {
      const double xv = static_cast<double>(i) / 999.0;
      const double q = ssq_quantize(Var::leaf(Tensor::scalar(xv), false), k, 50.0,
                                    QuantizerMode::Training)
                           .value()[0];
      CHECK(q >= prev);
      CHECK(q > 0.0);
      CHECK(q < 1.0);
      prev = q;
    }
  }

  CHECK_THROWS_AS(ssq_quantize(x0, 0, 50.0, QuantizerMode::Training), std::invalid_argument);
  CHECK_THROWS_AS(ssq_quantize(x0, 2, -1.0, QuantizerMode::Training), std::invalid_argument);
}

TEST_CASE("blq thresholds at 0.5 with straight-through gradients") {
  Var x = Var::leaf(Tensor({3}, {0.7, 0.3, 1.5}), true);
  Var y = blq_quantize(x);
  CHECK(y.value()[0] == 1.0);
  CHECK(y.value()[1] == 0.0);
  CHECK(y.value()[2] == 1.0);
  backward(sum(y));
  CHECK(x.grad()[0] == 1.0);  // inside [0,1]
  CHECK(x.grad()[1] == 1.0);
  CHECK(x.grad()[2] == 0.0);  // clamp region

  Var mid = Var::leaf(Tensor::scalar(0.5), true);
  backward(blq_quantize(mid));
  CHECK(mid.grad()[0] == 1.0);
}

TEST_CASE("gradient_check on the spec'd example functions") {
  SeededRng rng(10);

  // sum of squares: quadratic, exact up to rounding
  {
    Tensor xt = random_tensor({6}, rng);
    auto f = [](const Var& v) { return sum(square(v)); };
    auto report = gradient_check(std::function<Var(const Var&)>(f), xt, 1e-5, 1e-8);
    CHECK(report.pass);
    CHECK(report.max_rel_error < 1e-8);
  }

  // circular_conv2d + tanh composite on random 1x6x6 input
  {
    Tensor xt = random_tensor({1, 1, 6, 6}, rng);
    Tensor kt = random_tensor({2, 1, 3, 3}, rng);
    Tensor bt = random_tensor({2}, rng);
    auto f = [&](const Var& v) {
      return sum(vtanh(circular_conv2d(v, Var::leaf(kt, false), Var::leaf(bt, false))));
    };
    auto report = gradient_check(std::function<Var(const Var&)>(f), xt, 1e-5, 1e-4);
    CHECK(report.pass);
  }

  // SSQ training-mode staircase, alpha = 10
  {
    Tensor xt = random_tensor({16}, rng, 0.05, 0.95);
    auto f = [](const Var& v) {
      return sum(ssq_quantize(v, 3, 10.0, QuantizerMode::Training));
    };
    auto report = gradient_check(std::function<Var(const Var&)>(f), xt, 1e-6, 1e-3);
    CHECK(report.pass);
  }
}

TEST_CASE("every differentiable op passes gradient checks on randomized shapes") {
  SeededRng rng(12);
  const double eps = 1e-5, tol = 1e-4;
  auto check1 = [&](const char* name, std::function<Var(const Var&)> f, Tensor x) {
    auto report = gradient_check(f, x, eps, tol);
    INFO(name << " max rel error " << report.max_rel_error);
    CHECK(report.pass);
  };

  check1("affine", [](const Var& v) { return sum(affine(v, -2.5, 0.75)); },
         random_tensor({3, 4}, rng));
  check1("tanh", [](const Var& v) { return sum(vtanh(v)); }, random_tensor({5}, rng));
  check1("sigmoid", [](const Var& v) { return sum(vsigmoid(v)); }, random_tensor({5}, rng));
  check1("leaky", [](const Var& v) { return sum(leaky_linear(v, 0.3)); },
         random_tensor({7}, rng, 0.1, 1.0));
  check1("abs", [](const Var& v) { return sum(vabs(v)); }, random_tensor({7}, rng, 0.2, 1.0));
  check1("sin", [](const Var& v) { return sum(vsin(v)); }, random_tensor({5}, rng));
  check1("cos", [](const Var& v) { return sum(vcos(v)); }, random_tensor({5}, rng));
  check1("square", [](const Var& v) { return sum(square(v)); }, random_tensor({5}, rng));
  check1("sqrt_guarded", [](const Var& v) { return sum(sqrt_guarded(v, 1e-12)); },
         random_tensor({6}, rng, 0.2, 2.0));
  check1("reshape", [](const Var& v) { return sum(square(reshape(v, {6}))); },
         random_tensor({2, 3}, rng));

  {
    Tensor a = random_tensor({2, 2, 3, 3}, rng);
    Tensor b = random_tensor({2, 1, 3, 3}, rng);
    auto f = [&](const Var& v) { return sum(square(concat_channels(v, Var::leaf(b, false)))); };
    check1("concat_channels", f, a);
  }
  {
    Tensor xt = random_tensor({2, 4}, rng);
    Tensor wt = random_tensor({3, 4}, rng);
    Tensor bt = random_tensor({3}, rng);
    auto fx = [&](const Var& v) {
      return sum(square(dense(v, Var::leaf(wt, false), Var::leaf(bt, false))));
    };
    check1("dense wrt x", fx, xt);
    auto fw = [&](const Var& v) {
      return sum(square(dense(Var::leaf(xt, false), v, Var::leaf(bt, false))));
    };
    check1("dense wrt w", fw, wt);
    auto fb = [&](const Var& v) {
      return sum(square(dense(Var::leaf(xt, false), Var::leaf(wt, false), v)));
    };
    check1("dense wrt b", fb, bt);
  }
  for (bool circular : {true, false}) {
    Tensor xt = random_tensor({2, 2, 4, 5}, rng);
    Tensor kt = random_tensor({3, 2, 3, 3}, rng);
    Tensor bt = random_tensor({3}, rng);
    const ConvPadding mode = circular ? ConvPadding::Circular : ConvPadding::Zero;
    auto fx = [&](const Var& v) {
      return sum(square(conv2d(v, Var::leaf(kt, false), Var::leaf(bt, false), mode)));
    };
    check1("conv wrt x", fx, xt);
    auto fk = [&](const Var& v) {
      return sum(square(conv2d(Var::leaf(xt, false), v, Var::leaf(bt, false), mode)));
    };
    check1("conv wrt k", fk, kt);
    auto fb = [&](const Var& v) {
      return sum(square(conv2d(Var::leaf(xt, false), Var::leaf(kt, false), v, mode)));
    };
    check1("conv wrt b", fb, bt);
  }
  {
    Tensor a = random_tensor({6}, rng);
    Tensor b = random_tensor({6}, rng);
    auto f = [&](const Var& v) { return sum(square(mul(v, Var::leaf(b, false)))); };
    check1("mul", f, a);
    auto g = [&](const Var& v) { return sum(square(sub(Var::leaf(b, false), v))); };
    check1("sub", g, a);
    auto h = [&](const Var& v) { return sum(square(add(v, Var::leaf(b, false)))); };
    check1("add", h, a);
  }
  {
    Tensor xt = random_tensor({10}, rng, 0.1, 0.9);
    auto f = [](const Var& v) {
      return sum(square(ssq_quantize(v, 2, 20.0, QuantizerMode::Training)));
    };
    check1("ssq soft", f, xt);
  }
}

TEST_CASE("parameter store basics") {
  ParameterStore store;
  SeededRng rng(1);
  store.create("a.w", glorot_uniform({4, 4}, 4, 4, rng));
  store.create("a.b", Tensor({4}));
  store.create("b.w", Tensor({2, 2}));
  CHECK_THROWS_AS(store.create("a.w", Tensor({1})), std::invalid_argument);
  CHECK_THROWS_AS(store.get("missing"), std::invalid_argument);
  CHECK(store.parameter_count() == 16 + 4 + 4);
  CHECK(store.parameter_count("a.") == 20);
  CHECK(store.names_with_prefix("b.").size() == 1);
  CHECK(store.names()[0] == "a.w");  // creation order
}

TEST_CASE("glorot initialization is deterministic per seed") {
  SeededRng r1(42), r2(42), r3(43);
  Tensor a = glorot_uniform({3, 3}, 3, 3, r1);
  Tensor b = glorot_uniform({3, 3}, 3, 3, r2);
  Tensor c = glorot_uniform({3, 3}, 3, 3, r3);
  CHECK(max_abs_diff(a, b) == 0.0);
  bool any_diff = false;
  for (int64_t i = 0; i < a.numel(); ++i) any_diff |= a[i] != c[i];
  CHECK(any_diff);
}
