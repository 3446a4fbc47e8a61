// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>

#include "magpha/errors.hpp"
#include "magpha/model.hpp"
#include "magpha/rng.hpp"

using namespace magpha;
using Complex = std::complex<double>;

namespace {

constexpr double kPi = std::numbers::pi;

FrameworkConfig desk_config() {
  FrameworkConfig fw;
  fw.q_t = 8;
  fw.q_f = 6;
  fw.q_l = 2;
  fw.n_b = 32;
  fw.cr_mag = 0.25;
  fw.cr_pha = 0.125;
  fw.seed = 11;
  return fw;
}

AngleDelayCsi random_csi(int64_t rows, int64_t cols, SeededRng& rng, int64_t q_f, int64_t q_l) {
  ComplexMatrix m(rows, cols);
  for (int64_t r = 0; r < rows; ++r) {
    for (int64_t c = 0; c < cols; ++c) {
      m(r, c) = Complex(rng.uniform(-1, 1), rng.uniform(-1, 1));
      if (std::abs(m(r, c)) < 1e-3) m(r, c) += Complex(0.2, -0.2);
    }
  }
  return AngleDelayCsi(std::move(m), q_f, q_l);
}

MagnitudeMatrix random_mag(int64_t rows, int64_t cols, SeededRng& rng) {
  RealMatrix m(rows, cols);
  for (int64_t i = 0; i < rows * cols; ++i) m(i / cols, i % cols) = rng.uniform(0.0, 1.0);
  return MagnitudeMatrix(m);
}

}  // namespace

TEST_CASE("framework config validation") {
  FrameworkConfig fw;
  CHECK_NOTHROW(fw.validate());
  FrameworkConfig bad = fw;
  bad.cr_pha = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = fw;
  bad.k_pha = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = fw;
  bad.q_f = 10;  // q_f + q_l != q_t
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("codeword lengths reproduce the reference operating points") {
  FrameworkConfig fw;  // paper dims: q_t 16, n_b 64
  fw.cr_pha = 1.0 / 8.0;
  CHECK(fw.phase_codeword_len() == 128);
  fw.cr_pha = 1.0 / 16.0;
  CHECK(fw.phase_codeword_len() == 64);
  fw.cr_pha = 1.0 / 8.0;
  fw.quantizer_kind = QuantizerKind::Blq;
  CHECK(fw.phase_codeword_len() == 1024);  // k_pha one-bit codewords
  CHECK(fw.phase_codeword_bits() == 1);

  FrameworkConfig mag;
  mag.cr_mag = 0.25;
  CHECK(mag.mag_codeword_len() == 256);
}

TEST_CASE("model construction is deterministic per seed") {
  FrameworkConfig fw = desk_config();
  DualNetModel a = build_model(fw);
  DualNetModel b = build_model(fw);
  REQUIRE(a.params.names() == b.params.names());
  for (const auto& name : a.params.names()) {
    const Tensor& ta = a.params.get(name).value();
    const Tensor& tb = b.params.get(name).value();
    REQUIRE(ta.numel() == tb.numel());
    for (int64_t i = 0; i < ta.numel(); ++i) CHECK(ta[i] == tb[i]);
  }
  // magnitude branch matches across phase-method variants
  FrameworkConfig naive_fw = fw;
  naive_fw.phase_method = PhaseMethod::Naive;
  DualNetModel c = build_model(naive_fw);
  for (const auto& name : a.params.names_with_prefix("mag_")) {
    const Tensor& ta = a.params.get(name).value();
    const Tensor& tc = c.params.get(name).value();
    for (int64_t i = 0; i < ta.numel(); ++i) CHECK(ta[i] == tc[i]);
  }
}

TEST_CASE("mag_encode emits the configured codeword deterministically") {
  FrameworkConfig fw = desk_config();
  DualNetModel model = build_model(fw);
  SeededRng rng(21);
  MagnitudeMatrix mag = random_mag(8, 32, rng);
  auto cw1 = mag_encode(model, mag, QuantizerMode::Deployment);
  auto cw2 = mag_encode(model, mag, QuantizerMode::Deployment);
  CHECK(static_cast<int64_t>(cw1.size()) == fw.mag_codeword_len());
  CHECK(cw1 == cw2);
  const double levels = static_cast<double>((1 << fw.k_mag) - 1);
  for (double v : cw1) {
    CHECK(std::fabs(v * levels - std::round(v * levels)) < 1e-9);
  }
  // wrong shape rejected
  MagnitudeMatrix badshape(RealMatrix::Zero(4, 4));
  CHECK_THROWS_AS(mag_encode(model, badshape, QuantizerMode::Deployment), std::invalid_argument);
}

TEST_CASE("mag_decode is nonnegative, well-shaped, and wired to the uplink input") {
  FrameworkConfig fw = desk_config();
  DualNetModel model = build_model(fw);
  SeededRng rng(22);
  MagnitudeMatrix mag = random_mag(8, 32, rng);
  MagnitudeMatrix ul = random_mag(8, 32, rng);
  auto cw = mag_encode(model, mag, QuantizerMode::Deployment);
  MagnitudeMatrix out = mag_decode(model, cw, ul);
  CHECK(out.entries.rows() == 8);
  CHECK(out.entries.cols() == 32);
  CHECK((out.entries.array() >= 0.0).all());

  RealMatrix perturbed = ul.entries;
  perturbed(3, 7) += 0.25;
  MagnitudeMatrix out2 = mag_decode(model, cw, MagnitudeMatrix(perturbed));
  CHECK((out2.entries - out.entries).cwiseAbs().maxCoeff() > 0.0);

  CHECK_THROWS_AS(mag_decode(model, std::vector<double>(3, 0.0), ul), std::invalid_argument);
}

TEST_CASE("phase_decode stays strictly inside (-1,1) and reacts to sign flips") {
  FrameworkConfig fw = desk_config();
  DualNetModel model = build_model(fw);
  SeededRng rng(23);
  AngleDelayCsi h = random_csi(8, 32, rng, 6, 2);
  auto [mag, cosm, sign_full] = decompose(h);
  SignMatrix sel = select_signs(sign_full, mag, fw.r_s);

  auto cw = phase_encode(model, cosm, QuantizerMode::Deployment);
  CHECK(static_cast<int64_t>(cw.size()) == fw.phase_codeword_len());
  CosineMatrix out = phase_decode(model, cw, sel);
  CHECK((out.entries.array().abs() < 1.0).all());

  // flip one transmitted sign bit
  SignMatrix flipped = sel;
  bool done = false;
  for (int64_t r = 0; r < 8 && !done; ++r) {
    for (int64_t c = 0; c < 32 && !done; ++c) {
      if (flipped.transmitted(r, c)) {
        flipped.signs(r, c) = -flipped.signs(r, c);
        done = true;
      }
    }
  }
  CosineMatrix out2 = phase_decode(model, cw, flipped);
  CHECK((out2.entries - out.entries).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("combine with a zero-initialized refinement equals the analytic recombination") {
  FrameworkConfig fw = desk_config();
  DualNetModel model = build_model(fw);  // last combiner layer zero-initialized
  model.input_scale = 4.0;
  SeededRng rng(24);
  AngleDelayCsi h = random_csi(8, 32, rng, 6, 2);
  auto [mag, cosm, signs] = decompose(h);

  AngleDelayCsi combined = combine(model, mag, cosm, signs, 6, 2);
  AngleDelayCsi analytic = recombine(mag, cosm, signs, 6, 2);
  CHECK((combined.entries - analytic.entries).cwiseAbs().maxCoeff() == 0.0);

  // perfect inputs reproduce the original matrix
  CHECK((combined.entries - h.entries).norm() / h.entries.norm() < 1e-12);

  // zero magnitudes give a zero output
  MagnitudeMatrix zero_mag(RealMatrix::Zero(8, 32));
  AngleDelayCsi zero_out = combine(model, zero_mag, cosm, signs, 6, 2);
  CHECK(zero_out.entries.norm() == 0.0);

  // fully zeroed refinement (all four layers) keeps the identity as well
  for (const auto& name : model.params.names_with_prefix("comb.")) {
    model.params.get(name).mutable_value().fill(0.0);
  }
  AngleDelayCsi combined2 = combine(model, mag, cosm, signs, 6, 2);
  CHECK((combined2.entries - analytic.entries).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("forward produces a budget-exact payload deterministically") {
  FrameworkConfig fw = desk_config();
  DualNetModel model = build_model(fw);
  model.input_scale = 2.0;
  SeededRng rng(25);
  AngleDelayCsi h = random_csi(8, 32, rng, 6, 2);
  MagnitudeMatrix ul = random_mag(8, 32, rng);

  ForwardOutput out = forward(model, h, ul, QuantizerMode::Deployment);
  const BitBudget budget = phase_bit_budget(fw.cr_pha, fw.k_pha, fw.r_s, fw.q_t, fw.n_b);
  CHECK(out.payload.phase_bit_length(fw) == budget.total_bits);
  CHECK(out.payload.bit_length(fw) ==
        budget.total_bits + fw.mag_codeword_len() * fw.k_mag);
  const BitStream wire = out.payload.serialize(fw);
  CHECK(wire.bit_count == out.payload.bit_length(fw));
  CHECK(static_cast<int64_t>(wire.bytes.size()) == (wire.bit_count + 7) / 8);

  CHECK(out.estimate.q_t() == 8);
  CHECK(out.estimate.n_b() == 32);

  ForwardOutput out2 = forward(model, h, ul, QuantizerMode::Deployment);
  CHECK((out2.estimate.entries - out.estimate.entries).norm() == 0.0);
}

TEST_CASE("forward variants for the baseline methods") {
  SeededRng rng(26);
  AngleDelayCsi h = random_csi(8, 32, rng, 6, 2);
  MagnitudeMatrix ul = random_mag(8, 32, rng);
  for (PhaseMethod method : {PhaseMethod::Naive, PhaseMethod::Mdpp, PhaseMethod::Mdpq}) {
    FrameworkConfig fw = desk_config();
    fw.phase_method = method;
    DualNetModel model = build_model(fw);
    model.input_scale = 2.0;
    ForwardOutput out = forward(model, h, ul, QuantizerMode::Deployment);
    CHECK(out.estimate.q_t() == 8);
    CHECK(out.payload.mag_levels.size() == static_cast<size_t>(fw.mag_codeword_len()));
    if (method == PhaseMethod::Mdpq) {
      CHECK(out.payload.mdpq_bits.bit_count > 0);
      CHECK(out.payload.sign_bits.empty());
    } else {
      CHECK(out.payload.phase_levels.size() == static_cast<size_t>(fw.phase_codeword_len()));
      CHECK(out.payload.sign_bits.empty());
    }
  }
}

TEST_CASE("loss_magnitude examples") {
  Tensor mag({1, 1, 2, 3}, {1, 2, 3, 4, 5, 6});
  Var mhat = Var::constant(mag);
  CHECK(loss_magnitude(mhat, Var::constant(mag)).value()[0] == 0.0);

  Tensor plus1({1, 1, 2, 3}, {2, 3, 4, 5, 6, 7});
  CHECK(loss_magnitude(Var::constant(plus1), Var::constant(mag)).value()[0] ==
        doctest::Approx(6.0));

  SeededRng rng(27);
  Tensor a({1, 1, 2, 2}), b({1, 1, 2, 2});
  double expect = 0.0;
  for (int64_t i = 0; i < 4; ++i) {
    a[i] = rng.uniform(0, 2);
    b[i] = rng.uniform(0, 2);
    expect += (a[i] - b[i]) * (a[i] - b[i]);
  }
  CHECK(loss_magnitude(Var::constant(a), Var::constant(b)).value()[0] ==
        doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("loss_naive examples") {
  SeededRng rng(28);
  const int64_t n = 6;
  Tensor mag({1, 1, 2, 3}), phase({1, 1, 2, 3}), re({1, 1, 2, 3}), im({1, 1, 2, 3});
  for (int64_t i = 0; i < n; ++i) {
    mag[i] = rng.uniform(0.2, 2.0);
    phase[i] = rng.uniform(-kPi, kPi);
    re[i] = mag[i] * std::cos(phase[i]);
    im[i] = mag[i] * std::sin(phase[i]);
  }
  CHECK(loss_naive(re, im, Var::constant(mag), Var::constant(phase)).value()[0] ==
        doctest::Approx(0.0).epsilon(1e-12));

  // phase off by pi with equal magnitudes: 4 * sum m^2
  Tensor shifted = phase;
  for (int64_t i = 0; i < n; ++i) shifted[i] += kPi;
  double sum_m2 = 0.0;
  for (int64_t i = 0; i < n; ++i) sum_m2 += mag[i] * mag[i];
  CHECK(loss_naive(re, im, Var::constant(mag), Var::constant(shifted)).value()[0] ==
        doctest::Approx(4.0 * sum_m2).epsilon(1e-10));

  // random case against a direct complex-difference oracle
  Tensor mhat({1, 1, 2, 3}), phat({1, 1, 2, 3});
  for (int64_t i = 0; i < n; ++i) {
    mhat[i] = rng.uniform(0.2, 2.0);
    phat[i] = rng.uniform(-kPi, kPi);
  }
  double oracle = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const Complex truth(re[i], im[i]);
    const Complex est = mhat[i] * Complex(std::cos(phat[i]), std::sin(phat[i]));
    oracle += std::norm(truth - est);
  }
  CHECK(loss_naive(re, im, Var::constant(mhat), Var::constant(phat)).value()[0] ==
        doctest::Approx(oracle).epsilon(1e-12));
}

TEST_CASE("loss_mdpp examples") {
  const int64_t n = 6;
  Tensor phase({1, 1, 2, 3}), mag({1, 1, 2, 3});
  SeededRng rng(29);
  for (int64_t i = 0; i < n; ++i) {
    phase[i] = rng.uniform(-2.0, 2.0);
    mag[i] = 1.0;
  }
  CHECK(loss_mdpp(Var::constant(phase), phase, mag).value()[0] == 0.0);

  const double delta = 0.3;
  Tensor shifted = phase;
  for (int64_t i = 0; i < n; ++i) shifted[i] += delta;
  CHECK(loss_mdpp(Var::constant(shifted), phase, mag).value()[0] ==
        doctest::Approx(n * delta * delta).epsilon(1e-12));

  Tensor mags2({1, 1, 2, 3}), phat({1, 1, 2, 3});
  double oracle = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    mags2[i] = rng.uniform(0, 2);
    phat[i] = rng.uniform(-2, 2);
    oracle += (phat[i] - phase[i]) * (phat[i] - phase[i]) * mags2[i] * mags2[i];
  }
  CHECK(loss_mdpp(Var::constant(phat), phase, mags2).value()[0] ==
        doctest::Approx(oracle).epsilon(1e-12));
}

TEST_CASE("loss_smdp equals the complex squared error") {
  SeededRng rng(30);
  // perfect reconstruction with full signs
  AngleDelayCsi h = random_csi(4, 4, rng, 4, 0);
  auto [mag, cosm, signs] = decompose(h);
  CHECK(loss_smdp_value(h, mag, cosm, signs) == doctest::Approx(0.0).epsilon(1e-14));

  // random estimates: identity against the direct complex MSE
  for (int trial = 0; trial < 20; ++trial) {
    AngleDelayCsi truth = random_csi(4, 4, rng, 4, 0);
    MagnitudeMatrix mhat = random_mag(4, 4, rng);
    RealMatrix ch(4, 4), sh(4, 4);
    for (int64_t i = 0; i < 16; ++i) {
      ch(i / 4, i % 4) = rng.uniform(-0.999, 0.999);
      sh(i / 4, i % 4) = rng.uniform() < 0.5 ? -1.0 : 1.0;
    }
    CosineMatrix cos_hat(ch);
    SignMatrix sign_hat(sh, BoolMatrix::Constant(4, 4, true));
    const double loss = loss_smdp_value(truth, mhat, cos_hat, sign_hat);
    double direct = 0.0;
    for (int64_t i = 0; i < 16; ++i) {
      const double cv = ch(i / 4, i % 4);
      const Complex est = mhat.entries(i / 4, i % 4) *
                          Complex(cv, sh(i / 4, i % 4) * std::sqrt(1.0 - cv * cv));
      direct += std::norm(truth.entries(i / 4, i % 4) - est);
    }
    CHECK(loss == doctest::Approx(direct).epsilon(1e-10));
  }

  // zero magnitudes kill the loss regardless of phases
  MagnitudeMatrix zmag(RealMatrix::Zero(4, 4));
  AngleDelayCsi zh(ComplexMatrix::Zero(4, 4), 4, 0);
  RealMatrix anyc = RealMatrix::Constant(4, 4, 0.3);
  CHECK(loss_smdp_value(zh, zmag, CosineMatrix(anyc),
                        SignMatrix(RealMatrix::Constant(4, 4, 1.0),
                                   BoolMatrix::Constant(4, 4, true))) == 0.0);
}

TEST_CASE("parameter counts follow the layer specs") {
  FrameworkConfig fw = desk_config();
  DualNetModel model = build_model(fw);
  auto spec_count = [](const std::vector<LayerSpec>& specs) {
    int64_t total = 0;
    for (const auto& s : specs) total += s.parameter_count();
    return total;
  };
  CHECK(model.params.parameter_count("mag_enc.") == spec_count(model.mag_encoder_layers));
  CHECK(model.params.parameter_count("mag_dec.") == spec_count(model.mag_decoder_layers));
  CHECK(model.params.parameter_count("phase_enc.") == spec_count(model.phase_encoder_layers));
  CHECK(model.params.parameter_count("phase_dec.") == spec_count(model.phase_decoder_layers));
  CHECK(model.params.parameter_count("comb.") == spec_count(model.combiner_layers));
}
