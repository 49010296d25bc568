#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "vilrp/spectral.hpp"

using namespace vilrp;
using namespace vilrp::spectral;

namespace {

WindowSpec window(WindowShape shape, std::size_t width, std::size_t hop, Boundary b = Boundary::anchored) {
  return WindowSpec{shape, width, hop, b};
}

}  // namespace

TEST(Dft, ImpulseHasFlatSpectrum) {
  const std::vector<double> x{1, 0, 0, 0};
  const Spectrum y = dft(x);
  for (int k = 0; k < 4; ++k) {
    EXPECT_NEAR(y.re[k], 0.5, 1e-15);
    EXPECT_NEAR(y.im[k], 0.0, 1e-15);
  }
}

TEST(Dft, SingleBinCosine) {
  const std::size_t n = 8, k0 = 2;
  std::vector<double> x(n);
  for (std::size_t t = 0; t < n; ++t) x[t] = std::cos(2 * std::numbers::pi * k0 * t / n);
  const Spectrum y = dft(x);
  for (std::size_t k = 0; k < n; ++k) {
    const double want = (k == 2 || k == 6) ? std::sqrt(8.0) / 2 : 0.0;
    EXPECT_NEAR(y.re[k], want, 1e-12) << k;
    EXPECT_NEAR(y.im[k], 0.0, 1e-12) << k;
  }
}

TEST(Dft, MatchesNaiveLoop) {
  std::mt19937_64 rng(11);
  for (std::size_t n : {16u, 17u, 63u, 64u, 100u, 256u}) {
    const auto x = oracle::random_vector(n, rng);
    const Spectrum y = dft(x);
    const auto ref = oracle::naive_dft(x);
    EXPECT_LE(oracle::max_abs_diff(y.re, ref.re), 1e-12) << n;
    EXPECT_LE(oracle::max_abs_diff(y.im, ref.im), 1e-12) << n;
  }
}

TEST(Dft, FastPathAgreesWithDirectSum) {
  std::mt19937_64 rng(5);
  for (std::size_t n : {64u, 96u, 512u, 1000u}) {
    const auto re = oracle::random_vector(n, rng);
    const auto im = oracle::random_vector(n, rng);
    std::vector<double> a_re(n), a_im(n), b_re(n), b_im(n);
    detail::dft_direct(re, im, a_re, a_im, false);
    detail::dft_fast(re, im, b_re, b_im, false);
    EXPECT_LE(oracle::max_abs_diff(a_re, b_re), 1e-10);
    EXPECT_LE(oracle::max_abs_diff(a_im, b_im), 1e-10);
    detail::dft_direct(re, im, a_re, a_im, true);
    detail::dft_fast(re, im, b_re, b_im, true);
    EXPECT_LE(oracle::max_abs_diff(a_re, b_re), 1e-10);
    EXPECT_LE(oracle::max_abs_diff(a_im, b_im), 1e-10);
  }
}

TEST(Dft, Parseval) {
  std::mt19937_64 rng(3);
  for (std::size_t n : {7u, 32u, 512u}) {
    const auto x = oracle::random_vector(n, rng);
    const Spectrum y = dft(x);
    double ex = 0, ey = 0;
    for (std::size_t i = 0; i < n; ++i) {
      ex += x[i] * x[i];
      ey += y.re[i] * y.re[i] + y.im[i] * y.im[i];
    }
    EXPECT_NEAR(ex, ey, 1e-10 * ex);
  }
}

TEST(Dft, RealSignalHasHermitianSpectrum) {
  std::mt19937_64 rng(4);
  const auto x = oracle::random_vector(33, rng);
  const Spectrum y = dft(x);
  for (std::size_t k = 1; k < 33; ++k) {
    EXPECT_NEAR(y.re[k], y.re[33 - k], 1e-12);
    EXPECT_NEAR(y.im[k], -y.im[33 - k], 1e-12);
  }
}

TEST(Dft, RejectsEmptyAndNonFinite) {
  EXPECT_THROW(dft(std::vector<double>{}), InvalidInput);
  EXPECT_THROW(dft(std::vector<double>{1.0, NAN}), InvalidInput);
  EXPECT_THROW(dft(std::vector<double>{INFINITY, 0.0}), InvalidInput);
}

TEST(Idft, RoundTrip) {
  std::mt19937_64 rng(8);
  for (std::size_t n : {1u, 2u, 5u, 64u, 333u, 512u}) {
    const auto x = oracle::random_vector(n, rng, 3.0);
    EXPECT_LE(oracle::max_abs_diff(idft_samples(dft(x)), x), 1e-10) << n;
  }
}

TEST(Idft, DcBinGivesConstant) {
  Spectrum y{std::vector<double>(9, 0.0), std::vector<double>(9, 0.0)};
  y.re[0] = 2.5;
  for (double v : idft_samples(y)) EXPECT_NEAR(v, 2.5 / 3.0, 1e-14);
}

TEST(Idft, MatchesNaiveInverseOnSymmetricSpectrum) {
  std::mt19937_64 rng(21);
  const std::size_t n = 32;
  auto re = oracle::random_vector(n, rng);
  auto im = oracle::random_vector(n, rng);
  im[0] = 0;
  im[n / 2] = 0;
  for (std::size_t k = 1; k < n / 2; ++k) {
    re[n - k] = re[k];
    im[n - k] = -im[k];
  }
  const auto got = idft_samples(Spectrum{re, im});
  const auto ref = oracle::naive_dft(re, im, true);
  EXPECT_LE(oracle::max_abs_diff(got, ref.re), 1e-12);
  for (double v : ref.im) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(Idft, MismatchedPartsRejected) {
  EXPECT_THROW(idft_samples(Spectrum{{1, 2}, {0}}), DimensionError);
}

TEST(Window, FrameCounts) {
  EXPECT_EQ(window(WindowShape::rectangular, 8, 8).num_frames(32), 4u);
  EXPECT_EQ(window(WindowShape::rectangular, 8, 4).num_frames(32), 7u);
  EXPECT_EQ(window(WindowShape::rectangular, 8, 8).num_frames(30), 4u);  // last frame zero-padded
  EXPECT_EQ(window(WindowShape::rectangular, 64, 8).num_frames(32), 1u);
  EXPECT_EQ(window(WindowShape::half_sine, 8, 4, Boundary::padded).num_frames(32), 9u);
}

TEST(Window, RectangularDisjointCoverHasUnitWeights) {
  const auto ww = window_weights(window(WindowShape::rectangular, 8, 8), 32);
  for (double w : ww.totals) EXPECT_NEAR(w, 1.0, 1e-15);
}

TEST(Window, HalfSineHalfOverlapConstantInterior) {
  const std::size_t h = 16;
  const auto ww = window_weights(window(WindowShape::half_sine, h, h / 2), 128);
  // interior samples are covered by exactly two frames
  const double ref = ww.totals[h];
  for (std::size_t t = h / 2; t + h / 2 < 128; ++t) {
    double direct = 0;
    for (std::size_t m = 0; m < ww.frames; ++m) direct += ww.at(m, t);
    EXPECT_NEAR(ww.totals[t], direct, 1e-14);
  }
  // sin(a) + cos(a) is not constant, but sin^2 + cos^2 is: check the squared cover
  for (std::size_t t = h / 2; t + h / 2 < 128; ++t) {
    double sq = 0;
    for (std::size_t m = 0; m < ww.frames; ++m) sq += ww.at(m, t) * ww.at(m, t);
    EXPECT_NEAR(sq, 1.0, 1e-12) << t;
  }
  EXPECT_GT(ref, 0.0);
}

TEST(Window, TotalsSumEqualsMatrixSum) {
  for (auto shape : {WindowShape::rectangular, WindowShape::half_sine, WindowShape::hann}) {
    const auto ww = window_weights(window(shape, 12, 5), 70);
    double a = 0, b = 0;
    for (double w : ww.totals) a += w;
    for (double w : ww.values) b += w;
    EXPECT_NEAR(a, b, 1e-12);
  }
}

TEST(Window, RejectsUncoveredSamplesAndBadConfig) {
  EXPECT_THROW(window_weights(window(WindowShape::rectangular, 4, 8), 32), WindowAdmissibilityError);
  EXPECT_THROW(window_weights(window(WindowShape::rectangular, 0, 1), 32), ConfigError);
  EXPECT_THROW(window_weights(window(WindowShape::rectangular, 4, 0), 32), ConfigError);
}

TEST(Window, ShapeNames) {
  EXPECT_EQ(parse_window_shape("rect"), WindowShape::rectangular);
  EXPECT_EQ(parse_window_shape("halfsine"), WindowShape::half_sine);
  EXPECT_EQ(parse_window_shape("hann"), WindowShape::hann);
  EXPECT_THROW(parse_window_shape("kaiser"), ConfigError);
}

TEST(Stdft, ConstantSignalFramesMatchBlockDft) {
  const std::size_t n = 64, h = 16;
  const std::vector<double> x(n, 1.5);
  const auto spec = stdft(x, window(WindowShape::rectangular, h, h));
  const auto block = oracle::naive_dft(std::vector<double>(h, 1.5 * std::sqrt(1.0)));
  for (std::size_t m = 0; m < spec.frames; ++m) {
    for (std::size_t k = 0; k < h; ++k) {
      EXPECT_NEAR(spec.re_at(m, k), block.re[k], 1e-12);
      EXPECT_NEAR(spec.im_at(m, k), block.im[k], 1e-12);
    }
  }
}

TEST(Stdft, SingleToneEnergyInToneBin) {
  const std::size_t n = 128, h = 32, k = 4;  // 16 cycles per signal -> 4 cycles per frame
  std::vector<double> x(n);
  for (std::size_t t = 0; t < n; ++t) x[t] = std::sin(2 * std::numbers::pi * 16.0 * t / n);
  const auto spec = stdft(x, window(WindowShape::rectangular, h, h));
  for (std::size_t m = 0; m < spec.frames; ++m) {
    std::vector<double> seg(x.begin() + m * h, x.begin() + (m + 1) * h);
    const auto ref = oracle::naive_dft(seg);
    for (std::size_t b = 0; b < h; ++b) {
      EXPECT_NEAR(spec.re_at(m, b), ref.re[b], 1e-12);
      EXPECT_NEAR(spec.im_at(m, b), ref.im[b], 1e-12);
      const double e = spec.re_at(m, b) * spec.re_at(m, b) + spec.im_at(m, b) * spec.im_at(m, b);
      if (b != k && b != h - k) EXPECT_LT(e, 1e-20);
    }
  }
}

TEST(Stdft, HannFramesAreWindowedSegmentDft) {
  const std::size_t n = 128, h = 32, d = 16;
  std::mt19937_64 rng(2);
  const auto x = oracle::random_vector(n, rng);
  const auto w = window(WindowShape::hann, h, d);
  const auto spec = stdft(x, w);
  for (std::size_t m = 0; m < spec.frames; ++m) {
    std::vector<double> seg(h, 0.0);
    for (std::size_t j = 0; j < h; ++j) {
      const std::size_t t = m * d + j;
      if (t < n) seg[j] = w.value(j) * x[t];
    }
    const auto ref = oracle::naive_dft(seg);
    for (std::size_t k = 0; k < h; ++k) {
      EXPECT_NEAR(spec.re_at(m, k), ref.re[k], 1e-12);
      EXPECT_NEAR(spec.im_at(m, k), ref.im[k], 1e-12);
    }
  }
}

TEST(Wola, ExactForAllShapesAndOverlaps) {
  std::mt19937_64 rng(9);
  const std::size_t n = 200, h = 32;
  const auto x = oracle::random_vector(n, rng);
  for (auto shape : {WindowShape::rectangular, WindowShape::half_sine, WindowShape::hann}) {
    for (std::size_t d : {h, h / 2, h / 4}) {
      for (auto b : {Boundary::anchored, Boundary::padded}) {
        const auto w = window(shape, h, d, b);
        EXPECT_LE(oracle::max_abs_diff(istdft_wola_samples(stdft(x, w)), x), 1e-10)
            << to_string(shape) << " hop " << d;
      }
    }
  }
}

TEST(Wola, RejectsInconsistentSpectrogram) {
  std::mt19937_64 rng(1);
  auto spec = stdft(oracle::random_vector(64, rng), window(WindowShape::rectangular, 16, 16));
  spec.re.pop_back();
  EXPECT_THROW(istdft_wola_samples(spec), DimensionError);
}

TEST(Cola, RectangularAnyOverlapAndHalfSineHalfOverlap) {
  std::mt19937_64 rng(10);
  const std::size_t n = 256, h = 32;
  const auto x = oracle::random_vector(n, rng);
  for (std::size_t d : {h, h / 2, h / 4, h / 8}) {
    const auto w = window(WindowShape::rectangular, h, d, Boundary::padded);
    EXPECT_LE(oracle::max_abs_diff(istdft_cola_samples(stdft(x, w)), x), 1e-10) << d;
  }
  EXPECT_LE(oracle::max_abs_diff(istdft_cola_samples(stdft(x, window(WindowShape::rectangular, h, h))), x), 1e-10);
  const auto hs = window(WindowShape::half_sine, h, h / 2, Boundary::padded);
  EXPECT_LE(oracle::max_abs_diff(istdft_cola_samples(stdft(x, hs)), x), 1e-10);
}

TEST(Cola, HannWithoutOverlapRejected) {
  std::mt19937_64 rng(12);
  const auto x = oracle::random_vector(128, rng);
  EXPECT_THROW(istdft_cola_samples(stdft(x, window(WindowShape::hann, 32, 32))), ColaConditionError);
  // anchored half-sine leaves the outer half-frames under-covered
  EXPECT_THROW(istdft_cola_samples(stdft(x, window(WindowShape::half_sine, 32, 16))), ColaConditionError);
}
