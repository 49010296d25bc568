#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "vilrp/inspection.hpp"

using namespace vilrp;
using attribution::LrpRule;
using inspection::DftLrpInput;
using inspection::StdftLrpInput;
using spectral::Boundary;
using spectral::FrameBasis;
using spectral::WindowShape;
using spectral::WindowSpec;

namespace {

double relative_gap(const std::vector<double>& a, const std::vector<double>& b) {
  double scale = 0.0;
  for (double v : b) scale = std::max(scale, std::abs(v));
  return oracle::max_abs_diff(a, b) / std::max(scale, 1e-300);
}

int shape_code(WindowShape s) {
  return s == WindowShape::rectangular ? 0 : s == WindowShape::half_sine ? 1 : 2;
}

oracle::StdftOracle oracle_for(const WindowSpec& w, std::size_t n) {
  return oracle::StdftOracle(n, shape_code(w.shape), w.width, w.hop, w.boundary == Boundary::padded,
                             w.basis == FrameBasis::full);
}

}  // namespace

TEST(DftLrp, MatchesExplicitEpsilonRuleOnInverseMatrix) {
  std::mt19937_64 rng(11);
  for (std::size_t n : {8u, 17u, 64u, 100u}) {
    const auto x = oracle::random_vector(n, rng);
    const auto r = oracle::random_vector(n, rng);
    const auto a = oracle::dft_inverse_matrix(n);
    std::vector<double> u(2 * n);
    const auto y = oracle::naive_dft(x);
    for (std::size_t k = 0; k < n; ++k) {
      u[k] = y.re[k];
      u[n + k] = y.im[k];
    }
    const auto want = oracle::dense_epsilon_lrp(a, u, r, 1e-9);
    for (bool half : {true, false}) {
      const auto map = inspection::dft_lrp(DftLrpInput{r, x}, half);
      EXPECT_LT(relative_gap(map.values, want), 1e-9) << "n=" << n << " half=" << half;
    }
  }
}

TEST(DftLrp, EqualsLrpThroughAugmentedDenseNetwork) {
  const auto net = oracle::random_mlp(32, {12}, 3, 5);
  std::mt19937_64 rng(3);
  const auto x = oracle::random_vector(32, rng);
  const auto rules = attribution::uniform_rules(net, LrpRule::epsilon_relative(1e-6));

  const auto time = attribution::lrp(net, x, rules, 1);
  const auto map = inspection::dft_lrp(DftLrpInput{time.values, x});

  const auto aug = attribution::augment_with_inverse_fourier(net, std::nullopt, attribution::LayerMode::dense);
  auto aug_rules = rules;
  aug_rules.per_layer.insert(aug_rules.per_layer.begin(), LrpRule::epsilon_relative(1e-9));
  const auto u = attribution::forward_transform(*attribution::virtual_front(
                                                    attribution::augment_with_inverse_fourier(net, std::nullopt)),
                                                x);
  const auto full = attribution::lrp(aug, u, aug_rules, 1);
  ASSERT_EQ(full.values.size(), 64u);
  std::vector<double> folded(32);
  for (std::size_t k = 0; k < 32; ++k) folded[k] = full.values[k] + full.values[32 + k];
  EXPECT_LT(relative_gap(map.values, folded), 1e-8);
}

TEST(DftLrp, ConservesTotalRelevanceExactlyWithoutStabilizer) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 16 + 7 * static_cast<std::size_t>(trial);
    const auto x = oracle::random_vector(n, rng);
    const auto r = oracle::random_vector(n, rng);
    DftLrpInput in{r, x};
    in.epsilon = 0.0;
    const auto map = inspection::dft_lrp(in);
    double rt = 0.0;
    for (double v : r) rt += v;
    EXPECT_NEAR(map.total(), rt, 1e-8 * std::max(1.0, std::abs(rt)));
    EXPECT_NEAR(map.conservation.deficit, 0.0, 1e-8 * std::max(1.0, std::abs(rt)));
  }
}

TEST(DftLrp, DeficitIsWhatTheStabilizerAbsorbs) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 16 + 7 * static_cast<std::size_t>(trial);
    const auto x = oracle::random_vector(n, rng);
    const auto r = oracle::random_vector(n, rng);
    const auto map = inspection::dft_lrp(DftLrpInput{r, x});
    double mean = 0.0;
    for (double v : x) mean += std::abs(v);
    const double eps = 1e-9 * mean / static_cast<double>(n);
    double absorbed = 0.0;
    for (std::size_t t = 0; t < n; ++t) absorbed += r[t] * eps / (std::abs(x[t]) + eps);
    EXPECT_NEAR(map.conservation.deficit, absorbed, 1e-10);
  }
}

TEST(DftLrp, RealSignalGivesSymmetricMapAndFoldKeepsTotal) {
  std::mt19937_64 rng(8);
  const auto x = oracle::random_vector(40, rng);
  const auto r = oracle::random_vector(40, rng);
  const auto map = inspection::dft_lrp(DftLrpInput{r, x}, false);
  for (std::size_t k = 1; k < 40; ++k) EXPECT_NEAR(map.values[k], map.values[40 - k], 1e-10);
  const auto folded = inspection::fold_symmetric(map);
  EXPECT_EQ(folded.cols, 21u);
  EXPECT_NEAR(folded.total(), map.total(), 1e-10);
}

TEST(DftLrp, ZeroRelevanceGivesZeroMap) {
  std::mt19937_64 rng(9);
  const auto x = oracle::random_vector(24, rng);
  const auto map = inspection::dft_lrp(DftLrpInput{std::vector<double>(24, 0.0), x});
  for (double v : map.values) EXPECT_EQ(v, 0.0);
}

TEST(DftLrp, PureToneRelevanceLandsOnItsBins) {
  const std::size_t n = 64;
  std::vector<double> x(n);
  for (std::size_t t = 0; t < n; ++t) x[t] = std::cos(2.0 * std::numbers::pi * 5.0 * static_cast<double>(t) / n);
  // relevance proportional to the signal (a linear model w = x)
  std::vector<double> r(n);
  for (std::size_t t = 0; t < n; ++t) r[t] = x[t] * x[t];
  DftLrpInput in{r, x};
  in.epsilon = 0.0;
  const auto map = inspection::dft_lrp(in);
  double off = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (k != 5 && k != n - 5) off += std::abs(map.values[k]);
  }
  EXPECT_LT(off, 1e-9);
  EXPECT_NEAR(map.values[5] + map.values[n - 5], 32.0, 1e-8);
}

TEST(DftLrp, StaleSpectrumIsRejected) {
  std::mt19937_64 rng(1);
  const auto x = oracle::random_vector(16, rng);
  const auto r = oracle::random_vector(16, rng);
  DftLrpInput in{r, x};
  in.spectrum = spectral::dft(x);
  in.spectrum->re[3] += 1e-3;
  EXPECT_THROW(inspection::dft_lrp(in), StaleSpectrumError);
  in.spectrum_verified = true;
  EXPECT_NO_THROW(inspection::dft_lrp(in));
  in.spectrum = spectral::dft(x);
  in.spectrum_verified = false;
  EXPECT_NO_THROW(inspection::dft_lrp(in));
}

TEST(DftLrp, InputErrors) {
  EXPECT_THROW(inspection::dft_lrp(DftLrpInput{{1.0}, {1.0}}), InvalidInput);
  EXPECT_THROW(inspection::dft_lrp(DftLrpInput{{1.0, 2.0}, {1.0, 2.0, 3.0}}), DimensionError);
  DftLrpInput bad{{1.0, 2.0}, {1.0, 2.0}};
  bad.spectrum = spectral::Spectrum{{1.0}, {0.0}};
  EXPECT_THROW(inspection::dft_lrp(bad), DimensionError);
}

TEST(StdftLrp, MatchesExplicitEpsilonRuleForAllWindows) {
  std::mt19937_64 rng(21);
  const std::size_t n = 48;
  const auto x = oracle::random_vector(n, rng);
  const auto r = oracle::random_vector(n, rng);
  for (auto shape : {WindowShape::rectangular, WindowShape::half_sine, WindowShape::hann}) {
    for (auto [h, d] : {std::pair<std::size_t, std::size_t>{8, 8}, {8, 4}, {12, 3}, {16, 8}}) {
      for (auto boundary : {Boundary::anchored, Boundary::padded}) {
        for (auto basis : {FrameBasis::local, FrameBasis::full}) {
          const WindowSpec w{shape, h, d, boundary, basis};
          const auto o = oracle_for(w, n);
          const auto want = oracle::dense_epsilon_lrp(o.inverse_matrix(), o.coefficients(x), r, 1e-9);
          const auto map = inspection::stdft_lrp(StdftLrpInput{r, x, w});
          ASSERT_EQ(map.rows, o.frames);
          ASSERT_EQ(map.cols, o.bins);
          EXPECT_LT(relative_gap(map.values, want), 1e-8)
              << spectral::to_string(shape) << " H=" << h << " D=" << d << " padded=" << (boundary == Boundary::padded)
              << " full=" << (basis == FrameBasis::full);
        }
      }
    }
  }
}

TEST(StdftLrp, ConservesTotalRelevance) {
  std::mt19937_64 rng(22);
  const std::size_t n = 60;
  for (auto shape : {WindowShape::rectangular, WindowShape::half_sine, WindowShape::hann}) {
    for (auto basis : {FrameBasis::local, FrameBasis::full}) {
      const WindowSpec w{shape, 12, 4, Boundary::padded, basis};
      const auto x = oracle::random_vector(n, rng);
      const auto r = oracle::random_vector(n, rng);
      StdftLrpInput in{r, x, w};
      in.epsilon = 0.0;
      const auto map = inspection::stdft_lrp(in);
      double rt = 0.0;
      for (double v : r) rt += v;
      EXPECT_NEAR(map.total(), rt, 1e-8 * std::max(1.0, std::abs(rt)));
    }
  }
}

TEST(StdftLrp, RectangularNonOverlappingConservesPerFrame) {
  std::mt19937_64 rng(23);
  const std::size_t n = 40, h = 8;
  const auto x = oracle::random_vector(n, rng);
  const auto r = oracle::random_vector(n, rng);
  for (auto basis : {FrameBasis::local, FrameBasis::full}) {
    const WindowSpec w{WindowShape::rectangular, h, h, Boundary::anchored, basis};
    StdftLrpInput in{r, x, w};
    in.epsilon = 0.0;
    const auto map = inspection::stdft_lrp(in);
    ASSERT_EQ(map.rows, n / h);
    for (std::size_t m = 0; m < map.rows; ++m) {
      double frame = 0.0, want = 0.0;
      for (std::size_t k = 0; k < map.cols; ++k) frame += map.at(m, k);
      for (std::size_t j = 0; j < h; ++j) want += r[m * h + j];
      EXPECT_NEAR(frame, want, 1e-8) << "frame " << m;
    }
  }
}

TEST(StdftLrp, SingleFullWidthFrameEqualsDftLrp) {
  std::mt19937_64 rng(24);
  const std::size_t n = 32;
  const auto x = oracle::random_vector(n, rng);
  const auto r = oracle::random_vector(n, rng);
  const WindowSpec w{WindowShape::rectangular, n, n, Boundary::anchored};
  const auto tf = inspection::stdft_lrp(StdftLrpInput{r, x, w});
  const auto f = inspection::dft_lrp(DftLrpInput{r, x});
  ASSERT_EQ(tf.rows, 1u);
  EXPECT_LT(oracle::max_abs_diff(tf.values, f.values), 1e-10);
}

TEST(StdftLrp, FullBasisKeepsToneInItsGlobalBins) {
  const std::size_t n = 80;
  std::vector<double> x(n), r(n);
  for (std::size_t t = 0; t < n; ++t) {
    x[t] = std::sin(2.0 * std::numbers::pi * 7.0 * static_cast<double>(t) / n);
    r[t] = x[t] * x[t];
  }
  const WindowSpec w{WindowShape::rectangular, 8, 8, Boundary::anchored, FrameBasis::full};
  const auto map = inspection::stdft_lrp(StdftLrpInput{r, x, w});
  double on = 0.0, pos = 0.0;
  for (std::size_t m = 0; m < map.rows; ++m) {
    for (std::size_t k = 0; k < map.cols; ++k) {
      const double v = std::max(0.0, map.at(m, k));
      pos += v;
      if (k == 7 || k == n - 7) on += v;
    }
  }
  EXPECT_GT(pos, 0.0);
  EXPECT_GT(on / pos, 0.2);  // a short frame smears the tone, but its bin stays the largest
  for (std::size_t m = 0; m < map.rows; ++m) {
    std::size_t best = 0;
    for (std::size_t k = 0; k <= n / 2; ++k) {
      if (map.at(m, k) > map.at(m, best)) best = k;
    }
    EXPECT_EQ(best, 7u) << "frame " << m;
  }
}

TEST(StdftLrp, StaleOrMismatchedSpectrogramIsRejected) {
  std::mt19937_64 rng(25);
  const std::size_t n = 32;
  const auto x = oracle::random_vector(n, rng);
  const auto r = oracle::random_vector(n, rng);
  const WindowSpec w{WindowShape::half_sine, 8, 4, Boundary::padded};
  StdftLrpInput in{r, x, w};
  in.spectrogram = spectral::stdft(x, w);
  in.spectrogram->im[5] -= 0.01;
  EXPECT_THROW(inspection::stdft_lrp(in), StaleSpectrumError);
  in.spectrogram = spectral::stdft(x, WindowSpec{WindowShape::half_sine, 16, 8, Boundary::padded});
  EXPECT_THROW(inspection::stdft_lrp(in), DimensionError);
}

TEST(StdftLrp, InadmissibleWindowIsRejected) {
  const std::vector<double> x(16, 1.0);
  const WindowSpec gap{WindowShape::rectangular, 4, 8, Boundary::anchored};
  EXPECT_THROW(inspection::stdft_lrp(StdftLrpInput{x, x, gap}), WindowAdmissibilityError);
}

TEST(Fold, MergeMirroredAddsPairsAndKeepsDcAndNyquist) {
  attribution::RelevanceMap m;
  m.domain = attribution::Domain::frequency;
  m.rows = 1;
  m.cols = 6;
  m.values = {1, 2, 3, 4, 5, 6};
  const auto f = inspection::merge_mirrored(m);
  ASSERT_EQ(f.cols, 4u);
  EXPECT_EQ(f.values, (std::vector<double>{1, 8, 8, 4}));
  m.cols = 5;
  m.values = {1, 2, 3, 4, 5};
  const auto g = inspection::merge_mirrored(m);
  EXPECT_EQ(g.values, (std::vector<double>{1, 7, 7}));
}

TEST(Fold, AsymmetricMapIsRejected) {
  attribution::RelevanceMap m;
  m.domain = attribution::Domain::frequency;
  m.rows = 1;
  m.cols = 4;
  m.values = {0.0, 1.0, 0.0, 0.5};
  EXPECT_THROW(inspection::fold_symmetric(m), SymmetryError);
  m.domain = attribution::Domain::time;
  EXPECT_THROW(inspection::merge_mirrored(m), UnsupportedDomain);
}
