#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "vilrp/attribution.hpp"

using namespace vilrp;
using namespace vilrp::attribution;
using net::Dense;
using net::Matrix;
using net::Network;
using net::Vector;
using spectral::Boundary;
using spectral::WindowShape;
using spectral::WindowSpec;

namespace {

Network linear_model(const std::vector<double>& w, double bias = 0.0) {
  Matrix m(1, static_cast<Eigen::Index>(w.size()));
  for (std::size_t i = 0; i < w.size(); ++i) m(0, static_cast<Eigen::Index>(i)) = w[i];
  Vector b(1);
  b << bias;
  return Network{{Dense{m, b}}, w.size(), 1};
}

std::vector<double> values(const Vector& v) { return {v.data(), v.data() + v.size()}; }

// Explicit two-step propagation for dense -> relu -> dense with a generic
// per-entry contribution rule.
std::vector<double> two_step_oracle(const Dense& d1, const Dense& d2, const std::vector<double>& x, std::size_t target,
                                    double eps1, double eps2) {
  const auto n = x.size();
  const auto h = static_cast<std::size_t>(d1.weight.rows());
  std::vector<double> a(h);
  for (std::size_t j = 0; j < h; ++j) {
    double s = d1.bias(j);
    for (std::size_t i = 0; i < n; ++i) s += d1.weight(j, i) * x[i];
    a[j] = std::max(0.0, s);
  }
  double zt = d2.bias(target);
  for (std::size_t j = 0; j < h; ++j) zt += d2.weight(target, j) * a[j];
  std::vector<double> rh(h, 0.0);
  const double den2 = zt + eps2 * (zt < 0 ? -1.0 : 1.0);
  for (std::size_t j = 0; j < h; ++j) rh[j] = a[j] * d2.weight(target, j) / den2 * zt;
  std::vector<double> rx(n, 0.0);
  for (std::size_t j = 0; j < h; ++j) {
    double z = d1.bias(j);
    for (std::size_t i = 0; i < n; ++i) z += d1.weight(j, i) * x[i];
    const double den = z + eps1 * (z < 0 ? -1.0 : 1.0);
    if (den == 0.0) continue;
    for (std::size_t i = 0; i < n; ++i) rx[i] += x[i] * d1.weight(j, i) / den * rh[j];
  }
  return rx;
}

}  // namespace

TEST(Lrp, LinearModelZeroRuleIsWeightTimesInput) {
  const std::vector<double> w{0.5, -1.5, 2.0, 0.1}, x{1.0, 2.0, -0.5, 4.0};
  const Network net = linear_model(w, 0.7);
  const auto map = lrp(net, x, uniform_rules(net, LrpRule::zero()), 0);
  for (std::size_t i = 0; i < w.size(); ++i) EXPECT_NEAR(map.values[i], w[i] * x[i], 1e-14);
  EXPECT_EQ(map.domain, Domain::time);
}

TEST(Lrp, ConservationWithoutBias) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const Network net = oracle::random_mlp(16, {12, 8}, 4, 100 + trial, false);
    const auto x = oracle::random_vector(16, rng);
    for (std::size_t t = 0; t < 4; ++t) {
      const auto map = lrp(net, x, uniform_rules(net, LrpRule::zero()), t);
      const double logit = net::logits(net, x)(static_cast<Eigen::Index>(t));
      EXPECT_NEAR(map.total(), logit, 1e-8 * std::max(1.0, std::abs(logit)));
      EXPECT_NEAR(map.conservation.deficit, 0.0, 1e-8 * std::max(1.0, std::abs(logit)));
    }
  }
}

TEST(Lrp, BiasAbsorbsItsShare) {
  // For one dense layer: sum_i R_i = sum_j (z_j - b_j) / z_j * R_j.
  std::mt19937_64 rng(2);
  const Network net = oracle::random_mlp(10, {}, 3, 5);
  const auto x = oracle::random_vector(10, rng);
  const auto& d = std::get<Dense>(net.layers[0]);
  const Vector z = d.weight * Eigen::Map<const Vector>(x.data(), 10) + d.bias;
  const auto map = lrp(net, x, uniform_rules(net, LrpRule::zero()), 1);
  EXPECT_NEAR(map.total(), z(1) - d.bias(1), 1e-12);
}

TEST(Lrp, TwoLayerMatchesHandPropagation) {
  std::mt19937_64 rng(3);
  const Network net = oracle::random_mlp(8, {6}, 3, 7);
  const auto x = oracle::random_vector(8, rng);
  const auto& d1 = std::get<Dense>(net.layers[0]);
  const auto& d2 = std::get<Dense>(net.layers[2]);
  for (std::size_t t = 0; t < 3; ++t) {
    const auto zero = lrp(net, x, uniform_rules(net, LrpRule::zero()), t);
    EXPECT_LE(oracle::max_abs_diff(zero.values, two_step_oracle(d1, d2, x, t, 0.0, 0.0)), 1e-10);
    const auto eps = lrp(net, x, uniform_rules(net, LrpRule::epsilon(0.05)), t);
    EXPECT_LE(oracle::max_abs_diff(eps.values, two_step_oracle(d1, d2, x, t, 0.05, 0.05)), 1e-10);
  }
}

TEST(Lrp, GammaAndZPlusMatchDirectFormulas) {
  std::mt19937_64 rng(4);
  const Network net = oracle::random_mlp(6, {}, 2, 9);
  const auto& d = std::get<Dense>(net.layers[0]);
  const auto x = oracle::random_vector(6, rng);
  const double logit = net::logits(net, x)(0);
  {
    const double g = 0.25;
    double z = d.bias(0) + g * std::max(0.0, d.bias(0));
    for (int i = 0; i < 6; ++i) z += x[i] * (d.weight(0, i) + g * std::max(0.0, d.weight(0, i)));
    const auto map = lrp(net, x, uniform_rules(net, LrpRule::gamma(g)), 0);
    for (int i = 0; i < 6; ++i) {
      EXPECT_NEAR(map.values[i], x[i] * (d.weight(0, i) + g * std::max(0.0, d.weight(0, i))) / z * logit, 1e-12);
    }
  }
  {
    double z = 0;
    for (int i = 0; i < 6; ++i) z += std::max(0.0, x[i] * d.weight(0, i));
    const auto map = lrp(net, x, uniform_rules(net, LrpRule::z_plus()), 0);
    for (int i = 0; i < 6; ++i) EXPECT_NEAR(map.values[i], std::max(0.0, x[i] * d.weight(0, i)) / z * logit, 1e-12);
    EXPECT_NEAR(map.total(), logit, 1e-12);
  }
}

TEST(Lrp, ZPlusThroughConvConserves) {
  std::mt19937_64 rng(5);
  Network net{{}, 20, 2};
  net.layers.emplace_back(net::make_conv1d(1, 2, 4, 2, rng));
  net.layers.emplace_back(net::Relu{});
  net.layers.emplace_back(net::Flatten{});
  net.layers.emplace_back(net::make_dense(18, 2, rng));
  const auto x = oracle::random_vector(20, rng);
  const auto map = lrp(net, x, uniform_rules(net, LrpRule::z_plus()), 1);
  EXPECT_NEAR(map.total(), net::logits(net, x)(1), 1e-10);
  EXPECT_EQ(default_rules(net).per_layer.front().kind, LrpRule::Kind::z_plus);
}

TEST(Lrp, ZeroDenominatorWithRelevanceRaises) {
  const Network net = linear_model({1.0, -1.0}, 0.0);
  const std::vector<double> x{2.0, 2.0};  // z = 0
  EXPECT_NO_THROW(lrp(net, x, uniform_rules(net, LrpRule::zero()), 0));  // 0 / 0 := 0
  // Rules whose denominator is not the pre-activation can vanish while relevance arrives.
  const Network neg = linear_model({-1.0, -1.0}, 0.0);  // logit -4, positive part 0
  EXPECT_THROW(lrp(neg, x, uniform_rules(neg, LrpRule::z_plus()), 0), PropagationError);
  const Network mixed = linear_model({1.0, -2.0}, 0.0);
  const std::vector<double> ones{1.0, 1.0};  // logit -1, gamma = 1 denominator 2 - 2 = 0
  EXPECT_THROW(lrp(mixed, ones, uniform_rules(mixed, LrpRule::gamma(1.0)), 0), PropagationError);
  EXPECT_NO_THROW(lrp(mixed, ones, uniform_rules(mixed, LrpRule::epsilon(1e-3)), 0));
}

TEST(Lrp, RuleCountAndParametersValidated) {
  const Network net = oracle::random_mlp(4, {3}, 2, 1);
  const std::vector<double> x{1, 2, 3, 4};
  EXPECT_THROW(lrp(net, x, LrpRules{{LrpRule::zero()}}, 0), ConfigError);
  EXPECT_THROW(lrp(net, x, uniform_rules(net, LrpRule::epsilon(-1.0)), 0), ConfigError);
  EXPECT_THROW(lrp(net, x, default_rules(net), 2), ConfigError);
}

TEST(Sensitivity, LinearModelIsWeight) {
  const std::vector<double> w{0.5, -2.0, 3.0};
  const Network net = linear_model(w, 1.0);
  for (const auto& x : {std::vector<double>{1, 2, 3}, std::vector<double>{-5, 0, 9}}) {
    const auto map = sensitivity(net, x, 0);
    for (int i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(map.values[i], w[i]);
  }
}

TEST(Sensitivity, SameReluPatternGivesSameFourierMap) {
  // Large positive hidden biases keep every unit active for small inputs.
  Network inner = oracle::random_mlp(16, {8}, 2, 3);
  std::get<Dense>(inner.layers[0]).bias.setConstant(100.0);
  const Network aug = augment_with_inverse_fourier(inner, std::nullopt);
  std::mt19937_64 rng(4);
  const auto u1 = forward_transform(InverseFourier{16, std::nullopt}, oracle::random_vector(16, rng, 0.1));
  const auto u2 = forward_transform(InverseFourier{16, std::nullopt}, oracle::random_vector(16, rng, 0.1));
  EXPECT_LE(oracle::max_abs_diff(sensitivity(aug, u1, 1).values, sensitivity(aug, u2, 1).values), 1e-12);
}

TEST(Sensitivity, SaturatedPathGivesZeros) {
  Network net = oracle::random_mlp(5, {4}, 2, 6);
  std::get<Dense>(net.layers[0]).bias.setConstant(-1e6);
  const auto map = sensitivity(net, std::vector<double>{1, 2, 3, 4, 5}, 0);
  for (double v : map.values) EXPECT_EQ(v, 0.0);
}

TEST(Gxi, LinearModelEqualsLrpZero) {
  const std::vector<double> w{0.5, -2.0, 3.0}, x{2.0, 1.0, -1.0};
  const Network net = linear_model(w, 0.0);
  const auto a = gxi(net, x, 0);
  const auto b = lrp(net, x, uniform_rules(net, LrpRule::zero()), 0);
  EXPECT_LE(oracle::max_abs_diff(a.values, b.values), 1e-12);
}

TEST(Gxi, ZeroInputGivesZeroMap) {
  const Network net = oracle::random_mlp(6, {5}, 2, 2);
  for (double v : gxi(net, std::vector<double>(6, 0.0), 1).values) EXPECT_EQ(v, 0.0);
}

TEST(Gxi, NearLinearNetMatchesLrpZero) {
  Network net = oracle::random_mlp(12, {10}, 3, 8, false);
  for (auto& l : net.layers) {
    if (auto* d = std::get_if<Dense>(&l)) d->weight *= 1e-3;
  }
  std::mt19937_64 rng(9);
  const auto x = oracle::random_vector(12, rng);
  const auto a = gxi(net, x, 2);
  const auto b = lrp(net, x, uniform_rules(net, LrpRule::zero()), 2);
  EXPECT_LE(oracle::max_abs_diff(a.values, b.values), 1e-6);
}

TEST(Ig, LinearModelExactForAnySteps) {
  const std::vector<double> w{0.5, -2.0, 3.0}, x{2.0, 1.0, -1.0};
  const Network net = linear_model(w, 0.3);
  for (std::size_t steps : {8u, 9u, 64u}) {
    const auto map = ig(net, x, 0, steps);
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(map.values[i], w[i] * x[i], 1e-12);
  }
}

// Midpoint sums converge at first order across ReLU kinks.
TEST(Ig, CompletenessErrorShrinksWithSteps) {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 10; ++trial) {
    const Network net = oracle::random_mlp(16, {16, 8}, 3, 200 + trial);
    const auto x = oracle::random_vector(16, rng);
    const auto coarse = ig(net, x, 1, 64), fine = ig(net, x, 1, 4096);
    const double scale = std::max(1.0, std::abs(fine.conservation.output_relevance));
    EXPECT_LE(std::abs(fine.conservation.deficit), 5e-4 * scale);
    EXPECT_LE(oracle::max_abs_diff(coarse.values, fine.values), 0.1 * scale);
  }
}

TEST(Ig, CompletenessOnRandomNets) {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 10; ++trial) {
    const Network net = oracle::random_mlp(16, {16, 8}, 3, 200 + trial);
    const auto x = oracle::random_vector(16, rng);
    const auto map = ig(net, x, 1, 256);
    const double want = map.conservation.output_relevance;
    EXPECT_NEAR(map.total(), want, 1e-3 * std::max(1.0, std::abs(want)));
  }
}

TEST(Ig, StepConvergence) {
  std::mt19937_64 rng(11);
  const Network net = oracle::random_mlp(10, {8}, 2, 12);
  const auto x = oracle::random_vector(10, rng);
  const auto coarse = ig(net, x, 0, 256), fine = ig(net, x, 0, 4096);
  double scale = 0;
  for (double v : fine.values) scale = std::max(scale, std::abs(v));
  EXPECT_LE(oracle::max_abs_diff(coarse.values, fine.values), 1e-3 * scale);
}

TEST(Ig, TooFewStepsRejected) {
  const Network net = linear_model({1.0}, 0.0);
  EXPECT_THROW(ig(net, std::vector<double>{1.0}, 0, 4), ConfigError);
}

TEST(Augment, LogitsUnchanged) {
  const Network net = oracle::random_mlp(32, {16}, 4, 13);
  std::mt19937_64 rng(14);
  for (auto window : {std::optional<WindowSpec>{},
                      std::optional<WindowSpec>{WindowSpec{WindowShape::half_sine, 8, 4, Boundary::anchored}},
                      std::optional<WindowSpec>{WindowSpec{WindowShape::rectangular, 8, 8, Boundary::anchored}}}) {
    const Network aug = augment_with_inverse_fourier(net, window);
    const Network dense = augment_with_inverse_fourier(net, window, LayerMode::dense);
    const InverseFourier layer{32, window};
    for (int i = 0; i < 100; ++i) {
      const auto x = oracle::random_vector(32, rng);
      const auto u = forward_transform(layer, x);
      const Vector base = net::logits(net, x);
      EXPECT_LE((net::logits(aug, u) - base).cwiseAbs().maxCoeff(), 1e-9);
      EXPECT_LE((net::logits(dense, u) - base).cwiseAbs().maxCoeff(), 1e-9);
    }
  }
}

TEST(Augment, RejectsDoubleAugmentationAndBadWindow) {
  const Network net = oracle::random_mlp(16, {4}, 2, 1);
  const Network aug = augment_with_inverse_fourier(net, std::nullopt);
  EXPECT_THROW(augment_with_inverse_fourier(aug, std::nullopt), DimensionError);
  EXPECT_THROW(augment_with_inverse_fourier(net, WindowSpec{WindowShape::hann, 4, 8, Boundary::anchored}),
               WindowAdmissibilityError);
}

TEST(Augment, FourierMapsSplitRealAndImaginary) {
  const Network net = oracle::random_mlp(16, {8}, 2, 15);
  const Network aug = augment_with_inverse_fourier(net, std::nullopt);
  std::mt19937_64 rng(16);
  const auto u = forward_transform(InverseFourier{16, std::nullopt}, oracle::random_vector(16, rng));
  const auto map = gxi(aug, u, 0);
  EXPECT_EQ(map.domain, Domain::frequency);
  EXPECT_EQ(map.cols, 16u);
  for (std::size_t k = 0; k < 16; ++k) EXPECT_DOUBLE_EQ(map.values[k], map.re_part[k] + map.im_part[k]);
}

TEST(Lifted, MatchesAugmentedNetworkPath) {
  const Network net = oracle::random_mlp(32, {16}, 3, 17);
  std::mt19937_64 rng(18);
  for (auto window : {std::optional<WindowSpec>{},
                      std::optional<WindowSpec>{WindowSpec{WindowShape::hann, 8, 2, Boundary::anchored}}}) {
    const Network aug = augment_with_inverse_fourier(net, window);
    const InverseFourier layer{32, window};
    const auto x = oracle::random_vector(32, rng);
    const auto u = forward_transform(layer, x);
    const auto lg = time_gradients(net, x, 2, 64);
    for (Method m : {Method::sensitivity, Method::gxi, Method::ig}) {
      const auto lifted = lifted_map(layer, x, lg, m);
      AttributionConfig cfg;
      cfg.method = m;
      cfg.target = 2;
      cfg.ig_steps = 64;
      const auto direct = attribute(aug, u, cfg);
      EXPECT_LE(oracle::max_abs_diff(lifted.values, direct.values), 1e-10) << to_string(m);
      EXPECT_EQ(lifted.rows, direct.rows);
    }
    EXPECT_THROW(lifted_map(layer, x, lg, Method::lrp), ConfigError);
  }
}

TEST(Names, RoundTrip) {
  for (Method m : {Method::lrp, Method::sensitivity, Method::gxi, Method::ig}) EXPECT_EQ(parse_method(to_string(m)), m);
  for (Domain d : {Domain::time, Domain::frequency, Domain::time_frequency}) EXPECT_EQ(parse_domain(to_string(d)), d);
  EXPECT_THROW(parse_method("shap"), ConfigError);
  EXPECT_THROW(parse_domain("wavelet"), ConfigError);
}
