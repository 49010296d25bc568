#pragma once

// Fixed linear map from Fourier coefficients back to the time axis. Placed in
// front of a time-domain model it leaves the decision function unchanged while
// exposing [Re; Im] coefficients as the model input.

#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "vilrp/error.hpp"
#include "vilrp/spectral.hpp"

namespace vilrp {

struct InverseFourier {
  std::size_t length = 0;                     // N, the time-domain output size
  std::optional<spectral::WindowSpec> window;  // empty: plain inverse DFT

  std::size_t frames() const { return window ? window->num_frames(length) : 1; }
  std::size_t bins() const { return window ? window->bins(length) : length; }
  std::size_t coefficients() const { return frames() * bins(); }
  // Input layout is [re(all coefficients); im(all coefficients)], frame-major.
  std::size_t input_size() const { return 2 * coefficients(); }
};

namespace virtual_layer {

inline void check_input(const InverseFourier& layer, std::size_t got) {
  if (got != layer.input_size()) {
    throw DimensionError("inverse-Fourier layer expects " + std::to_string(layer.input_size()) + " inputs, got " +
                         std::to_string(got));
  }
}

// Packs a spectrum / spectrogram into the layer's input layout.
inline std::vector<double> pack(const spectral::Spectrum& y) {
  std::vector<double> u(y.re);
  u.insert(u.end(), y.im.begin(), y.im.end());
  return u;
}

inline std::vector<double> pack(const spectral::Spectrogram& v) {
  std::vector<double> u(v.re);
  u.insert(u.end(), v.im.begin(), v.im.end());
  return u;
}

inline spectral::Spectrogram unpack_spectrogram(const InverseFourier& layer, std::span<const double> u) {
  check_input(layer, u.size());
  spectral::Spectrogram v;
  v.window = *layer.window;
  v.original_length = layer.length;
  v.frames = layer.frames();
  v.bins = layer.bins();
  const std::size_t c = layer.coefficients();
  v.re.assign(u.begin(), u.begin() + static_cast<std::ptrdiff_t>(c));
  v.im.assign(u.begin() + static_cast<std::ptrdiff_t>(c), u.end());
  return v;
}

// Forward: coefficients -> time signal (inverse DFT, or WOLA inverse STDFT).
inline std::vector<double> apply(const InverseFourier& layer, std::span<const double> u) {
  check_input(layer, u.size());
  if (!layer.window) {
    const std::size_t n = layer.length;
    spectral::Spectrum y{std::vector<double>(u.begin(), u.begin() + static_cast<std::ptrdiff_t>(n)),
                         std::vector<double>(u.begin() + static_cast<std::ptrdiff_t>(n), u.end())};
    return spectral::idft_samples(y);
  }
  return spectral::istdft_wola_samples(unpack_spectrogram(layer, u));
}

// Transpose: time-axis vector g -> A^T g in the coefficient layout. For the
// plain DFT this is [Re dft(g); Im dft(g)]; for the STDFT each frame sees
// g / W_n restricted to its support.
inline std::vector<double> apply_transpose(const InverseFourier& layer, std::span<const double> g) {
  if (g.size() != layer.length) throw DimensionError("transpose input must have the time-domain length");
  if (!layer.window) return pack(spectral::dft(g));
  const spectral::WindowSpec& w = *layer.window;
  const spectral::WindowWeights ww = spectral::window_weights(w, layer.length);
  const std::size_t frames = layer.frames(), bins = layer.bins(), c = layer.coefficients();
  std::vector<double> out(2 * c, 0.0), segment(bins), zeros(bins, 0.0);
  for (std::size_t m = 0; m < frames; ++m) {
    for (std::size_t j = 0; j < bins; ++j) {
      const std::ptrdiff_t t = w.frame_time(m, j);
      segment[j] = (t < 0 || t >= static_cast<std::ptrdiff_t>(layer.length))
                       ? 0.0
                       : g[static_cast<std::size_t>(t)] / ww.totals[static_cast<std::size_t>(t)];
    }
    spectral::detail::fourier(segment, zeros, std::span<double>(out).subspan(m * bins, bins),
                              std::span<double>(out).subspan(c + m * bins, bins), false);
  }
  return out;
}

// Explicit N x input_size matrix evaluated entry by entry from cos/sin. Used
// as the dense reference for the matrix-free operator on small sizes.
inline Eigen::MatrixXd dense_matrix(const InverseFourier& layer) {
  const std::size_t n = layer.length;
  const std::size_t c = layer.coefficients();
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(2 * c));
  if (!layer.window) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(n));
    for (std::size_t t = 0; t < n; ++t) {
      for (std::size_t k = 0; k < n; ++k) {
        const double theta = 2.0 * std::numbers::pi * static_cast<double>((k * t) % n) / static_cast<double>(n);
        a(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(k)) = scale * std::cos(theta);
        a(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(n + k)) = -scale * std::sin(theta);
      }
    }
    return a;
  }
  const spectral::WindowSpec& w = *layer.window;
  const spectral::WindowWeights ww = spectral::window_weights(w, n);
  const std::size_t h = layer.bins();
  const double scale = 1.0 / std::sqrt(static_cast<double>(h));
  for (std::size_t m = 0; m < layer.frames(); ++m) {
    for (std::size_t j = 0; j < h; ++j) {
      const std::ptrdiff_t t = w.frame_time(m, j);
      if (t < 0 || t >= static_cast<std::ptrdiff_t>(n)) continue;
      const double inv_w = 1.0 / ww.totals[static_cast<std::size_t>(t)];
      for (std::size_t k = 0; k < h; ++k) {
        const double theta = 2.0 * std::numbers::pi * static_cast<double>((k * j) % h) / static_cast<double>(h);
        a(t, static_cast<Eigen::Index>(m * h + k)) = scale * inv_w * std::cos(theta);
        a(t, static_cast<Eigen::Index>(c + m * h + k)) = -scale * inv_w * std::sin(theta);
      }
    }
  }
  return a;
}

}  // namespace virtual_layer
}  // namespace vilrp
