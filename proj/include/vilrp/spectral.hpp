#pragma once

// Unitary DFT / inverse DFT, windowed short-time DFT, and the two overlap-add
// inverses (weighted and squared-window). All transforms use the symmetric
// 1/sqrt(N) normalization, so Parseval holds without extra factors.

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "vilrp/error.hpp"

namespace vilrp::spectral {

struct Signal {
  std::vector<double> samples;
  std::optional<double> sample_rate;  // Hz, carried as metadata only

  std::size_t size() const { return samples.size(); }
};

// Complex coefficients held as parallel real / imaginary arrays.
struct Spectrum {
  std::vector<double> re;
  std::vector<double> im;

  std::size_t size() const { return re.size(); }
  double amplitude(std::size_t k) const { return std::hypot(re[k], im[k]); }
  double phase(std::size_t k) const { return std::atan2(im[k], re[k]); }
};

enum class WindowShape { rectangular, half_sine, hann };

// anchored: frame m starts at m*hop (the last frame is zero-padded past the end).
// padded:   frame m starts at m*hop - (width - hop), so the first and last
//           samples see the same number of overlapping frames as the interior.
enum class Boundary { anchored, padded };

// local: each frame gets a width-point DFT over its own support (width bins).
// full:  each frame gets an N-point DFT of the windowed signal on the whole
//        time axis (N bins, phases referenced to absolute time).
enum class FrameBasis { local, full };

inline std::string_view to_string(WindowShape s) {
  switch (s) {
    case WindowShape::rectangular: return "rect";
    case WindowShape::half_sine: return "halfsine";
    case WindowShape::hann: return "hann";
  }
  return "?";
}

inline WindowShape parse_window_shape(std::string_view name) {
  if (name == "rect" || name == "rectangular") return WindowShape::rectangular;
  if (name == "halfsine" || name == "half_sine" || name == "sine") return WindowShape::half_sine;
  if (name == "hann") return WindowShape::hann;
  throw ConfigError("unknown window shape '" + std::string(name) + "'");
}

struct WindowSpec {
  WindowShape shape = WindowShape::rectangular;
  std::size_t width = 1;  // H
  std::size_t hop = 1;    // D
  Boundary boundary = Boundary::anchored;
  FrameBasis basis = FrameBasis::local;

  // Window value at in-frame index j. Sampling at half-integer points keeps
  // the tapered shapes strictly positive inside the frame. The rectangular
  // height sqrt(hop/width) makes the squared sum one whenever hop divides width.
  double value(std::size_t j) const {
    const double phase = std::numbers::pi * (static_cast<double>(j) + 0.5) / static_cast<double>(width);
    switch (shape) {
      case WindowShape::rectangular:
        return std::sqrt(static_cast<double>(hop) / static_cast<double>(width));
      case WindowShape::half_sine:
        return std::sin(phase);
      case WindowShape::hann: {
        const double s = std::sin(phase);
        return s * s;
      }
    }
    return 0.0;
  }

  std::ptrdiff_t lead() const {
    if (boundary == Boundary::anchored || hop >= width) return 0;
    return static_cast<std::ptrdiff_t>(width - hop);
  }

  std::ptrdiff_t frame_start(std::size_t m) const {
    return static_cast<std::ptrdiff_t>(m * hop) - lead();
  }

  std::size_t num_frames(std::size_t n) const {
    if (boundary == Boundary::padded) {
      return (n - 1 + static_cast<std::size_t>(lead())) / hop + 1;
    }
    if (n <= width) return 1;
    return (n - width + hop - 1) / hop + 1;
  }

  // Frequency bins per frame for a signal of length n.
  std::size_t bins(std::size_t n) const { return basis == FrameBasis::full ? n : width; }

  // Absolute time index of position j in frame m's DFT input (may fall
  // outside [0, n) for local frames at the edges).
  std::ptrdiff_t frame_time(std::size_t m, std::size_t j) const {
    return basis == FrameBasis::full ? static_cast<std::ptrdiff_t>(j) : frame_start(m) + static_cast<std::ptrdiff_t>(j);
  }

  // Window weight at position j of frame m's DFT input.
  double frame_weight(std::size_t m, std::size_t j) const {
    if (basis == FrameBasis::local) return value(j);
    const std::ptrdiff_t rel = static_cast<std::ptrdiff_t>(j) - frame_start(m);
    return (rel < 0 || rel >= static_cast<std::ptrdiff_t>(width)) ? 0.0 : value(static_cast<std::size_t>(rel));
  }

  void validate() const {
    if (width == 0 || hop == 0) throw ConfigError("window width and hop must be positive");
  }
};

// Frames x bins grid, row-major (frame-major).
struct Spectrogram {
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::vector<double> re;
  std::vector<double> im;
  WindowSpec window;
  std::size_t original_length = 0;

  double& re_at(std::size_t m, std::size_t k) { return re[m * bins + k]; }
  double& im_at(std::size_t m, std::size_t k) { return im[m * bins + k]; }
  double re_at(std::size_t m, std::size_t k) const { return re[m * bins + k]; }
  double im_at(std::size_t m, std::size_t k) const { return im[m * bins + k]; }
};

// Window values laid out on the full time axis plus their column sums W_n.
struct WindowWeights {
  std::size_t frames = 0;
  std::size_t length = 0;
  std::vector<double> values;  // frames x length
  std::vector<double> totals;  // W_n

  double at(std::size_t m, std::size_t n) const { return values[m * length + n]; }
};

namespace detail {

inline void require_finite(std::span<const double> v, std::string_view what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw InvalidInput(std::string(what) + " contains a non-finite value");
  }
}

// Direct summation with the angle reduced modulo N before evaluating cos/sin.
inline void dft_direct(std::span<const double> re_in, std::span<const double> im_in,
                       std::span<double> re_out, std::span<double> im_out, bool inverse) {
  const std::size_t n = re_in.size();
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  const double sign = inverse ? 1.0 : -1.0;
  std::vector<double> cos_table(n), sin_table(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(n);
    cos_table[j] = std::cos(angle);
    sin_table[j] = std::sin(angle);
  }
  for (std::size_t k = 0; k < n; ++k) {
    double acc_re = 0.0, acc_im = 0.0;
    std::size_t idx = 0;
    for (std::size_t t = 0; t < n; ++t) {
      const double c = cos_table[idx];
      const double s = sign * sin_table[idx];
      acc_re += re_in[t] * c - im_in[t] * s;
      acc_im += re_in[t] * s + im_in[t] * c;
      idx += k;
      if (idx >= n) idx -= n;
    }
    re_out[k] = acc_re * scale;
    im_out[k] = acc_im * scale;
  }
}

inline void dft_fast(std::span<const double> re_in, std::span<const double> im_in,
                     std::span<double> re_out, std::span<double> im_out, bool inverse) {
  const std::size_t n = re_in.size();
  std::vector<std::complex<double>> in(n), out;
  for (std::size_t t = 0; t < n; ++t) {
    in[t] = inverse ? std::complex<double>(re_in[t], -im_in[t]) : std::complex<double>(re_in[t], im_in[t]);
  }
  Eigen::FFT<double> fft;
  fft.fwd(out, in);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  for (std::size_t k = 0; k < n; ++k) {
    re_out[k] = out[k].real() * scale;
    im_out[k] = (inverse ? -out[k].imag() : out[k].imag()) * scale;
  }
}

// Below this size the direct sum is both exact enough and cheap.
inline constexpr std::size_t kFastPathThreshold = 64;

inline void fourier(std::span<const double> re_in, std::span<const double> im_in,
                    std::span<double> re_out, std::span<double> im_out, bool inverse) {
  if (re_in.size() >= kFastPathThreshold) {
    dft_fast(re_in, im_in, re_out, im_out, inverse);
  } else {
    dft_direct(re_in, im_in, re_out, im_out, inverse);
  }
}

}  // namespace detail

inline void validate(const Signal& s) {
  if (s.size() < 2) throw InvalidInput("signal needs at least 2 samples");
  detail::require_finite(s.samples, "signal");
  if (s.sample_rate && !(*s.sample_rate > 0.0)) throw InvalidInput("sample rate must be positive");
}

inline Spectrum dft(std::span<const double> x) {
  if (x.empty()) throw InvalidInput("signal is empty");
  detail::require_finite(x, "signal");
  Spectrum y{std::vector<double>(x.size()), std::vector<double>(x.size())};
  const std::vector<double> zeros(x.size(), 0.0);
  detail::fourier(x, zeros, y.re, y.im, false);
  return y;
}

inline Spectrum dft(const Signal& s) {
  validate(s);
  return dft(std::span<const double>(s.samples));
}

// Real-signal form of the inverse: x_n = Re(iDFT(y)_n).
inline std::vector<double> idft_samples(const Spectrum& y) {
  if (y.re.size() != y.im.size()) throw DimensionError("spectrum re/im length mismatch");
  detail::require_finite(y.re, "spectrum");
  detail::require_finite(y.im, "spectrum");
  if (y.size() == 0) throw InvalidInput("spectrum is empty");
  std::vector<double> x(y.size()), discard(y.size());
  detail::fourier(y.re, y.im, x, discard, true);
  return x;
}

inline Signal idft(const Spectrum& y) { return Signal{idft_samples(y), std::nullopt}; }

inline WindowWeights window_weights(const WindowSpec& window, std::size_t n) {
  window.validate();
  WindowWeights ww;
  ww.frames = window.num_frames(n);
  ww.length = n;
  ww.values.assign(ww.frames * n, 0.0);
  ww.totals.assign(n, 0.0);
  for (std::size_t m = 0; m < ww.frames; ++m) {
    const std::ptrdiff_t start = window.frame_start(m);
    for (std::size_t j = 0; j < window.width; ++j) {
      const std::ptrdiff_t t = start + static_cast<std::ptrdiff_t>(j);
      if (t < 0 || t >= static_cast<std::ptrdiff_t>(n)) continue;
      const double w = window.value(j);
      ww.values[m * n + static_cast<std::size_t>(t)] = w;
      ww.totals[static_cast<std::size_t>(t)] += w;
    }
  }
  for (std::size_t t = 0; t < n; ++t) {
    if (ww.totals[t] == 0.0) {
      throw WindowAdmissibilityError("sample " + std::to_string(t) + " is not covered by any window (W_n = 0)");
    }
  }
  return ww;
}

inline Spectrogram stdft(std::span<const double> x, const WindowSpec& window) {
  detail::require_finite(x, "signal");
  const std::size_t n = x.size();
  window_weights(window, n);  // admissibility
  Spectrogram spec;
  spec.window = window;
  spec.original_length = n;
  spec.frames = window.num_frames(n);
  spec.bins = window.bins(n);
  spec.re.assign(spec.frames * spec.bins, 0.0);
  spec.im.assign(spec.frames * spec.bins, 0.0);
  std::vector<double> segment(spec.bins), zeros(spec.bins, 0.0);
  for (std::size_t m = 0; m < spec.frames; ++m) {
    for (std::size_t j = 0; j < spec.bins; ++j) {
      const std::ptrdiff_t t = window.frame_time(m, j);
      segment[j] =
          (t < 0 || t >= static_cast<std::ptrdiff_t>(n)) ? 0.0 : x[static_cast<std::size_t>(t)] * window.frame_weight(m, j);
    }
    detail::fourier(segment, zeros, std::span<double>(spec.re).subspan(m * spec.bins, spec.bins),
                    std::span<double>(spec.im).subspan(m * spec.bins, spec.bins), false);
  }
  return spec;
}

inline Spectrogram stdft(const Signal& s, const WindowSpec& window) {
  validate(s);
  return stdft(std::span<const double>(s.samples), window);
}

namespace detail {

// Sum over frames of iDFT(v_m) placed on the time axis, each frame first
// multiplied by `synthesis(m, j)`.
template <typename SynthesisWeight>
std::vector<double> overlap_add(const Spectrogram& spec, SynthesisWeight synthesis) {
  if (spec.re.size() != spec.frames * spec.bins || spec.im.size() != spec.re.size()) {
    throw DimensionError("spectrogram storage does not match frames x bins");
  }
  if (spec.bins != spec.window.bins(spec.original_length)) {
    throw DimensionError("spectrogram bins do not match its window basis");
  }
  if (spec.frames != spec.window.num_frames(spec.original_length)) {
    throw DimensionError("spectrogram frame count does not match its window and length");
  }
  require_finite(spec.re, "spectrogram");
  require_finite(spec.im, "spectrogram");
  const std::size_t n = spec.original_length;
  std::vector<double> acc(n, 0.0), frame(spec.bins), discard(spec.bins);
  for (std::size_t m = 0; m < spec.frames; ++m) {
    fourier(std::span<const double>(spec.re).subspan(m * spec.bins, spec.bins),
              std::span<const double>(spec.im).subspan(m * spec.bins, spec.bins), frame, discard, true);
    for (std::size_t j = 0; j < spec.bins; ++j) {
      const std::ptrdiff_t t = spec.window.frame_time(m, j);
      if (t < 0 || t >= static_cast<std::ptrdiff_t>(n)) continue;
      acc[static_cast<std::size_t>(t)] += synthesis(m, j) * frame[j];
    }
  }
  return acc;
}

}  // namespace detail

// Weighted overlap-add: divides the overlap-added frames by W_n.
inline std::vector<double> istdft_wola_samples(const Spectrogram& spec) {
  const WindowWeights ww = window_weights(spec.window, spec.original_length);
  std::vector<double> x = detail::overlap_add(spec, [](std::size_t, std::size_t) { return 1.0; });
  for (std::size_t t = 0; t < x.size(); ++t) x[t] /= ww.totals[t];
  return x;
}

inline Signal istdft_wola(const Spectrogram& spec) { return Signal{istdft_wola_samples(spec), std::nullopt}; }

inline constexpr double kColaTolerance = 1e-9;

// Overlap-add with the window reapplied at synthesis and no W_n rescaling.
// Exact iff sum_m w_m(n)^2 == 1 for every sample.
inline std::vector<double> istdft_cola_samples(const Spectrogram& spec) {
  const WindowWeights ww = window_weights(spec.window, spec.original_length);
  for (std::size_t t = 0; t < ww.length; ++t) {
    double sq = 0.0;
    for (std::size_t m = 0; m < ww.frames; ++m) sq += ww.at(m, t) * ww.at(m, t);
    if (std::abs(sq - 1.0) > kColaTolerance) {
      throw ColaConditionError("squared window sum is " + std::to_string(sq) + " at sample " + std::to_string(t) +
                               ", expected 1");
    }
  }
  const WindowSpec& window = spec.window;
  return detail::overlap_add(spec, [&window](std::size_t m, std::size_t j) { return window.frame_weight(m, j); });
}

inline Signal istdft_cola(const Spectrogram& spec) { return Signal{istdft_cola_samples(spec), std::nullopt}; }

}  // namespace vilrp::spectral
