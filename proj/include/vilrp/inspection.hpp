#pragma once

// Closed-form transport of time-domain relevances R_n = x_n c_n onto Fourier
// coefficients. Each coefficient receives its contribution to x_n times c_n,
// summed over time:
//
//   R_k,Re = Re(y_k) / sqrt(N) * sum_n cos(2 pi k n / N) c_n
//   R_k,Im = -Im(y_k) / sqrt(N) * sum_n sin(2 pi k n / N) c_n
//
// For the STDFT the sum runs over the samples of frame m (in-frame index j,
// window width H) and c_n is divided by the window envelope W_n.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vilrp/attribution.hpp"
#include "vilrp/error.hpp"
#include "vilrp/spectral.hpp"

namespace vilrp::inspection {

using attribution::Domain;
using attribution::RelevanceMap;

inline constexpr double kDefaultDivisionEpsilon = 1e-9;  // times mean |x|
inline constexpr double kStaleTolerance = 1e-9;
inline constexpr double kSymmetryTolerance = 1e-8;

struct DftLrpInput {
  std::vector<double> relevance;  // R_n
  std::vector<double> signal;     // x_n
  std::optional<spectral::Spectrum> spectrum;  // dft(x); recomputed when absent
  bool spectrum_verified = false;              // skip the stale-spectrum check
  std::optional<double> epsilon;               // absolute; default 1e-9 * mean |x|
};

struct StdftLrpInput {
  std::vector<double> relevance;
  std::vector<double> signal;
  spectral::WindowSpec window;
  std::optional<spectral::Spectrogram> spectrogram;
  bool spectrogram_verified = false;
  std::optional<double> epsilon;
};

namespace detail {

inline double mean_abs(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += std::abs(x);
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

// c_n = R_n / (x_n + eps * sign(x_n)), with 0 where x_n == 0.
inline std::vector<double> contribution_factors(std::span<const double> r, std::span<const double> x,
                                                std::optional<double> epsilon) {
  if (r.size() != x.size()) {
    throw DimensionError("relevance length " + std::to_string(r.size()) + " does not match signal length " +
                         std::to_string(x.size()));
  }
  spectral::detail::require_finite(r, "relevance");
  spectral::detail::require_finite(x, "signal");
  const double eps = epsilon ? *epsilon : kDefaultDivisionEpsilon * mean_abs(x);
  if (eps < 0.0) throw ConfigError("division epsilon must be non-negative");
  std::vector<double> c(r.size(), 0.0);
  for (std::size_t n = 0; n < r.size(); ++n) {
    if (x[n] == 0.0) continue;
    c[n] = r[n] / (x[n] + (x[n] > 0.0 ? eps : -eps));
  }
  return c;
}

struct TrigTable {
  std::vector<double> cos, sin;
  explicit TrigTable(std::size_t n) : cos(n), sin(n) {
    for (std::size_t j = 0; j < n; ++j) {
      const double a = 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(n);
      cos[j] = std::cos(a);
      sin[j] = std::sin(a);
    }
  }
};

// Writes R_k,Re / R_k,Im for one block of length n into re_out / im_out.
// With half_only, bins above n/2 are mirrored from their partners.
inline void transport_block(std::span<const double> y_re, std::span<const double> y_im, std::span<const double> c,
                            const TrigTable& trig, bool half_only, std::span<double> re_out,
                            std::span<double> im_out) {
  const std::size_t n = c.size();
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  const std::size_t last = half_only ? n / 2 : n - 1;
  for (std::size_t k = 0; k <= last; ++k) {
    double cs = 0.0, sn = 0.0;
    std::size_t idx = 0;
    for (std::size_t t = 0; t < n; ++t) {
      cs += trig.cos[idx] * c[t];
      sn += trig.sin[idx] * c[t];
      idx += k;
      if (idx >= n) idx -= n;
    }
    re_out[k] = scale * y_re[k] * cs;
    im_out[k] = -scale * y_im[k] * sn;
  }
  if (half_only) {
    for (std::size_t k = n / 2 + 1; k < n; ++k) {
      re_out[k] = re_out[n - k];
      im_out[k] = im_out[n - k];
    }
  }
}

inline double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

inline void check_fresh(std::span<const double> got, std::span<const double> want, const char* what) {
  const double scale = std::max(1.0, max_abs(want));
  for (std::size_t i = 0; i < got.size(); ++i) {
    if (std::abs(got[i] - want[i]) > kStaleTolerance * scale) {
      throw StaleSpectrumError(std::string(what) + " does not match the transform of the signal (index " +
                               std::to_string(i) + ")");
    }
  }
}

}  // namespace detail

// Frequency-domain relevance from time-domain relevance. Conserves the total:
// sum_k R_k == sum_n c_n x_n (== sum_n R_n up to the division epsilon).
inline RelevanceMap dft_lrp(const DftLrpInput& in, bool half_only = true) {
  const std::size_t n = in.signal.size();
  if (n < 2) throw InvalidInput("signal needs at least 2 samples");
  const std::vector<double> c = detail::contribution_factors(in.relevance, in.signal, in.epsilon);
  spectral::Spectrum y;
  if (in.spectrum) {
    if (in.spectrum->re.size() != n || in.spectrum->im.size() != n) throw DimensionError("spectrum length mismatch");
    y = *in.spectrum;
    if (!in.spectrum_verified) {
      const spectral::Spectrum fresh = spectral::dft(in.signal);
      detail::check_fresh(y.re, fresh.re, "spectrum");
      detail::check_fresh(y.im, fresh.im, "spectrum");
    }
  } else {
    y = spectral::dft(in.signal);
  }

  RelevanceMap map;
  map.domain = Domain::frequency;
  map.rows = 1;
  map.cols = n;
  map.method = "dft_lrp";
  map.re_part.assign(n, 0.0);
  map.im_part.assign(n, 0.0);
  const detail::TrigTable trig(n);
  detail::transport_block(y.re, y.im, c, trig, half_only, map.re_part, map.im_part);
  map.values.resize(n);
  for (std::size_t k = 0; k < n; ++k) map.values[k] = map.re_part[k] + map.im_part[k];

  double time_total = 0.0;
  for (double r : in.relevance) time_total += r;
  map.conservation.time_total = time_total;
  map.conservation.output_relevance = time_total;
  map.conservation.input_total = map.total();
  map.conservation.deficit = time_total - map.conservation.input_total;
  map.params["epsilon"] = in.epsilon ? *in.epsilon : kDefaultDivisionEpsilon * detail::mean_abs(in.signal);
  return map;
}

// Time-frequency relevance. Conserves the total for any admissible window;
// with a rectangular window and hop == width also per frame.
inline RelevanceMap stdft_lrp(const StdftLrpInput& in, bool half_only = true) {
  const std::size_t n = in.signal.size();
  if (n < 2) throw InvalidInput("signal needs at least 2 samples");
  const spectral::WindowWeights ww = spectral::window_weights(in.window, n);
  const std::vector<double> c = detail::contribution_factors(in.relevance, in.signal, in.epsilon);
  spectral::Spectrogram v;
  if (in.spectrogram) {
    v = *in.spectrogram;
    if (v.original_length != n || v.bins != in.window.bins(n) || v.frames != ww.frames) {
      throw DimensionError("spectrogram shape does not match signal and window");
    }
    if (!in.spectrogram_verified) {
      const spectral::Spectrogram fresh = spectral::stdft(in.signal, in.window);
      detail::check_fresh(v.re, fresh.re, "spectrogram");
      detail::check_fresh(v.im, fresh.im, "spectrogram");
    }
  } else {
    v = spectral::stdft(in.signal, in.window);
  }

  const std::size_t h = in.window.bins(n);
  RelevanceMap map;
  map.domain = Domain::time_frequency;
  map.rows = ww.frames;
  map.cols = h;
  map.method = "stdft_lrp";
  map.re_part.assign(map.rows * h, 0.0);
  map.im_part.assign(map.rows * h, 0.0);
  const detail::TrigTable trig(h);
  std::vector<double> local(h);
  for (std::size_t m = 0; m < ww.frames; ++m) {
    for (std::size_t j = 0; j < h; ++j) {
      const std::ptrdiff_t t = in.window.frame_time(m, j);
      local[j] = (t < 0 || t >= static_cast<std::ptrdiff_t>(n))
                     ? 0.0
                     : c[static_cast<std::size_t>(t)] / ww.totals[static_cast<std::size_t>(t)];
    }
    detail::transport_block(std::span<const double>(v.re).subspan(m * h, h),
                            std::span<const double>(v.im).subspan(m * h, h), local, trig, half_only,
                            std::span<double>(map.re_part).subspan(m * h, h),
                            std::span<double>(map.im_part).subspan(m * h, h));
  }
  map.values.resize(map.rows * h);
  for (std::size_t i = 0; i < map.values.size(); ++i) map.values[i] = map.re_part[i] + map.im_part[i];

  double time_total = 0.0;
  for (double r : in.relevance) time_total += r;
  map.conservation.time_total = time_total;
  map.conservation.output_relevance = time_total;
  map.conservation.input_total = map.total();
  map.conservation.deficit = time_total - map.conservation.input_total;
  map.params["window"] = net::window_to_json(in.window);
  map.params["epsilon"] = in.epsilon ? *in.epsilon : kDefaultDivisionEpsilon * detail::mean_abs(in.signal);
  return map;
}

// Number of bins kept by a fold of a length-k axis: 0..floor(k/2).
inline std::size_t folded_bins(std::size_t k) { return k / 2 + 1; }

namespace detail {

inline std::vector<double> fold_rows(std::span<const double> v, std::size_t rows, std::size_t cols) {
  const std::size_t half = folded_bins(cols);
  std::vector<double> out(rows * half, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t k = 0; k < cols; ++k) {
      const std::size_t mirror = (cols - k) % cols;
      const std::size_t target = std::min(k, mirror);
      out[r * half + target] += v[r * cols + k];
    }
  }
  return out;
}

}  // namespace detail

// Merges each bin k with its mirror (K - k) mod K without checking symmetry.
// Gradient maps (Sensitivity) are not symmetric; this is their folding path.
inline RelevanceMap merge_mirrored(const RelevanceMap& map) {
  if (map.domain == Domain::time) throw UnsupportedDomain("time-domain maps have no mirrored bins");
  if (map.values.size() != map.rows * map.cols || map.values.empty()) throw DimensionError("map storage mismatch");
  RelevanceMap out = map;
  out.values = detail::fold_rows(map.values, map.rows, map.cols);
  if (!map.re_part.empty()) out.re_part = detail::fold_rows(map.re_part, map.rows, map.cols);
  if (!map.im_part.empty()) out.im_part = detail::fold_rows(map.im_part, map.rows, map.cols);
  out.cols = folded_bins(map.cols);
  out.params["folded"] = true;
  return out;
}

// Half-spectrum map for a real signal. Throws SymmetryError if some bin
// differs from its mirror by more than the tolerance (relative to max |R|).
inline RelevanceMap fold_symmetric(const RelevanceMap& map, double tolerance = kSymmetryTolerance) {
  if (map.domain == Domain::time) throw UnsupportedDomain("time-domain maps have no mirrored bins");
  if (map.values.size() != map.rows * map.cols || map.values.empty()) throw DimensionError("map storage mismatch");
  const double scale = std::max(1.0, detail::max_abs(map.values));
  for (std::size_t r = 0; r < map.rows; ++r) {
    for (std::size_t k = 1; k < map.cols; ++k) {
      const double a = map.values[r * map.cols + k];
      const double b = map.values[r * map.cols + (map.cols - k)];
      if (std::abs(a - b) > tolerance * scale) {
        throw SymmetryError("relevance at bin " + std::to_string(k) + " (row " + std::to_string(r) +
                            ") differs from its mirror by " + std::to_string(std::abs(a - b)));
      }
    }
  }
  return merge_mirrored(map);
}

}  // namespace vilrp::inspection
