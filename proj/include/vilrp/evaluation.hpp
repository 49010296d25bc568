#pragma once

// Quantitative checks of attribution maps: positive-relevance localization,
// feature flipping (SDF / SCF) with AUC, and Shannon-entropy complexity, plus
// a benchmark driver that aggregates them over a labelled synthetic set.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "vilrp/attribution.hpp"
#include "vilrp/error.hpp"
#include "vilrp/inspection.hpp"
#include "vilrp/net.hpp"
#include "vilrp/spectral.hpp"
#include "vilrp/synth.hpp"

namespace vilrp::eval {

using attribution::Domain;
using attribution::Method;
using attribution::RelevanceMap;

// ---------------------------------------------------------------------------
// Localization

// Share of positive relevance that lands on the informative indices; 0 when
// the map has no positive relevance at all.
inline double localization(std::span<const double> values, std::span<const std::size_t> truth) {
  if (values.empty()) throw InvalidInput("relevance map is empty");
  double positive = 0.0, on_truth = 0.0;
  for (double v : values) positive += v > 0.0 ? v : 0.0;
  for (std::size_t i : truth) {
    if (i >= values.size()) throw DimensionError("ground-truth index " + std::to_string(i) + " outside the map");
    on_truth += values[i] > 0.0 ? values[i] : 0.0;
  }
  return positive > 0.0 ? on_truth / positive : 0.0;
}

inline double localization(const RelevanceMap& map, std::span<const std::size_t> truth) {
  return localization(std::span<const double>(map.values), truth);
}

// ---------------------------------------------------------------------------
// Complexity

// Shannon entropy (nats) of |R_i| / sum |R_j|; zero for an all-zero map.
inline double complexity(std::span<const double> values) {
  double total = 0.0;
  for (double v : values) total += std::abs(v);
  if (total == 0.0) return 0.0;
  double h = 0.0;
  for (double v : values) {
    const double p = std::abs(v) / total;
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

inline double complexity(const RelevanceMap& map) { return complexity(std::span<const double>(map.values)); }

// ---------------------------------------------------------------------------
// Feature flipping

enum class FlipMode { sdf, scf };
enum class AxisScaling { linear, sqrt };

inline std::string to_string(FlipMode m) { return m == FlipMode::sdf ? "SDF" : "SCF"; }

struct FlipCurve {
  FlipMode mode = FlipMode::sdf;
  Domain domain = Domain::time;
  std::vector<double> fractions;      // strictly increasing, 0 ... 1
  std::vector<double> probabilities;  // true-class probability at each fraction
  double auc = 0.0;                   // sqrt-scaled axis
  double max_imaginary_residue = 0.0;
};

// Trapezoidal area over the (optionally square-root rescaled) fraction axis,
// renormalized to unit width.
inline double auc(std::span<const double> fractions, std::span<const double> probs, AxisScaling scaling) {
  if (fractions.size() != probs.size() || fractions.size() < 2) throw InvalidInput("flip curve needs >= 2 points");
  auto axis = [&](double f) { return scaling == AxisScaling::sqrt ? std::sqrt(f) : f; };
  const double width = axis(fractions.back()) - axis(fractions.front());
  if (!(width > 0.0)) throw InvalidInput("flip curve has an empty fraction range");
  double area = 0.0;
  for (std::size_t i = 1; i < fractions.size(); ++i) {
    area += 0.5 * (probs[i] + probs[i - 1]) * (axis(fractions[i]) - axis(fractions[i - 1]));
  }
  return area / width;
}

inline double auc(const FlipCurve& curve, AxisScaling scaling = AxisScaling::sqrt) {
  return auc(curve.fractions, curve.probabilities, scaling);
}

inline constexpr std::size_t kDefaultFlipPoints = 50;

// Feature counts 0 = c_0 < c_1 < ... = total, logarithmically dense near 0.
inline std::vector<std::size_t> flip_counts(std::size_t total, std::size_t points = kDefaultFlipPoints) {
  if (total == 0) throw InvalidInput("no features to flip");
  points = std::max<std::size_t>(points, 2);
  std::vector<std::size_t> counts{0};
  for (std::size_t i = 0; i + 1 < points; ++i) {
    const double e = points > 2 ? static_cast<double>(i) / static_cast<double>(points - 2) : 1.0;
    const auto c = static_cast<std::size_t>(std::llround(std::pow(static_cast<double>(total), e)));
    if (c > counts.back()) counts.push_back(std::min(c, total));
  }
  if (counts.back() != total) counts.push_back(total);
  return counts;
}

// Feature layout of a domain for flipping: time samples, half-spectrum bins
// 0..N/2, or per-frame half-spectrum bins.
struct FlipSpace {
  Domain domain = Domain::time;
  std::size_t length = 0;
  std::optional<spectral::WindowSpec> window;

  std::size_t bins() const { return domain == Domain::time_frequency ? window->bins(length) : length; }
  std::size_t rows() const { return domain == Domain::time_frequency ? window->num_frames(length) : 1; }
  std::size_t features() const {
    if (domain == Domain::time) return length;
    return rows() * inspection::folded_bins(bins());
  }
};

// Per-feature scores in the FlipSpace layout (mirrored bins merged).
inline std::vector<double> feature_scores(const RelevanceMap& map) {
  if (map.domain == Domain::time) return map.values;
  return inspection::merge_mirrored(map).values;
}

// Descending relevance; ties by ascending index.
inline std::vector<std::size_t> order_by_relevance(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

inline std::vector<std::size_t> random_order(std::size_t count, std::uint64_t seed) {
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

namespace detail {

// Inverse of a (possibly masked) full spectrum block; returns the real part
// and tracks the largest imaginary part left over.
inline void inverse_block(std::span<const double> re, std::span<const double> im, std::span<double> out,
                          std::vector<double>& scratch, double& residue) {
  scratch.resize(re.size());
  spectral::detail::fourier(re, im, out, scratch, true);
  for (double v : scratch) residue = std::max(residue, std::abs(v));
}

inline void apply_mask(std::span<double> re, std::span<double> im, std::span<const char> keep_half) {
  const std::size_t n = re.size();
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t f = std::min(k, (n - k) % n);
    if (!keep_half[f]) {
      re[k] = 0.0;
      im[k] = 0.0;
    }
  }
}

}  // namespace detail

// Signal after flipping: `keep[i]` says whether feature i retains its original
// value (otherwise it is set to zero). Fourier features zero the coefficient
// and its mirror jointly, then reconstruct by inverse DFT / WOLA.
inline std::vector<double> flipped_signal(const FlipSpace& space, std::span<const double> x,
                                          std::span<const char> keep, double* residue = nullptr) {
  if (keep.size() != space.features()) throw DimensionError("keep mask does not match the feature count");
  double res = 0.0;
  std::vector<double> out(x.size(), 0.0), scratch;
  if (space.domain == Domain::time) {
    for (std::size_t t = 0; t < x.size(); ++t) out[t] = keep[t] ? x[t] : 0.0;
  } else if (space.domain == Domain::frequency) {
    spectral::Spectrum y = spectral::dft(x);
    detail::apply_mask(y.re, y.im, keep);
    detail::inverse_block(y.re, y.im, out, scratch, res);
  } else {
    spectral::Spectrogram v = spectral::stdft(x, *space.window);
    const std::size_t h = v.bins, half = inspection::folded_bins(h);
    for (std::size_t m = 0; m < v.frames; ++m) {
      detail::apply_mask(std::span<double>(v.re).subspan(m * h, h), std::span<double>(v.im).subspan(m * h, h),
                         keep.subspan(m * half, half));
    }
    // Imaginary residue per frame, then the WOLA inverse of the real parts.
    std::vector<double> frame(h);
    for (std::size_t m = 0; m < v.frames; ++m) {
      detail::inverse_block(std::span<const double>(v.re).subspan(m * h, h),
                            std::span<const double>(v.im).subspan(m * h, h), frame, scratch, res);
    }
    out = spectral::istdft_wola_samples(v);
  }
  if (residue) *residue = std::max(*residue, res);
  return out;
}

// True-class probability as features are removed (SDF) or added to an empty
// signal (SCF) in the given order, evaluated at the grid counts.
inline FlipCurve feature_flip(const net::Network& net, std::span<const double> x, std::size_t target,
                              const FlipSpace& space, std::span<const std::size_t> order, FlipMode mode,
                              std::size_t points = kDefaultFlipPoints) {
  net::check_class(net, target);
  const std::size_t total = space.features();
  if (order.size() != total) throw DimensionError("feature order does not cover every feature");
  if (x.size() != space.length) throw DimensionError("signal length does not match the flip space");
  if (space.domain == Domain::time_frequency && !space.window) throw ConfigError("time-frequency flipping needs a window");
  const std::vector<std::size_t> counts = flip_counts(total, points);

  FlipCurve curve;
  curve.mode = mode;
  curve.domain = space.domain;
  net::Matrix batch(static_cast<Eigen::Index>(x.size()), static_cast<Eigen::Index>(counts.size()));
  std::vector<char> keep(total, mode == FlipMode::sdf ? 1 : 0);
  std::size_t done = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    for (; done < counts[i]; ++done) keep[order[done]] = mode == FlipMode::sdf ? 0 : 1;
    const std::vector<double> xs = flipped_signal(space, x, keep, &curve.max_imaginary_residue);
    batch.col(static_cast<Eigen::Index>(i)) = Eigen::Map<const net::Vector>(xs.data(), static_cast<Eigen::Index>(xs.size()));
    curve.fractions.push_back(static_cast<double>(counts[i]) / static_cast<double>(total));
  }
  const net::Matrix probs = net::softmax_columns(net::logits_batch(net, batch));
  for (std::size_t i = 0; i < counts.size(); ++i) {
    curve.probabilities.push_back(probs(static_cast<Eigen::Index>(target), static_cast<Eigen::Index>(i)));
  }
  curve.auc = auc(curve, AxisScaling::sqrt);
  return curve;
}

inline FlipCurve feature_flip(const net::Network& net, std::span<const double> x, std::size_t target,
                              const RelevanceMap& map, FlipMode mode,
                              const std::optional<spectral::WindowSpec>& window = std::nullopt,
                              std::size_t points = kDefaultFlipPoints) {
  FlipSpace space{map.domain, x.size(), window};
  if (map.domain == Domain::time_frequency && !window) {
    if (!map.params.contains("window")) throw ConfigError("time-frequency map carries no window");
    space.window = net::window_from_json(map.params.at("window"), "map.window");
  }
  const std::vector<double> scores = feature_scores(map);
  if (scores.size() != space.features()) throw DimensionError("map does not match the signal's feature layout");
  const auto order = order_by_relevance(scores);
  return feature_flip(net, x, target, space, order, mode, points);
}

// ---------------------------------------------------------------------------
// Benchmark

struct Stat {
  double mean = 0.0;
  double stderr_ = 0.0;
  std::size_t count = 0;
};

inline Stat summarize(std::span<const double> v) {
  Stat s;
  s.count = v.size();
  if (v.empty()) return s;
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.stderr_ = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
  }
  return s;
}

// A named evaluation domain: time, frequency, or time-frequency with a window.
struct DomainSpec {
  std::string name;
  Domain domain = Domain::frequency;
  std::optional<spectral::WindowSpec> window;
};

// Rectangular, non-overlapping STDFT of width `width`.
inline DomainSpec stdft_domain(std::size_t width, std::string name,
                               spectral::FrameBasis basis = spectral::FrameBasis::local) {
  return DomainSpec{std::move(name), Domain::time_frequency,
                    spectral::WindowSpec{spectral::WindowShape::rectangular, width, width, spectral::Boundary::anchored,
                                         basis}};
}

struct BenchmarkConfig {
  std::vector<Method> methods{Method::lrp, Method::sensitivity, Method::gxi, Method::ig};
  std::vector<DomainSpec> localization_domains;  // frequency / time-frequency entries
  std::vector<DomainSpec> flip_domains;          // time / frequency / time-frequency entries
  std::size_t max_samples = 1000;
  std::size_t flip_samples = 200;
  std::size_t flip_points = kDefaultFlipPoints;
  std::size_t ig_steps = attribution::kDefaultIgSteps;
  std::uint64_t seed = 0;  // random flip orders
  unsigned jobs = 1;
  bool flip_random_baseline = true;

  void validate() const {
    if (methods.empty()) throw ConfigError("benchmark needs at least one method");
    if (ig_steps < attribution::kMinIgSteps) throw ConfigError("IG steps below minimum");
  }
};

// Localization in frequency and in rectangular full-axis STDFTs of widths
// N/10, N/4, N/2 (every frame keeps the N-point frequency grid, so the
// informative bins are the same as in the DFT). Flipping and complexity in
// time, frequency, and a frame-local rectangular STDFT of width N/10.
inline BenchmarkConfig default_benchmark(std::size_t length) {
  using spectral::FrameBasis;
  BenchmarkConfig cfg;
  const std::size_t tenth = std::max<std::size_t>(1, (length + 5) / 10);
  cfg.localization_domains.push_back(DomainSpec{"frequency", Domain::frequency, std::nullopt});
  cfg.localization_domains.push_back(stdft_domain(tenth, "stdft_N/10", FrameBasis::full));
  cfg.localization_domains.push_back(stdft_domain(std::max<std::size_t>(1, length / 4), "stdft_N/4", FrameBasis::full));
  cfg.localization_domains.push_back(stdft_domain(std::max<std::size_t>(1, length / 2), "stdft_N/2", FrameBasis::full));
  cfg.flip_domains.push_back(DomainSpec{"time", Domain::time, std::nullopt});
  cfg.flip_domains.push_back(DomainSpec{"frequency", Domain::frequency, std::nullopt});
  cfg.flip_domains.push_back(stdft_domain(tenth, "time_frequency"));
  return cfg;
}

// A domain name can appear in both sweeps (e.g. "frequency"); the kind tells them apart.
enum class EntryKind { localization, flipping };

struct EntryStats {
  std::string method;
  std::string domain;
  EntryKind kind = EntryKind::localization;
  Stat localization;          // all samples
  Stat localization_nonempty; // samples with a non-empty frequency subset
  Stat complexity;
  Stat sdf_auc, scf_auc;
  Stat random_sdf_auc, random_scf_auc;
  std::vector<double> flip_fractions;
  std::vector<double> mean_sdf, mean_scf, mean_random_sdf, mean_random_scf;
  double max_imaginary_residue = 0.0;
};

struct EvalReport {
  std::size_t localization_samples = 0;
  std::size_t flip_samples = 0;
  std::vector<EntryStats> entries;

  const EntryStats* find(const std::string& method, const std::string& domain,
                         EntryKind kind = EntryKind::localization) const {
    for (const auto& e : entries) {
      if (e.method == method && e.domain == domain && e.kind == kind) return &e;
    }
    return nullptr;
  }
};

// Relevance map of `method` for x in one domain. LRP is computed in time and
// transported in closed form; gradient methods are read through the virtual
// inverse-Fourier layer.
inline RelevanceMap domain_map(const net::Network& net, std::span<const double> x, std::size_t target, Method method,
                               const DomainSpec& domain, const attribution::LiftedGradients* grads = nullptr,
                               const RelevanceMap* time_lrp = nullptr) {
  if (method == Method::lrp) {
    const RelevanceMap time_map =
        time_lrp ? *time_lrp : attribution::lrp(net, x, attribution::default_rules(net), target);
    if (domain.domain == Domain::time) return time_map;
    if (domain.domain == Domain::frequency) {
      return inspection::dft_lrp({time_map.values, {x.begin(), x.end()}, std::nullopt, false, std::nullopt});
    }
    return inspection::stdft_lrp({time_map.values, {x.begin(), x.end()}, *domain.window, std::nullopt, false, std::nullopt});
  }
  attribution::LiftedGradients local;
  if (!grads) {
    local = attribution::time_gradients(net, x, target,
                                        method == Method::ig ? std::optional<std::size_t>(attribution::kDefaultIgSteps)
                                                             : std::nullopt);
    grads = &local;
  }
  if (domain.domain == Domain::time) {
    const Eigen::Map<const net::Vector> xv(x.data(), static_cast<Eigen::Index>(x.size()));
    RelevanceMap m;
    m.method = attribution::to_string(method);
    m.cols = x.size();
    const net::Vector raw = method == Method::sensitivity ? grads->time_gradient
                            : method == Method::gxi       ? net::Vector(xv.cwiseProduct(grads->time_gradient))
                                                          : net::Vector(xv.cwiseProduct(grads->time_mean_gradient));
    m.values.assign(raw.data(), raw.data() + raw.size());
    return m;
  }
  const InverseFourier layer{x.size(), domain.window};
  return attribution::lifted_map(layer, x, *grads, method);
}

namespace detail {

struct SampleResult {
  // keyed by entry index (method x localization domain / flip domain)
  std::vector<double> localization;
  std::vector<double> complexity;
  std::vector<FlipCurve> sdf, scf, random_sdf, random_scf;
};

inline void accumulate_curve(std::vector<double>& acc, const std::vector<double>& probs) {
  if (acc.empty()) acc.assign(probs.size(), 0.0);
  for (std::size_t i = 0; i < probs.size(); ++i) acc[i] += probs[i];
}

}  // namespace detail

inline EvalReport run_benchmark(const net::Network& net, const synth::Dataset& data, const BenchmarkConfig& cfg) {
  cfg.validate();
  net::validate(net);
  if (data.config.length != net.input_length) throw DimensionError("dataset length does not match the model");
  const std::size_t total = std::min(cfg.max_samples, data.data.size());
  if (total == 0) throw InvalidInput("benchmark dataset is empty");

  // Entry layout: for each method, localization domains then flip domains
  // (flip entries also carry complexity).
  struct EntryKey {
    Method method;
    const DomainSpec* domain;
    bool flip;
  };
  std::vector<EntryKey> keys;
  for (Method m : cfg.methods) {
    for (const auto& d : cfg.localization_domains) keys.push_back({m, &d, false});
    for (const auto& d : cfg.flip_domains) keys.push_back({m, &d, true});
  }

  std::vector<std::size_t> flip_indices;
  for (std::size_t i = 0; i < total && flip_indices.size() < cfg.flip_samples; ++i) {
    // The zero baseline is itself an empty-subset signal, so flipping carries
    // no information for that class.
    if (data.data.labels[i] != 0) flip_indices.push_back(i);
  }
  std::vector<char> flips(total, 0);
  for (std::size_t i : flip_indices) flips[i] = 1;

  const bool any_ig = std::find(cfg.methods.begin(), cfg.methods.end(), Method::ig) != cfg.methods.end();
  std::vector<detail::SampleResult> results(total);

  auto process = [&](std::size_t i) {
    const std::span<const double> x(data.data.inputs.col(static_cast<Eigen::Index>(i)).data(), net.input_length);
    const auto target = static_cast<std::size_t>(data.data.labels[i]);
    const auto subset = synth::decode_label(data.config, data.data.labels[i]);
    const auto grads = attribution::time_gradients(net, x, target,
                                                   any_ig ? std::optional<std::size_t>(cfg.ig_steps) : std::nullopt);
    std::optional<RelevanceMap> time_lrp;
    if (std::find(cfg.methods.begin(), cfg.methods.end(), Method::lrp) != cfg.methods.end()) {
      time_lrp = attribution::lrp(net, x, attribution::default_rules(net), target);
    }
    detail::SampleResult& res = results[i];
    const std::size_t ne = keys.size();
    res.localization.assign(ne, 0.0);
    res.complexity.assign(ne, 0.0);
    res.sdf.resize(ne);
    res.scf.resize(ne);
    res.random_sdf.resize(ne);
    res.random_scf.resize(ne);
    for (std::size_t e = 0; e < ne; ++e) {
      const EntryKey& key = keys[e];
      if (key.flip && !flips[i]) continue;
      const RelevanceMap map =
          domain_map(net, x, target, key.method, *key.domain, &grads, time_lrp ? &*time_lrp : nullptr);
      if (!key.flip) {
        const auto truth = synth::ground_truth_bins(subset, key.domain->domain, net.input_length, key.domain->window);
        res.localization[e] = localization(map, truth);
        continue;
      }
      res.complexity[e] = complexity(map);
      const FlipSpace space{key.domain->domain, net.input_length, key.domain->window};
      const auto scores = feature_scores(map);
      const auto order = order_by_relevance(scores);
      res.sdf[e] = feature_flip(net, x, target, space, order, FlipMode::sdf, cfg.flip_points);
      res.scf[e] = feature_flip(net, x, target, space, order, FlipMode::scf, cfg.flip_points);
      if (cfg.flip_random_baseline) {
        const auto rnd = random_order(space.features(), synth::sample_seed(cfg.seed, i * 131 + e));
        res.random_sdf[e] = feature_flip(net, x, target, space, rnd, FlipMode::sdf, cfg.flip_points);
        res.random_scf[e] = feature_flip(net, x, target, space, rnd, FlipMode::scf, cfg.flip_points);
      }
    }
  };

  const unsigned jobs = std::max(1u, cfg.jobs);
  if (jobs == 1) {
    for (std::size_t i = 0; i < total; ++i) process(i);
  } else {
    std::vector<std::thread> pool;
    std::mutex error_mutex;
    std::exception_ptr error;
    for (unsigned j = 0; j < jobs; ++j) {
      pool.emplace_back([&, j] {
        try {
          for (std::size_t i = j; i < total; i += jobs) process(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
  }

  // Aggregation in sample order keeps the report independent of `jobs`.
  EvalReport report;
  report.localization_samples = total;
  report.flip_samples = flip_indices.size();
  for (std::size_t e = 0; e < keys.size(); ++e) {
    const EntryKey& key = keys[e];
    EntryStats st;
    st.method = attribution::to_string(key.method);
    st.domain = key.domain->name;
    st.kind = key.flip ? EntryKind::flipping : EntryKind::localization;
    if (!key.flip) {
      std::vector<double> all, nonempty;
      for (std::size_t i = 0; i < total; ++i) {
        all.push_back(results[i].localization[e]);
        if (data.data.labels[i] != 0) nonempty.push_back(results[i].localization[e]);
      }
      st.localization = summarize(all);
      st.localization_nonempty = summarize(nonempty);
    } else {
      std::vector<double> cx, sdf, scf, rsdf, rscf;
      for (std::size_t i : flip_indices) {
        const auto& r = results[i];
        cx.push_back(r.complexity[e]);
        sdf.push_back(r.sdf[e].auc);
        scf.push_back(r.scf[e].auc);
        detail::accumulate_curve(st.mean_sdf, r.sdf[e].probabilities);
        detail::accumulate_curve(st.mean_scf, r.scf[e].probabilities);
        st.flip_fractions = r.sdf[e].fractions;
        st.max_imaginary_residue = std::max({st.max_imaginary_residue, r.sdf[e].max_imaginary_residue,
                                             r.scf[e].max_imaginary_residue});
        if (cfg.flip_random_baseline) {
          rsdf.push_back(r.random_sdf[e].auc);
          rscf.push_back(r.random_scf[e].auc);
          detail::accumulate_curve(st.mean_random_sdf, r.random_sdf[e].probabilities);
          detail::accumulate_curve(st.mean_random_scf, r.random_scf[e].probabilities);
        }
      }
      const double denom = static_cast<double>(std::max<std::size_t>(1, flip_indices.size()));
      for (auto* curve : {&st.mean_sdf, &st.mean_scf, &st.mean_random_sdf, &st.mean_random_scf}) {
        for (double& v : *curve) v /= denom;
      }
      st.complexity = summarize(cx);
      st.sdf_auc = summarize(sdf);
      st.scf_auc = summarize(scf);
      st.random_sdf_auc = summarize(rsdf);
      st.random_scf_auc = summarize(rscf);
    }
    report.entries.push_back(std::move(st));
  }
  return report;
}

// ---------------------------------------------------------------------------
// Report serialization

inline nlohmann::json to_json(const Stat& s) { return {{"mean", s.mean}, {"stderr", s.stderr_}, {"count", s.count}}; }

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : r.entries) {
    nlohmann::json j{{"method", e.method},
                     {"domain", e.domain},
                     {"kind", e.kind == EntryKind::flipping ? "flipping" : "localization"}};
    if (e.localization.count) {
      j["localization"] = to_json(e.localization);
      j["localization_nonempty"] = to_json(e.localization_nonempty);
    }
    if (e.sdf_auc.count) {
      j["complexity"] = to_json(e.complexity);
      j["sdf_auc"] = to_json(e.sdf_auc);
      j["scf_auc"] = to_json(e.scf_auc);
      j["random_sdf_auc"] = to_json(e.random_sdf_auc);
      j["random_scf_auc"] = to_json(e.random_scf_auc);
      j["flip_fractions"] = e.flip_fractions;
      j["mean_sdf"] = e.mean_sdf;
      j["mean_scf"] = e.mean_scf;
      j["mean_random_sdf"] = e.mean_random_sdf;
      j["mean_random_scf"] = e.mean_random_scf;
      j["max_imaginary_residue"] = e.max_imaginary_residue;
    }
    entries.push_back(std::move(j));
  }
  return {{"localization_samples", r.localization_samples}, {"flip_samples", r.flip_samples}, {"entries", entries}};
}

// Localization table: one row per domain, one column per method.
inline std::string localization_csv(const EvalReport& r) {
  std::vector<std::string> methods, domains;
  for (const auto& e : r.entries) {
    if (!e.localization.count) continue;
    if (std::find(methods.begin(), methods.end(), e.method) == methods.end()) methods.push_back(e.method);
    if (std::find(domains.begin(), domains.end(), e.domain) == domains.end()) domains.push_back(e.domain);
  }
  std::ostringstream out;
  out << "domain";
  for (const auto& m : methods) out << ',' << m << ',' << m << "_stderr";
  out << '\n';
  for (const auto& d : domains) {
    out << d;
    for (const auto& m : methods) {
      const EntryStats* e = r.find(m, d);
      if (e) {
        out << ',' << e->localization.mean << ',' << e->localization.stderr_;
      } else {
        out << ",,";
      }
    }
    out << '\n';
  }
  return out.str();
}

// Flipping / complexity table: method, domain, SCF, SDF, complexity.
inline std::string flipping_csv(const EvalReport& r) {
  std::ostringstream out;
  out << "method,domain,scf_auc,sdf_auc,complexity,random_scf_auc,random_sdf_auc\n";
  for (const auto& e : r.entries) {
    if (!e.sdf_auc.count) continue;
    out << e.method << ',' << e.domain << ',' << e.scf_auc.mean << ',' << e.sdf_auc.mean << ','
        << e.complexity.mean << ',' << e.random_scf_auc.mean << ',' << e.random_sdf_auc.mean << '\n';
  }
  return out.str();
}

inline std::string curve_csv(const FlipCurve& c) {
  std::ostringstream out;
  out.precision(17);
  out << "fraction,probability\n";
  for (std::size_t i = 0; i < c.fractions.size(); ++i) out << c.fractions[i] << ',' << c.probabilities[i] << '\n';
  return out.str();
}

}  // namespace vilrp::eval
