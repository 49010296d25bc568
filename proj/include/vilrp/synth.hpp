#pragma once

// Ground-truth benchmark: superposed sinusoids whose label encodes which
// subset of a fixed frequency set is present.

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <thread>
#include <vector>

#include "vilrp/attribution.hpp"
#include "vilrp/error.hpp"
#include "vilrp/net.hpp"
#include "vilrp/spectral.hpp"

namespace vilrp::synth {

enum class AmplitudeRule { fixed, uniform };  // a_j = 1, or a_j ~ U[0.5, 1.5] per sample

struct SynthConfig {
  std::size_t length = 2560;
  std::vector<std::size_t> k_star{5, 16, 32, 53};
  double noise_sigma = 0.01;
  AmplitudeRule amplitude = AmplitudeRule::fixed;
  std::size_t num_samples = 1000;
  std::uint64_t seed = 0;
  std::optional<std::size_t> subset_size;  // draw only labels with this many frequencies

  std::size_t num_classes() const { return std::size_t{1} << k_star.size(); }

  // Labels the generator draws from, in increasing order.
  std::vector<int> allowed_labels() const {
    std::vector<int> out;
    for (std::size_t l = 0; l < num_classes(); ++l) {
      if (!subset_size || static_cast<std::size_t>(std::popcount(l)) == *subset_size) out.push_back(static_cast<int>(l));
    }
    return out;
  }

  // Frequencies must lie strictly between 0 and 60 * N / 2560.
  double max_frequency() const { return 60.0 * static_cast<double>(length) / 2560.0; }

  void validate() const {
    if (length < 2) throw ConfigError("signal length must be at least 2");
    if (num_samples == 0) throw ConfigError("num_samples must be positive");
    if (k_star.empty() || k_star.size() > 16) throw ConfigError("k_star must hold between 1 and 16 frequencies");
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) throw ConfigError("noise sigma must be >= 0");
    std::set<std::size_t> seen;
    for (std::size_t k : k_star) {
      if (k == 0 || static_cast<double>(k) >= max_frequency()) {
        throw ConfigError("frequency " + std::to_string(k) + " outside (0, " + std::to_string(max_frequency()) + ")");
      }
      if (!seen.insert(k).second) throw ConfigError("duplicate frequency in k_star");
    }
    if (subset_size && *subset_size > k_star.size()) {
      throw ConfigError("subset size " + std::to_string(*subset_size) + " exceeds |k_star| = " +
                        std::to_string(k_star.size()));
    }
  }
};

inline SynthConfig baseline_preset() {
  return SynthConfig{2560, {5, 16, 32, 53}, 0.01, AmplitudeRule::fixed, 1'000'000, 0};
}

inline SynthConfig noisy_preset() {
  return SynthConfig{2560, {5, 16, 32, 53}, 0.8, AmplitudeRule::fixed, 1'000'000, 0};
}

// N = 512 with the frequency set scaled by the same ratio.
inline SynthConfig desk_preset(double sigma = 0.01) {
  return SynthConfig{512, {1, 3, 6, 11}, sigma, AmplitudeRule::fixed, 100'000, 0};
}

inline SynthConfig preset(std::string_view name) {
  if (name == "baseline") return baseline_preset();
  if (name == "noisy") return noisy_preset();
  if (name == "desk") return desk_preset();
  if (name == "desk-noisy") return desk_preset(0.8);
  throw ConfigError("unknown preset '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// Labels: bit j of the label is set iff k_star[j] is present.

inline int encode_label(const SynthConfig& cfg, const std::vector<std::size_t>& subset) {
  int label = 0;
  for (std::size_t k : subset) {
    const auto it = std::find(cfg.k_star.begin(), cfg.k_star.end(), k);
    if (it == cfg.k_star.end()) throw ConfigError("frequency " + std::to_string(k) + " is not in k_star");
    label |= 1 << static_cast<int>(it - cfg.k_star.begin());
  }
  return label;
}

inline std::vector<std::size_t> decode_label(const SynthConfig& cfg, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= cfg.num_classes()) {
    throw ConfigError("label " + std::to_string(label) + " outside [0, " + std::to_string(cfg.num_classes()) + ")");
  }
  std::vector<std::size_t> subset;
  for (std::size_t j = 0; j < cfg.k_star.size(); ++j) {
    if (label & (1 << j)) subset.push_back(cfg.k_star[j]);
  }
  return subset;
}

// ---------------------------------------------------------------------------
// Generation

struct Dataset {
  SynthConfig config;
  net::Dataset data;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace detail

// Deterministic per-sample seed, independent of generation order.
inline std::uint64_t sample_seed(std::uint64_t seed, std::uint64_t index) {
  return detail::splitmix64(detail::splitmix64(seed) ^ (index * 0xd1b54a32d192ed03ULL + 1));
}

// x_n = sum_{j in subset} a_j sin(2 pi k_j n / N + phi_j) + sigma * noise_n
inline void synthesize(const SynthConfig& cfg, int label, std::uint64_t seed, std::span<double> out) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> amp(0.5, 1.5);
  std::normal_distribution<double> noise(0.0, 1.0);
  const std::size_t n = cfg.length;
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t k : decode_label(cfg, label)) {
    const double a = cfg.amplitude == AmplitudeRule::uniform ? amp(rng) : 1.0;
    const double phi = phase(rng);
    for (std::size_t t = 0; t < n; ++t) {
      const double theta = 2.0 * std::numbers::pi * static_cast<double>((k * t) % n) / static_cast<double>(n);
      out[t] += a * std::sin(theta + phi);
    }
  }
  if (cfg.noise_sigma > 0.0) {
    for (std::size_t t = 0; t < n; ++t) out[t] += cfg.noise_sigma * noise(rng);
  }
}

// Labels cycle through the allowed classes (balanced to within one sample) and are
// then shuffled; signals use per-sample seeds, so `jobs` does not change output.
inline Dataset generate(const SynthConfig& cfg, unsigned jobs = 1) {
  cfg.validate();
  Dataset ds{cfg, {}};
  const std::size_t s = cfg.num_samples;
  ds.data.labels.resize(s);
  const std::vector<int> allowed = cfg.allowed_labels();
  for (std::size_t i = 0; i < s; ++i) ds.data.labels[i] = allowed[i % allowed.size()];
  std::mt19937_64 order_rng(detail::splitmix64(cfg.seed ^ 0x5851f42d4c957f2dULL));
  std::shuffle(ds.data.labels.begin(), ds.data.labels.end(), order_rng);
  ds.data.inputs.resize(static_cast<Eigen::Index>(cfg.length), static_cast<Eigen::Index>(s));

  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      synthesize(cfg, ds.data.labels[i], sample_seed(cfg.seed, i),
                 std::span<double>(ds.data.inputs.col(static_cast<Eigen::Index>(i)).data(), cfg.length));
    }
  };
  jobs = std::max(1u, jobs);
  if (jobs == 1 || s < 2 * jobs) {
    work(0, s);
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (s + jobs - 1) / jobs;
    for (unsigned j = 0; j < jobs; ++j) {
      const std::size_t b = j * chunk, e = std::min(s, b + chunk);
      if (b < e) pool.emplace_back(work, b, e);
    }
    for (auto& t : pool) t.join();
  }
  return ds;
}

// First `head` samples and the rest, as two datasets.
inline std::pair<net::Dataset, net::Dataset> split(const net::Dataset& data, std::size_t head) {
  head = std::min(head, data.size());
  net::Dataset a, b;
  a.inputs = data.inputs.leftCols(static_cast<Eigen::Index>(head));
  a.labels.assign(data.labels.begin(), data.labels.begin() + static_cast<std::ptrdiff_t>(head));
  b.inputs = data.inputs.rightCols(static_cast<Eigen::Index>(data.size() - head));
  b.labels.assign(data.labels.begin() + static_cast<std::ptrdiff_t>(head), data.labels.end());
  return {std::move(a), std::move(b)};
}

// ---------------------------------------------------------------------------
// Ground truth

// Informative coefficient indices for a sample's subset. Frequency: {k, N-k}.
// Time-frequency: the rescaled bin round(k K / N) and its mirror in every
// frame (K bins per frame: the window width, or N for full-axis frames),
// returned as flat frame-major indices.
inline std::vector<std::size_t> ground_truth_bins(const std::vector<std::size_t>& subset, attribution::Domain domain,
                                                  std::size_t length,
                                                  const std::optional<spectral::WindowSpec>& window = std::nullopt) {
  std::set<std::size_t> bins;
  switch (domain) {
    case attribution::Domain::time:
      throw UnsupportedDomain("ground truth is undefined in the time domain");
    case attribution::Domain::frequency:
      for (std::size_t k : subset) {
        bins.insert(k % length);
        bins.insert((length - k % length) % length);
      }
      break;
    case attribution::Domain::time_frequency: {
      if (!window) throw ConfigError("time-frequency ground truth needs a window");
      const std::size_t h = window->bins(length);
      std::set<std::size_t> per_frame;
      for (std::size_t k : subset) {
        const auto b = static_cast<std::size_t>(
                           std::llround(static_cast<double>(k) * static_cast<double>(h) / static_cast<double>(length))) %
                       h;
        per_frame.insert(b);
        per_frame.insert((h - b) % h);
      }
      const std::size_t frames = window->num_frames(length);
      for (std::size_t m = 0; m < frames; ++m) {
        for (std::size_t b : per_frame) bins.insert(m * h + b);
      }
      break;
    }
  }
  return {bins.begin(), bins.end()};
}

// ---------------------------------------------------------------------------
// Dataset files: one header line, then "label,x_0,...,x_{N-1}" per sample.

inline constexpr int kDatasetFormatVersion = 1;

namespace detail {

inline void append_double(std::string& out, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

inline double parse_double(std::string_view tok, std::size_t line, std::size_t field) {
  while (!tok.empty() && (tok.front() == ' ' || tok.front() == '\t')) tok.remove_prefix(1);
  while (!tok.empty() && (tok.back() == ' ' || tok.back() == '\t' || tok.back() == '\r')) tok.remove_suffix(1);
  double v = 0.0;
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc() || res.ptr != tok.data() + tok.size() || !std::isfinite(v)) {
    throw ParseError("line " + std::to_string(line) + ", field " + std::to_string(field) + ": invalid number '" +
                     std::string(tok) + "'");
  }
  return v;
}

}  // namespace detail

inline std::string header_line(const SynthConfig& cfg) {
  std::string h = "# vilrp-dataset,format_version=" + std::to_string(kDatasetFormatVersion) +
                  ",N=" + std::to_string(cfg.length) + ",num_samples=" + std::to_string(cfg.num_samples) + ",k_star=";
  for (std::size_t j = 0; j < cfg.k_star.size(); ++j) h += (j ? ";" : "") + std::to_string(cfg.k_star[j]);
  h += ",sigma=";
  detail::append_double(h, cfg.noise_sigma);
  h += ",seed=" + std::to_string(cfg.seed);
  h += std::string(",amplitude=") + (cfg.amplitude == AmplitudeRule::uniform ? "uniform" : "fixed");
  if (cfg.subset_size) h += ",subset_size=" + std::to_string(*cfg.subset_size);
  return h;
}

inline void write_dataset(const Dataset& ds, std::ostream& out) {
  out << header_line(ds.config) << '\n';
  std::string row;
  for (std::size_t i = 0; i < ds.data.size(); ++i) {
    row = std::to_string(ds.data.labels[i]);
    for (Eigen::Index t = 0; t < ds.data.inputs.rows(); ++t) {
      row += ',';
      detail::append_double(row, ds.data.inputs(t, static_cast<Eigen::Index>(i)));
    }
    row += '\n';
    out << row;
  }
}

inline void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  write_dataset(ds, out);
  if (!out) throw Error("failed writing '" + path + "'");
}

inline SynthConfig parse_header(const std::string& line) {
  const std::string prefix = "# vilrp-dataset";
  if (line.rfind(prefix, 0) != 0) throw ParseError("line 1: missing '# vilrp-dataset' header");
  SynthConfig cfg;
  cfg.k_star.clear();
  std::optional<int> version;
  std::stringstream ss(line.substr(prefix.size()));
  std::string item;
  bool have_n = false, have_count = false;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ParseError("line 1: malformed header entry '" + item + "'");
    const std::string key = item.substr(0, eq), value = item.substr(eq + 1);
    try {
      if (key == "format_version") {
        version = std::stoi(value);
      } else if (key == "N") {
        cfg.length = std::stoul(value);
        have_n = true;
      } else if (key == "num_samples") {
        cfg.num_samples = std::stoul(value);
        have_count = true;
      } else if (key == "k_star") {
        std::stringstream ks(value);
        std::string k;
        while (std::getline(ks, k, ';')) cfg.k_star.push_back(std::stoul(k));
      } else if (key == "sigma") {
        cfg.noise_sigma = std::stod(value);
      } else if (key == "seed") {
        cfg.seed = std::stoull(value);
      } else if (key == "amplitude") {
        cfg.amplitude = value == "uniform" ? AmplitudeRule::uniform : AmplitudeRule::fixed;
      } else if (key == "subset_size") {
        cfg.subset_size = std::stoul(value);
      }
    } catch (const std::logic_error&) {
      throw ParseError("line 1: bad value for '" + key + "'");
    }
  }
  if (!version) throw ParseError("line 1: header lacks format_version");
  if (*version != kDatasetFormatVersion) {
    throw UnsupportedVersion("line 1: unsupported dataset format_version " + std::to_string(*version));
  }
  if (!have_n || !have_count || cfg.k_star.empty()) throw ParseError("line 1: header lacks N, num_samples or k_star");
  return cfg;
}

inline Dataset read_dataset(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("line 1: empty dataset file");
  Dataset ds{parse_header(line), {}};
  const std::size_t n = ds.config.length;
  const std::size_t count = ds.config.num_samples;
  ds.data.inputs.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(count));
  ds.data.labels.resize(count);
  std::size_t row = 0, line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    if (row >= count) throw ParseError("line " + std::to_string(line_no) + ": more rows than num_samples");
    std::string_view rest(line);
    std::size_t field = 0;
    auto next = [&]() {
      const auto comma = rest.find(',');
      std::string_view tok = rest.substr(0, comma);
      rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
      return tok;
    };
    const double label = detail::parse_double(next(), line_no, field++);
    if (label != std::floor(label) || label < 0 || label >= static_cast<double>(ds.config.num_classes())) {
      throw ParseError("line " + std::to_string(line_no) + ", field 0: invalid label");
    }
    ds.data.labels[row] = static_cast<int>(label);
    for (std::size_t t = 0; t < n; ++t) {
      if (rest.empty() && t < n) {
        throw ParseError("line " + std::to_string(line_no) + ": expected " + std::to_string(n) + " samples, got " +
                         std::to_string(t));
      }
      ds.data.inputs(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(row)) =
          detail::parse_double(next(), line_no, field++);
    }
    if (!rest.empty()) throw ParseError("line " + std::to_string(line_no) + ": more than " + std::to_string(n) + " samples");
    ++row;
  }
  if (row != count) {
    throw ParseError("line " + std::to_string(line_no) + ": file ends after " + std::to_string(row) + " of " +
                     std::to_string(count) + " samples");
  }
  return ds;
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open dataset file '" + path + "'");
  return read_dataset(in);
}

}  // namespace vilrp::synth
