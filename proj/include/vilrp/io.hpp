#pragma once

// File formats: relevance maps (JSON, flat CSV, SVG heatmap), signal CSV,
// flip-curve CSV, and run manifests. All writes go through a temporary file
// and a rename so a crashed run never leaves a half-written artifact.

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "vilrp/attribution.hpp"
#include "vilrp/error.hpp"
#include "vilrp/evaluation.hpp"

namespace vilrp::io {

using attribution::RelevanceMap;

inline constexpr std::string_view kToolVersion = "0.1.0";

inline void write_atomic(const std::string& path, std::string_view content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path() && !target.parent_path().empty()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error("write to " + tmp.string() + " failed");
  }
  fs::rename(tmp, target);
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// Relevance maps

inline nlohmann::json to_json(const attribution::ConservationReport& c) {
  nlohmann::json j{{"output_relevance", c.output_relevance},
                   {"input_total", c.input_total},
                   {"deficit", c.deficit},
                   {"layer_totals", c.layer_totals}};
  if (c.time_total) j["time_total"] = *c.time_total;
  return j;
}

inline nlohmann::json to_json(const RelevanceMap& m) {
  nlohmann::json j{{"domain", attribution::to_string(m.domain)},
                   {"shape", {m.rows, m.cols}},
                   {"values", m.values},
                   {"method", m.method},
                   {"params", m.params},
                   {"conservation_report", to_json(m.conservation)}};
  if (!m.re_part.empty()) j["re_part"] = m.re_part;
  if (!m.im_part.empty()) j["im_part"] = m.im_part;
  return j;
}

inline RelevanceMap map_from_json(const nlohmann::json& j) {
  try {
    RelevanceMap m;
    m.domain = attribution::parse_domain(j.at("domain").get<std::string>());
    const auto shape = j.at("shape").get<std::vector<std::size_t>>();
    if (shape.size() != 2) throw ParseError("relevance map: shape must have two entries");
    m.rows = shape[0];
    m.cols = shape[1];
    m.values = j.at("values").get<std::vector<double>>();
    if (m.values.size() != m.rows * m.cols) throw ParseError("relevance map: values do not match shape");
    m.method = j.at("method").get<std::string>();
    if (j.contains("params")) m.params = j.at("params");
    if (j.contains("re_part")) m.re_part = j.at("re_part").get<std::vector<double>>();
    if (j.contains("im_part")) m.im_part = j.at("im_part").get<std::vector<double>>();
    if (j.contains("conservation_report")) {
      const auto& c = j.at("conservation_report");
      m.conservation.output_relevance = c.value("output_relevance", 0.0);
      m.conservation.input_total = c.value("input_total", 0.0);
      m.conservation.deficit = c.value("deficit", 0.0);
      if (c.contains("layer_totals")) m.conservation.layer_totals = c.at("layer_totals").get<std::vector<double>>();
      if (c.contains("time_total")) m.conservation.time_total = c.at("time_total").get<double>();
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("relevance map: ") + e.what());
  } catch (const ConfigError& e) {
    throw ParseError(std::string("relevance map: ") + e.what());
  }
}

inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// row,col,value (+ re,im for Fourier maps)
inline std::string map_csv(const RelevanceMap& m) {
  const bool parts = !m.re_part.empty() && !m.im_part.empty();
  std::string out = parts ? "row,col,value,re,im\n" : "row,col,value\n";
  for (std::size_t r = 0; r < m.rows; ++r) {
    for (std::size_t c = 0; c < m.cols; ++c) {
      const std::size_t i = r * m.cols + c;
      out += std::to_string(r) + ',' + std::to_string(c) + ',' + format_double(m.values[i]);
      if (parts) out += ',' + format_double(m.re_part[i]) + ',' + format_double(m.im_part[i]);
      out += '\n';
    }
  }
  return out;
}

// Frames along x, bins along y (bin 0 at the bottom). Red positive, blue
// negative, white at zero; the scale is symmetric around 0.
inline std::string map_svg(const RelevanceMap& m, std::size_t cell = 6) {
  if (m.values.empty()) throw InvalidInput("cannot render an empty map");
  double vmax = 0.0;
  for (double v : m.values) vmax = std::max(vmax, std::abs(v));
  if (vmax == 0.0) vmax = 1.0;
  const std::size_t w = m.rows * cell, h = m.cols * cell;
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" viewBox=\"0 0 "
      << w << ' ' << h << "\" shape-rendering=\"crispEdges\">\n";
  out << "<title>" << m.method << ' ' << attribution::to_string(m.domain) << " (max |R| = " << vmax << ")</title>\n";
  for (std::size_t r = 0; r < m.rows; ++r) {
    for (std::size_t c = 0; c < m.cols; ++c) {
      const double t = std::clamp(m.at(r, c) / vmax, -1.0, 1.0);
      const int fade = static_cast<int>(std::lround(255.0 * (1.0 - std::abs(t))));
      const int red = t >= 0 ? 255 : fade, blue = t >= 0 ? fade : 255, green = fade;
      out << "<rect x=\"" << r * cell << "\" y=\"" << (m.cols - 1 - c) * cell << "\" width=\"" << cell
          << "\" height=\"" << cell << "\" fill=\"rgb(" << red << ',' << green << ',' << blue << ")\"/>\n";
    }
  }
  out << "</svg>\n";
  return out.str();
}

// ---------------------------------------------------------------------------
// Signals

// One signal per line, comma-separated reals. A first line that does not
// parse as numbers is treated as a header.
inline std::vector<std::vector<double>> parse_signals(const std::string& text) {
  std::vector<std::vector<double>> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos || line[0] == '#') continue;
    std::vector<double> row;
    std::string_view rest(line);
    bool ok = true;
    std::size_t field = 0;
    while (true) {
      const std::size_t comma = rest.find(',');
      std::string_view tok = rest.substr(0, comma);
      while (!tok.empty() && (tok.front() == ' ' || tok.front() == '\t')) tok.remove_prefix(1);
      while (!tok.empty() && (tok.back() == ' ' || tok.back() == '\t')) tok.remove_suffix(1);
      ++field;
      double v = 0.0;
      const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (tok.empty() || res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
        ok = false;
        break;
      }
      if (!std::isfinite(v)) throw ParseError("line " + std::to_string(lineno) + ", field " + std::to_string(field) + ": non-finite value");
      row.push_back(v);
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (!ok) {
      if (out.empty() && lineno == 1) continue;  // header
      throw ParseError("line " + std::to_string(lineno) + ", field " + std::to_string(field) + ": not a number");
    }
    out.push_back(std::move(row));
  }
  if (out.empty()) throw ParseError("no signal rows found");
  return out;
}

inline std::vector<std::vector<double>> load_signals(const std::string& path) { return parse_signals(read_file(path)); }

inline std::string signal_csv(std::span<const double> x) {
  std::string out;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (i) out += ',';
    out += format_double(x[i]);
  }
  out += '\n';
  return out;
}

// ---------------------------------------------------------------------------
// Run manifest

struct RunManifest {
  std::string command;
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json seeds = nlohmann::json::object();
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  double wall_clock_seconds = 0.0;

  nlohmann::json to_json() const {
    return {{"command", command},      {"config", config},   {"seeds", seeds},
            {"inputs", inputs},        {"outputs", outputs}, {"tool_version", std::string(kToolVersion)},
            {"wall_clock_seconds", wall_clock_seconds}};
  }
};

inline std::string manifest_path(const std::string& artifact) { return artifact + ".manifest.json"; }

inline void write_manifest(const RunManifest& m, const std::string& artifact) {
  write_atomic(manifest_path(artifact), m.to_json().dump(2) + "\n");
}

}  // namespace vilrp::io
