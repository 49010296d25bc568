#pragma once

// Input attribution: LRP with per-layer rules, Sensitivity, Gradient x Input
// and Integrated Gradients. Every engine runs unchanged on a network whose
// first layer is the virtual inverse-Fourier layer, which is how relevance is
// read off in the frequency and time-frequency domains.

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "vilrp/error.hpp"
#include "vilrp/net.hpp"
#include "vilrp/spectral.hpp"
#include "vilrp/virtual_layer.hpp"

namespace vilrp::attribution {

using net::Matrix;
using net::Network;
using net::Vector;

enum class Domain { time, frequency, time_frequency };

inline std::string to_string(Domain d) {
  switch (d) {
    case Domain::time: return "time";
    case Domain::frequency: return "frequency";
    case Domain::time_frequency: return "time_frequency";
  }
  return "?";
}

inline Domain parse_domain(const std::string& s) {
  if (s == "time") return Domain::time;
  if (s == "frequency" || s == "freq") return Domain::frequency;
  if (s == "time_frequency" || s == "time-frequency" || s == "tf") return Domain::time_frequency;
  throw ConfigError("unknown domain '" + s + "'");
}

struct LrpRule {
  enum class Kind { zero, epsilon, gamma, z_plus };
  Kind kind = Kind::zero;
  double param = 0.0;     // epsilon or gamma
  bool relative = false;  // epsilon only: param scales the mean |denominator| of the layer

  static LrpRule zero() { return {Kind::zero, 0.0, false}; }
  static LrpRule epsilon(double eps) { return {Kind::epsilon, eps, false}; }
  static LrpRule epsilon_relative(double factor) { return {Kind::epsilon, factor, true}; }
  static LrpRule gamma(double g) { return {Kind::gamma, g, false}; }
  static LrpRule z_plus() { return {Kind::z_plus, 0.0, false}; }

  void validate() const {
    if (kind == Kind::epsilon && !(param > 0.0)) throw ConfigError("epsilon must be positive");
    if (kind == Kind::gamma && !(param >= 0.0)) throw ConfigError("gamma must be non-negative");
  }

  std::string name() const {
    switch (kind) {
      case Kind::zero: return "lrp_zero";
      case Kind::epsilon: return relative ? "lrp_epsilon_rel" : "lrp_epsilon";
      case Kind::gamma: return "lrp_gamma";
      case Kind::z_plus: return "z_plus";
    }
    return "?";
  }
};

inline bool takes_rule(const net::Layer& layer) {
  return net::is_parametric(layer) || std::holds_alternative<InverseFourier>(layer);
}

// One rule per layer that mixes inputs (dense, conv1d, inverse-Fourier), in network order.
struct LrpRules {
  std::vector<LrpRule> per_layer;
};

inline constexpr double kDefaultDenseEpsilon = 1e-6;
inline constexpr double kDefaultVirtualEpsilon = 1e-9;

// z+ for convolutions, relative epsilon for dense layers, and a much smaller
// relative epsilon on the virtual layer (its denominators are the signal samples).
inline LrpRules default_rules(const Network& net) {
  LrpRules rules;
  for (const auto& layer : net.layers) {
    if (std::holds_alternative<net::Conv1d>(layer)) {
      rules.per_layer.push_back(LrpRule::z_plus());
    } else if (std::holds_alternative<net::Dense>(layer)) {
      rules.per_layer.push_back(LrpRule::epsilon_relative(kDefaultDenseEpsilon));
    } else if (std::holds_alternative<InverseFourier>(layer)) {
      rules.per_layer.push_back(LrpRule::epsilon_relative(kDefaultVirtualEpsilon));
    }
  }
  return rules;
}

inline LrpRules uniform_rules(const Network& net, LrpRule rule) {
  LrpRules rules;
  for (const auto& layer : net.layers) {
    if (takes_rule(layer)) rules.per_layer.push_back(rule);
  }
  return rules;
}

enum class Method { lrp, sensitivity, gxi, ig };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::lrp: return "lrp";
    case Method::sensitivity: return "sensitivity";
    case Method::gxi: return "gxi";
    case Method::ig: return "ig";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  if (s == "lrp") return Method::lrp;
  if (s == "sensitivity" || s == "sens") return Method::sensitivity;
  if (s == "gxi") return Method::gxi;
  if (s == "ig") return Method::ig;
  throw ConfigError("unknown attribution method '" + s + "'");
}

inline constexpr std::size_t kMinIgSteps = 8;
inline constexpr std::size_t kDefaultIgSteps = 256;

struct AttributionConfig {
  Method method = Method::lrp;
  std::optional<LrpRules> rules;  // lrp only; default_rules(net) when empty
  std::size_t ig_steps = kDefaultIgSteps;
  std::size_t target = 0;

  void validate() const {
    if (method == Method::ig && ig_steps < kMinIgSteps) {
      throw ConfigError("integrated gradients needs at least " + std::to_string(kMinIgSteps) + " steps");
    }
  }
};

struct ConservationReport {
  double output_relevance = 0.0;  // relevance injected at the top (logit or f(x) - f(0))
  double input_total = 0.0;       // sum of raw input relevances
  double deficit = 0.0;           // output_relevance - input_total
  std::vector<double> layer_totals;  // sum of relevance entering each layer, top to bottom
  std::optional<double> time_total;  // for transported maps: sum in the time domain
};

struct RelevanceMap {
  Domain domain = Domain::time;
  std::size_t rows = 1;  // frames for time_frequency, else 1
  std::size_t cols = 0;
  std::vector<double> values;  // rows x cols, row-major; R_k = R_k,Re + R_k,Im for Fourier domains
  std::vector<double> re_part;  // per-coefficient real / imaginary parts (Fourier domains only)
  std::vector<double> im_part;
  std::string method;
  nlohmann::json params = nlohmann::json::object();
  ConservationReport conservation;

  double total() const {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

// ---------------------------------------------------------------------------
// Augmentation with the virtual inverse-Fourier layer

enum class LayerMode { implicit, dense };

// Transform of x into the augmented network's input layout ([Re; Im]).
inline std::vector<double> forward_transform(const InverseFourier& layer, std::span<const double> x) {
  if (x.size() != layer.length) throw DimensionError("signal length does not match the virtual layer");
  if (!layer.window) return virtual_layer::pack(spectral::dft(x));
  return virtual_layer::pack(spectral::stdft(x, *layer.window));
}

// Prepends T^{-1} to the network. With window empty T is the DFT, otherwise
// the STDFT (inverted by weighted overlap-add). In dense mode the layer is
// materialized as an explicit bias-free dense layer.
inline Network augment_with_inverse_fourier(const Network& net, std::optional<spectral::WindowSpec> window,
                                            LayerMode mode = LayerMode::implicit) {
  net::validate(net);
  if (!net.layers.empty() && std::holds_alternative<InverseFourier>(net.layers.front())) {
    throw DimensionError("network already starts with an inverse-Fourier layer");
  }
  if (window) spectral::window_weights(*window, net.input_length);
  InverseFourier layer{net.input_length, window};
  Network out;
  out.num_classes = net.num_classes;
  out.input_length = layer.input_size();
  if (mode == LayerMode::implicit) {
    out.layers.emplace_back(layer);
  } else {
    Matrix a = virtual_layer::dense_matrix(layer);
    out.layers.emplace_back(net::Dense{std::move(a), Vector::Zero(static_cast<Eigen::Index>(net.input_length))});
  }
  out.layers.insert(out.layers.end(), net.layers.begin(), net.layers.end());
  net::validate(out);
  return out;
}

// The inverse-Fourier layer at the front of `net`, if any.
inline std::optional<InverseFourier> virtual_front(const Network& net) {
  if (net.layers.empty()) return std::nullopt;
  if (const auto* f = std::get_if<InverseFourier>(&net.layers.front())) return *f;
  return std::nullopt;
}

// Wraps raw per-input attributions into a map. For inputs of an implicit
// virtual layer, real and imaginary parts are summed per coefficient.
inline RelevanceMap make_map(const Network& net, const Vector& raw, std::string method) {
  RelevanceMap map;
  map.method = std::move(method);
  if (const auto front = virtual_front(net)) {
    const std::size_t c = front->coefficients();
    map.domain = front->window ? Domain::time_frequency : Domain::frequency;
    map.rows = front->frames();
    map.cols = front->bins();
    map.re_part.assign(raw.data(), raw.data() + c);
    map.im_part.assign(raw.data() + c, raw.data() + 2 * c);
    map.values.resize(c);
    for (std::size_t i = 0; i < c; ++i) map.values[i] = map.re_part[i] + map.im_part[i];
    if (front->window) map.params["window"] = net::window_to_json(*front->window);
  } else {
    map.domain = Domain::time;
    map.cols = static_cast<std::size_t>(raw.size());
    map.values.assign(raw.data(), raw.data() + raw.size());
  }
  return map;
}

// ---------------------------------------------------------------------------
// LRP

namespace detail {

inline double stabilizer_sign(double z) { return z < 0.0 ? -1.0 : 1.0; }

// Elementwise R / z with 0/0 := 0. A zero denominator carrying relevance is an error.
inline Vector safe_ratio(const Vector& r, const Vector& z) {
  Vector s(r.size());
  for (Eigen::Index j = 0; j < r.size(); ++j) {
    if (z(j) == 0.0) {
      if (r(j) != 0.0) throw PropagationError("zero denominator with non-zero relevance; use the epsilon rule");
      s(j) = 0.0;
    } else {
      s(j) = r(j) / z(j);
    }
  }
  return s;
}

// A layer as a linear operator with a weight transform (identity, positive
// part, negative part, or gamma-lifted weights).
struct LinearView {
  enum class Part { all, positive, negative, gamma };

  const net::Layer& layer;
  const net::Shape& in_shape;

  static double transform(double w, Part part, double gamma) {
    switch (part) {
      case Part::all: return w;
      case Part::positive: return w > 0.0 ? w : 0.0;
      case Part::negative: return w < 0.0 ? w : 0.0;
      case Part::gamma: return w + gamma * (w > 0.0 ? w : 0.0);
    }
    return w;
  }

  // W' a (no bias)
  Vector forward(const Vector& a, Part part, double gamma = 0.0) const {
    if (const auto* d = std::get_if<net::Dense>(&layer)) {
      if (part == Part::all) return d->weight * a;
      return d->weight.unaryExpr([&](double w) { return transform(w, part, gamma); }) * a;
    }
    if (const auto* c = std::get_if<net::Conv1d>(&layer)) {
      net::Conv1d k = *c;
      for (double& w : k.kernels) w = transform(w, part, gamma);
      k.bias.setZero();
      return net::detail::conv_forward(k, in_shape, a);
    }
    const auto& f = std::get<InverseFourier>(layer);
    if (part == Part::all) {
      const auto out = virtual_layer::apply(f, std::span<const double>(a.data(), static_cast<std::size_t>(a.size())));
      return Eigen::Map<const Vector>(out.data(), static_cast<Eigen::Index>(out.size()));
    }
    return virtual_layer::dense_matrix(f).unaryExpr([&](double w) { return transform(w, part, gamma); }) * a;
  }

  // W'^T s
  Vector transpose(const Vector& s, Part part, double gamma = 0.0) const {
    if (const auto* d = std::get_if<net::Dense>(&layer)) {
      if (part == Part::all) return d->weight.transpose() * s;
      return d->weight.unaryExpr([&](double w) { return transform(w, part, gamma); }).transpose() * s;
    }
    if (const auto* c = std::get_if<net::Conv1d>(&layer)) {
      net::Conv1d k = *c;
      for (double& w : k.kernels) w = transform(w, part, gamma);
      const Matrix dummy = Matrix::Zero(static_cast<Eigen::Index>(in_shape.size()), 1);
      return net::detail::conv_backward(k, in_shape, dummy, s, nullptr, nullptr).col(0);
    }
    const auto& f = std::get<InverseFourier>(layer);
    if (part == Part::all) {
      const auto out =
          virtual_layer::apply_transpose(f, std::span<const double>(s.data(), static_cast<std::size_t>(s.size())));
      return Eigen::Map<const Vector>(out.data(), static_cast<Eigen::Index>(out.size()));
    }
    return virtual_layer::dense_matrix(f).unaryExpr([&](double w) { return transform(w, part, gamma); }).transpose() *
           s;
  }

  Vector bias(Part part, double gamma = 0.0) const {
    Vector b;
    if (const auto* d = std::get_if<net::Dense>(&layer)) {
      b = d->bias;
    } else if (const auto* c = std::get_if<net::Conv1d>(&layer)) {
      const std::size_t lout = (in_shape.length - c->kernel_size) / c->stride + 1;
      b.resize(static_cast<Eigen::Index>(c->out_channels * lout));
      for (std::size_t o = 0; o < c->out_channels; ++o) {
        b.segment(static_cast<Eigen::Index>(o * lout), static_cast<Eigen::Index>(lout)).setConstant(c->bias(static_cast<Eigen::Index>(o)));
      }
    } else {
      b = Vector::Zero(static_cast<Eigen::Index>(std::get<InverseFourier>(layer).length));
    }
    return b.unaryExpr([&](double w) { return transform(w, part, gamma); });
  }
};

// One propagation step R_out -> R_in through a linear layer.
inline Vector propagate(const net::Layer& layer, const net::Shape& in_shape, const Vector& a, const Vector& r,
                        const LrpRule& rule) {
  using Part = LinearView::Part;
  const LinearView view{layer, in_shape};
  switch (rule.kind) {
    case LrpRule::Kind::zero: {
      const Vector z = view.forward(a, Part::all) + view.bias(Part::all);
      return a.cwiseProduct(view.transpose(safe_ratio(r, z), Part::all));
    }
    case LrpRule::Kind::epsilon: {
      const Vector z = view.forward(a, Part::all) + view.bias(Part::all);
      const double eps = rule.relative ? rule.param * z.cwiseAbs().mean() : rule.param;
      Vector s(z.size());
      for (Eigen::Index j = 0; j < z.size(); ++j) {
        const double den = z(j) + eps * stabilizer_sign(z(j));
        s(j) = den == 0.0 ? 0.0 : r(j) / den;
      }
      return a.cwiseProduct(view.transpose(s, Part::all));
    }
    case LrpRule::Kind::gamma: {
      const Vector z = view.forward(a, Part::gamma, rule.param) + view.bias(Part::gamma, rule.param);
      return a.cwiseProduct(view.transpose(safe_ratio(r, z), Part::gamma, rule.param));
    }
    case LrpRule::Kind::z_plus: {
      const Vector ap = a.cwiseMax(0.0), an = a.cwiseMin(0.0);
      const Vector z = view.forward(ap, Part::positive) + view.forward(an, Part::negative);
      const Vector s = safe_ratio(r, z);
      return ap.cwiseProduct(view.transpose(s, Part::positive)) + an.cwiseProduct(view.transpose(s, Part::negative));
    }
  }
  return r;
}

}  // namespace detail

// Raw relevance of every network input for logit[target].
inline Vector lrp_input_relevance(const Network& net, std::span<const double> input, const LrpRules& rules,
                                  std::size_t target, ConservationReport* report = nullptr) {
  net::check_class(net, target);
  const net::Trace trace = net::forward(net, input);
  std::size_t needed = 0;
  for (const auto& layer : net.layers) needed += takes_rule(layer) ? 1 : 0;
  if (rules.per_layer.size() != needed) {
    throw ConfigError("expected " + std::to_string(needed) + " LRP rules (one per linear layer), got " +
                      std::to_string(rules.per_layer.size()));
  }
  for (const auto& rule : rules.per_layer) rule.validate();

  Vector r = Vector::Zero(static_cast<Eigen::Index>(net.num_classes));
  r(static_cast<Eigen::Index>(target)) = trace.logits()(static_cast<Eigen::Index>(target));
  ConservationReport rep;
  rep.output_relevance = r.sum();
  std::size_t rule_index = needed;
  for (std::size_t i = net.layers.size(); i-- > 0;) {
    rep.layer_totals.push_back(r.sum());
    const auto& layer = net.layers[i];
    if (!takes_rule(layer)) continue;  // relu, flatten: relevance passes through
    r = detail::propagate(layer, trace.shapes[i], trace.activations[i], r, rules.per_layer[--rule_index]);
  }
  rep.input_total = r.sum();
  rep.deficit = rep.output_relevance - rep.input_total;
  if (!r.allFinite()) throw PropagationError("relevance became non-finite");
  if (report) *report = rep;
  return r;
}

inline RelevanceMap lrp(const Network& net, std::span<const double> input, const LrpRules& rules,
                        std::size_t target) {
  ConservationReport rep;
  const Vector raw = lrp_input_relevance(net, input, rules, target, &rep);
  RelevanceMap map = make_map(net, raw, "lrp");
  map.conservation = rep;
  nlohmann::json names = nlohmann::json::array();
  for (const auto& rule : rules.per_layer) names.push_back({{"rule", rule.name()}, {"param", rule.param}});
  map.params["rules"] = names;
  map.params["target"] = target;
  return map;
}

// ---------------------------------------------------------------------------
// Gradient methods

inline RelevanceMap sensitivity(const Network& net, std::span<const double> input, std::size_t target) {
  const Vector g = net::backward(net, input, target);
  RelevanceMap map = make_map(net, g, "sensitivity");
  map.params["target"] = target;
  map.conservation.input_total = g.sum();
  return map;
}

inline RelevanceMap gxi(const Network& net, std::span<const double> input, std::size_t target) {
  const net::Trace trace = net::forward(net, input);
  const Vector g = net::input_gradient(net, trace, target);
  const Vector a = trace.activations.front().cwiseProduct(g);
  RelevanceMap map = make_map(net, a, "gxi");
  map.params["target"] = target;
  map.conservation.output_relevance = trace.logits()(static_cast<Eigen::Index>(target));
  map.conservation.input_total = a.sum();
  map.conservation.deficit = map.conservation.output_relevance - map.conservation.input_total;
  return map;
}

// Mean gradient along the straight path from the zero baseline, sampled at
// the midpoints (s + 1/2) / steps.
inline Vector ig_mean_gradient(const Network& net, std::span<const double> input, std::size_t target,
                               std::size_t steps) {
  if (steps < kMinIgSteps) {
    throw ConfigError("integrated gradients needs at least " + std::to_string(kMinIgSteps) + " steps");
  }
  const Eigen::Map<const Vector> x(input.data(), static_cast<Eigen::Index>(input.size()));
  Matrix path(x.size(), static_cast<Eigen::Index>(steps));
  for (std::size_t s = 0; s < steps; ++s) {
    path.col(static_cast<Eigen::Index>(s)) = x * ((static_cast<double>(s) + 0.5) / static_cast<double>(steps));
  }
  return net::input_gradients_batch(net, path, target).rowwise().mean();
}

inline RelevanceMap ig(const Network& net, std::span<const double> input, std::size_t target,
                       std::size_t steps = kDefaultIgSteps) {
  const Vector mean_grad = ig_mean_gradient(net, input, target, steps);
  const Eigen::Map<const Vector> x(input.data(), static_cast<Eigen::Index>(input.size()));
  const Vector a = x.cwiseProduct(mean_grad);
  RelevanceMap map = make_map(net, a, "ig");
  map.params["target"] = target;
  map.params["steps"] = steps;
  map.params["baseline"] = "zero";
  const Vector zero = Vector::Zero(x.size());
  const double fx = net::logits(net, input)(static_cast<Eigen::Index>(target));
  const double f0 = net::logits(net, std::span<const double>(zero.data(), static_cast<std::size_t>(zero.size())))(
      static_cast<Eigen::Index>(target));
  map.conservation.output_relevance = fx - f0;
  map.conservation.input_total = a.sum();
  map.conservation.deficit = map.conservation.output_relevance - map.conservation.input_total;
  return map;
}

inline RelevanceMap attribute(const Network& net, std::span<const double> input, const AttributionConfig& cfg) {
  cfg.validate();
  switch (cfg.method) {
    case Method::lrp: return lrp(net, input, cfg.rules ? *cfg.rules : default_rules(net), cfg.target);
    case Method::sensitivity: return sensitivity(net, input, cfg.target);
    case Method::gxi: return gxi(net, input, cfg.target);
    case Method::ig: return ig(net, input, cfg.target, cfg.ig_steps);
  }
  throw ConfigError("unknown method");
}

// Gradient-based maps for an augmented network, computed from the time-domain
// network. The virtual layer is linear and exact, so the coefficient gradient
// is A^T (time gradient) and the zero-baseline IG path in coefficient space
// passes through the same model evaluations as the time-domain path.
struct LiftedGradients {
  Vector time_gradient;       // d logit / dx at x
  Vector time_mean_gradient;  // IG path mean; empty if not requested
  double logit = 0.0;
  double logit_at_zero = 0.0;
};

inline LiftedGradients time_gradients(const Network& time_net, std::span<const double> x, std::size_t target,
                                      std::optional<std::size_t> ig_steps) {
  LiftedGradients lg;
  const net::Trace trace = net::forward(time_net, x);
  lg.time_gradient = net::input_gradient(time_net, trace, target);
  lg.logit = trace.logits()(static_cast<Eigen::Index>(target));
  const std::vector<double> zero(x.size(), 0.0);
  lg.logit_at_zero = net::logits(time_net, zero)(static_cast<Eigen::Index>(target));
  if (ig_steps) lg.time_mean_gradient = ig_mean_gradient(time_net, x, target, *ig_steps);
  return lg;
}

inline RelevanceMap lifted_map(const InverseFourier& layer, std::span<const double> x, const LiftedGradients& lg,
                               Method method) {
  if (method == Method::lrp) throw ConfigError("lifted maps are only defined for gradient methods");
  Network shape_only{{layer}, layer.input_size(), layer.length};
  const Vector& g = method == Method::ig ? lg.time_mean_gradient : lg.time_gradient;
  if (g.size() == 0) throw ConfigError("IG path gradient was not computed");
  const auto lifted = virtual_layer::apply_transpose(layer, std::span<const double>(g.data(), static_cast<std::size_t>(g.size())));
  Vector raw = Eigen::Map<const Vector>(lifted.data(), static_cast<Eigen::Index>(lifted.size()));
  if (method != Method::sensitivity) {
    const auto u = forward_transform(layer, x);
    raw = raw.cwiseProduct(Eigen::Map<const Vector>(u.data(), static_cast<Eigen::Index>(u.size())));
  }
  RelevanceMap map = make_map(shape_only, raw, to_string(method));
  map.conservation.input_total = raw.sum();
  if (method == Method::gxi) map.conservation.output_relevance = lg.logit;
  if (method == Method::ig) map.conservation.output_relevance = lg.logit - lg.logit_at_zero;
  if (method != Method::sensitivity) map.conservation.deficit = map.conservation.output_relevance - raw.sum();
  return map;
}

}  // namespace vilrp::attribution
