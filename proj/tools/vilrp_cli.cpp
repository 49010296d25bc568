// vilrp: generate the synthetic benchmark, train the MLP, compute relevance
// maps in time / frequency / time-frequency, and run the evaluation suite.
//
// Exit codes: 0 success, 2 usage, 3 data error, 4 numerical failure.
// Every option can also be set through an environment variable named
// VILRP_<OPTION> (upper case, dashes as underscores); flags win.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>

#include "vilrp/evaluation.hpp"
#include "vilrp/io.hpp"

using namespace vilrp;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

struct UsageError : Error {
  using Error::Error;
};

std::string env_name(const std::string& flag) {
  std::string out = "VILRP_";
  for (char c : flag) out += c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

template <typename T>
CLI::Option* opt(CLI::App* app, const std::string& flag, T& target, const std::string& help) {
  return app->add_option("--" + flag, target, help)->envname(env_name(flag));
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void write_manifests(io::RunManifest m, const std::vector<std::string>& artifacts, double seconds) {
  m.outputs = artifacts;
  m.wall_clock_seconds = seconds;
  for (const auto& a : artifacts) io::write_manifest(m, a);
}

// Derived seeds: one --seed drives every random stream.
std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t stream) { return synth::sample_seed(seed, stream); }

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
  std::string preset = "desk";
  std::optional<double> sigma;
  std::optional<std::size_t> samples;
  std::optional<std::size_t> subset_only;
  std::uint64_t seed = 0;
  unsigned jobs = 1;
  std::string out;
};

int run_synth(const SynthArgs& a) {
  const auto start = std::chrono::steady_clock::now();
  synth::SynthConfig cfg = synth::preset(a.preset);
  if (a.sigma) cfg.noise_sigma = *a.sigma;
  if (a.samples) cfg.num_samples = *a.samples;
  if (a.subset_only) cfg.subset_size = *a.subset_only;
  cfg.seed = a.seed;
  const auto ds = synth::generate(cfg, a.jobs);

  const std::string tmp = a.out + ".tmp";
  if (const auto parent = std::filesystem::path(a.out).parent_path(); !parent.empty()) {
    std::filesystem::create_directories(parent);
  }
  synth::save_dataset(ds, tmp);
  std::filesystem::rename(tmp, a.out);

  io::RunManifest m;
  m.command = "synth";
  m.config = {{"preset", a.preset},          {"length", cfg.length},   {"k_star", cfg.k_star},
              {"sigma", cfg.noise_sigma},    {"samples", cfg.num_samples}, {"jobs", a.jobs}};
  if (cfg.subset_size) m.config["subset_only"] = *cfg.subset_size;
  m.seeds = {{"seed", a.seed}};
  write_manifests(m, {a.out}, seconds_since(start));
  std::cout << "wrote " << cfg.num_samples << " samples (N=" << cfg.length << ") to " << a.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string data;
  std::string out;
  std::string metrics;
  std::vector<std::size_t> hidden{256, 256};
  std::size_t epochs = 6;
  std::size_t batch = 128;
  double lr = 1e-3;
  double weight_decay = 3e-4;
  double test_fraction = 0.1;
  std::uint64_t seed = 0;
};

int run_train(const TrainArgs& a) {
  const auto start = std::chrono::steady_clock::now();
  if (!(a.test_fraction >= 0.0 && a.test_fraction < 1.0)) throw UsageError("--test-fraction must be in [0, 1)");
  const auto ds = synth::load_dataset(a.data);
  const auto n_test = static_cast<std::size_t>(std::llround(a.test_fraction * static_cast<double>(ds.data.size())));
  auto [train_set, test_set] = synth::split(ds.data, ds.data.size() - n_test);

  net::Network model = net::make_mlp(ds.config.length, a.hidden, ds.config.num_classes(), sub_seed(a.seed, 1));
  net::TrainConfig tc;
  tc.epochs = a.epochs;
  tc.batch_size = a.batch;
  tc.learning_rate = a.lr;
  tc.weight_decay = a.weight_decay;
  tc.seed = sub_seed(a.seed, 2);
  const auto result = net::train(std::move(model), train_set, test_set, tc);

  io::write_atomic(a.out, net::to_json(result.network).dump() + "\n");
  const std::string metrics_path = a.metrics.empty() ? a.out + ".metrics.json" : a.metrics;
  const nlohmann::json metrics{{"train_accuracy", result.metrics.train_accuracy},
                               {"test_accuracy", result.metrics.test_accuracy},
                               {"final_loss", result.metrics.final_loss},
                               {"epoch_loss", result.metrics.epoch_loss},
                               {"train_samples", train_set.size()},
                               {"test_samples", test_set.size()},
                               {"wall_clock_seconds", seconds_since(start)}};
  io::write_atomic(metrics_path, metrics.dump(2) + "\n");

  io::RunManifest m;
  m.command = "train";
  m.config = {{"hidden", a.hidden},      {"epochs", a.epochs},         {"batch", a.batch},
              {"learning_rate", a.lr},   {"weight_decay", a.weight_decay}, {"test_fraction", a.test_fraction},
              {"optimizer", "adam"}};
  m.seeds = {{"seed", a.seed}, {"init", sub_seed(a.seed, 1)}, {"shuffle", sub_seed(a.seed, 2)}};
  m.inputs = {a.data};
  write_manifests(m, {a.out, metrics_path}, seconds_since(start));
  std::printf("test accuracy %.4f  train accuracy %.4f  final loss %.3g\n", result.metrics.test_accuracy,
              result.metrics.train_accuracy, result.metrics.final_loss);
  return 0;
}

// ---------------------------------------------------------------------------
// attribute

struct WindowArgs {
  std::string window = "rect";
  std::optional<std::size_t> width;
  std::optional<std::size_t> hop;
  std::string boundary = "padded";
  std::string basis = "local";

  spectral::WindowSpec spec(std::size_t length) const {
    spectral::WindowSpec w;
    w.shape = spectral::parse_window_shape(window);
    w.width = width ? *width : std::max<std::size_t>(1, length / 10);
    w.hop = hop ? *hop : (w.shape == spectral::WindowShape::rectangular ? w.width : std::max<std::size_t>(1, w.width / 2));
    w.boundary = boundary == "anchored" ? spectral::Boundary::anchored : spectral::Boundary::padded;
    w.basis = basis == "full" ? spectral::FrameBasis::full : spectral::FrameBasis::local;
    w.validate();
    return w;
  }
};

nlohmann::json window_json(const spectral::WindowSpec& w) { return net::window_to_json(w); }

struct AttributeArgs {
  std::string model;
  std::string input;  // signal CSV
  std::string data;   // or a dataset file
  std::size_t row = 0;
  std::string method = "lrp";
  std::string domain = "frequency";
  std::optional<std::size_t> target;
  std::size_t ig_steps = attribution::kDefaultIgSteps;
  WindowArgs window;
  std::string out;
  bool svg = false;
};

int run_attribute(const AttributeArgs& a) {
  const auto start = std::chrono::steady_clock::now();
  if (a.input.empty() == a.data.empty()) throw UsageError("give exactly one of --input and --data");
  const net::Network model = net::load(a.model);

  std::vector<double> x;
  if (!a.input.empty()) {
    const auto rows = io::load_signals(a.input);
    if (a.row >= rows.size()) throw InvalidInput("--row " + std::to_string(a.row) + " but the file has " + std::to_string(rows.size()) + " signals");
    x = rows[a.row];
  } else {
    const auto ds = synth::load_dataset(a.data);
    if (a.row >= ds.data.size()) throw InvalidInput("--row " + std::to_string(a.row) + " but the dataset has " + std::to_string(ds.data.size()) + " samples");
    const auto col = ds.data.inputs.col(static_cast<Eigen::Index>(a.row));
    x.assign(col.data(), col.data() + col.size());
  }
  if (x.size() != model.input_length) {
    throw DimensionError("signal has " + std::to_string(x.size()) + " samples, model expects " + std::to_string(model.input_length));
  }

  const net::Vector logits = net::logits(model, x);
  Eigen::Index predicted = 0;
  logits.maxCoeff(&predicted);
  const std::size_t target = a.target ? *a.target : static_cast<std::size_t>(predicted);
  net::check_class(model, target);

  const attribution::Method method = attribution::parse_method(a.method);
  const attribution::Domain domain = attribution::parse_domain(a.domain);
  eval::DomainSpec spec{a.domain, domain, std::nullopt};
  if (domain == attribution::Domain::time_frequency) spec.window = a.window.spec(x.size());

  attribution::RelevanceMap map;
  if (method == attribution::Method::lrp) {
    const auto time_map = attribution::lrp(model, x, attribution::default_rules(model), target);
    map = eval::domain_map(model, x, target, method, spec, nullptr, &time_map);
    if (domain != attribution::Domain::time) map.params["network_conservation"] = io::to_json(time_map.conservation);
  } else {
    const auto grads = attribution::time_gradients(
        model, x, target, method == attribution::Method::ig ? std::optional<std::size_t>(a.ig_steps) : std::nullopt);
    map = eval::domain_map(model, x, target, method, spec, &grads);
    if (domain == attribution::Domain::time && method == attribution::Method::ig) {
      map.conservation.output_relevance = grads.logit - grads.logit_at_zero;
      map.conservation.input_total = map.total();
      map.conservation.deficit = map.conservation.output_relevance - map.conservation.input_total;
    }
  }
  map.params["target"] = target;
  map.params["predicted"] = static_cast<std::size_t>(predicted);
  if (method == attribution::Method::ig) map.params["steps"] = a.ig_steps;
  if (spec.window) map.params["window"] = window_json(*spec.window);

  std::vector<std::string> outputs{a.out + ".json", a.out + ".csv"};
  io::write_atomic(outputs[0], io::to_json(map).dump(2) + "\n");
  io::write_atomic(outputs[1], io::map_csv(map));
  if (a.svg) {
    outputs.push_back(a.out + ".svg");
    io::write_atomic(outputs.back(), io::map_svg(map));
  }

  io::RunManifest m;
  m.command = "attribute";
  m.config = {{"method", a.method}, {"domain", a.domain}, {"target", target}, {"row", a.row},
              {"ig_steps", a.ig_steps}, {"svg", a.svg}};
  if (spec.window) m.config["window"] = window_json(*spec.window);
  m.inputs = {a.model, a.input.empty() ? a.data : a.input};
  write_manifests(m, outputs, seconds_since(start));

  const auto& c = map.conservation;
  std::printf("%s %s target %zu: total %.6g, deficit %.3g\n", a.method.c_str(), a.domain.c_str(), target, map.total(),
              c.deficit);
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateArgs {
  std::string model;
  std::string data;
  std::vector<std::string> methods{"lrp", "sensitivity", "gxi", "ig"};
  std::size_t samples = 1000;
  std::size_t flip_samples = 200;
  std::size_t flip_points = eval::kDefaultFlipPoints;
  std::size_t ig_steps = attribution::kDefaultIgSteps;
  std::string basis = "full";
  bool no_random = false;
  std::uint64_t seed = 0;
  unsigned jobs = 1;
  std::string out;
};

struct Check {
  std::string name;
  bool pass;
  std::string detail;
};

std::vector<Check> ordering_checks(const eval::EvalReport& r) {
  std::vector<Check> checks;
  const auto lam = [&](const std::string& m, const std::string& d) -> std::optional<double> {
    const auto* e = r.find(m, d);
    if (!e || !e->localization.count) return std::nullopt;
    return e->localization.mean;
  };
  const auto f = lam("lrp", "frequency"), s10 = lam("lrp", "stdft_N/10"), s4 = lam("lrp", "stdft_N/4"),
             s2 = lam("lrp", "stdft_N/2");
  if (f && s10 && s4 && s2) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%.3f < %.3f < %.3f < %.3f", *s10, *s4, *s2, *f);
    checks.push_back({"lrp stdft ordering N/10 < N/4 < N/2 < dft", *s10 < *s4 && *s4 < *s2 && *s2 < *f, buf});
  }
  const auto sf = lam("sensitivity", "frequency");
  if (sf) {
    bool equal = true;
    for (const char* d : {"stdft_N/10", "stdft_N/4", "stdft_N/2"}) {
      if (const auto v = lam("sensitivity", d)) equal = equal && std::abs(*v - *sf) <= 1e-9;
    }
    checks.push_back({"sensitivity lambda_dft == lambda_stdft", equal, ""});
    if (f) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "%.3f < %.3f", *sf, *f);
      checks.push_back({"sensitivity below lrp", *sf < *f, buf});
    }
  }
  return checks;
}

int run_evaluate(const EvaluateArgs& a) {
  const auto start = std::chrono::steady_clock::now();
  if (a.methods.empty()) throw UsageError("--methods must name at least one method");
  const net::Network model = net::load(a.model);
  const auto ds = synth::load_dataset(a.data);

  eval::BenchmarkConfig cfg = eval::default_benchmark(ds.config.length);
  cfg.methods.clear();
  for (const auto& m : a.methods) cfg.methods.push_back(attribution::parse_method(m));
  if (a.basis == "local") {
    for (auto& d : cfg.localization_domains) {
      if (d.window) d.window->basis = spectral::FrameBasis::local;
    }
  }
  cfg.max_samples = a.samples;
  cfg.flip_samples = a.flip_samples;
  cfg.flip_points = a.flip_points;
  cfg.ig_steps = a.ig_steps;
  cfg.seed = sub_seed(a.seed, 3);
  cfg.jobs = a.jobs;
  cfg.flip_random_baseline = !a.no_random;
  const eval::EvalReport report = eval::run_benchmark(model, ds, cfg);

  const auto checks = ordering_checks(report);
  nlohmann::json j = eval::to_json(report);
  nlohmann::json cj = nlohmann::json::array();
  for (const auto& c : checks) cj.push_back({{"check", c.name}, {"pass", c.pass}, {"detail", c.detail}});
  j["checks"] = cj;

  const std::string stem = a.out.size() > 5 && a.out.ends_with(".json") ? a.out.substr(0, a.out.size() - 5) : a.out;
  std::vector<std::string> outputs{a.out, stem + ".localization.csv", stem + ".flipping.csv"};
  io::write_atomic(outputs[0], j.dump(2) + "\n");
  io::write_atomic(outputs[1], eval::localization_csv(report));
  io::write_atomic(outputs[2], eval::flipping_csv(report));

  io::RunManifest m;
  m.command = "evaluate";
  m.config = {{"methods", a.methods},         {"samples", a.samples},   {"flip_samples", a.flip_samples},
              {"flip_points", a.flip_points}, {"ig_steps", a.ig_steps}, {"basis", a.basis},
              {"random_baseline", !a.no_random}, {"jobs", a.jobs}};
  m.seeds = {{"seed", a.seed}, {"flip_order", cfg.seed}};
  m.inputs = {a.model, a.data};
  write_manifests(m, outputs, seconds_since(start));

  std::cout << "localization (mean lambda)\n" << eval::localization_csv(report);
  std::cout << "flipping (AUC, sqrt axis) and complexity\n" << eval::flipping_csv(report);
  for (const auto& c : checks) {
    std::cout << (c.pass ? "PASS " : "FAIL ") << c.name << (c.detail.empty() ? "" : "  (" + c.detail + ")") << "\n";
  }
  return 0;
}

int classify(const std::exception& e) {
  if (dynamic_cast<const UsageError*>(&e) || dynamic_cast<const ConfigError*>(&e) ||
      dynamic_cast<const UnsupportedDomain*>(&e) || dynamic_cast<const WindowAdmissibilityError*>(&e) ||
      dynamic_cast<const ColaConditionError*>(&e)) {
    return kExitUsage;
  }
  if (dynamic_cast<const TrainingFailure*>(&e) || dynamic_cast<const PropagationError*>(&e)) return kExitNumerical;
  return kExitData;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Relevance maps in time, frequency and time-frequency through virtual inspection layers"};
  app.require_subcommand(1);

  SynthArgs sa;
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset");
  opt(synth_cmd, "preset", sa.preset, "baseline | noisy | desk | desk-noisy")
      ->check(CLI::IsMember({"baseline", "noisy", "desk", "desk-noisy"}));
  opt(synth_cmd, "sigma", sa.sigma, "noise standard deviation");
  opt(synth_cmd, "samples", sa.samples, "number of samples")->check(CLI::PositiveNumber);
  opt(synth_cmd, "subset-only", sa.subset_only, "only labels with exactly this many frequencies");
  opt(synth_cmd, "seed", sa.seed, "random seed");
  opt(synth_cmd, "jobs", sa.jobs, "worker threads")->check(CLI::PositiveNumber);
  opt(synth_cmd, "out", sa.out, "dataset file")->required();

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "train the MLP classifier");
  opt(train_cmd, "data", ta.data, "dataset file")->required();
  opt(train_cmd, "out", ta.out, "model file")->required();
  opt(train_cmd, "metrics", ta.metrics, "metrics JSON (default: <out>.metrics.json)");
  opt(train_cmd, "hidden", ta.hidden, "hidden layer widths")->delimiter(',');
  opt(train_cmd, "epochs", ta.epochs, "training epochs")->check(CLI::PositiveNumber);
  opt(train_cmd, "batch", ta.batch, "mini-batch size")->check(CLI::PositiveNumber);
  opt(train_cmd, "lr", ta.lr, "Adam learning rate")->check(CLI::PositiveNumber);
  opt(train_cmd, "weight-decay", ta.weight_decay, "L2 penalty")->check(CLI::NonNegativeNumber);
  opt(train_cmd, "test-fraction", ta.test_fraction, "held-out share (taken from the end of the file)");
  opt(train_cmd, "seed", ta.seed, "random seed");

  AttributeArgs aa;
  auto* attr_cmd = app.add_subcommand("attribute", "relevance map for one signal");
  opt(attr_cmd, "model", aa.model, "model file")->required();
  opt(attr_cmd, "input", aa.input, "signal CSV, one signal per line");
  opt(attr_cmd, "data", aa.data, "dataset file (instead of --input)");
  opt(attr_cmd, "row", aa.row, "which signal / sample");
  opt(attr_cmd, "method", aa.method, "lrp | sensitivity | gxi | ig")
      ->check(CLI::IsMember({"lrp", "sensitivity", "gxi", "ig"}));
  opt(attr_cmd, "domain", aa.domain, "time | frequency | time-frequency")
      ->check(CLI::IsMember({"time", "frequency", "time-frequency", "time_frequency"}));
  opt(attr_cmd, "target", aa.target, "class to explain (default: predicted)");
  opt(attr_cmd, "ig-steps", aa.ig_steps, "integrated-gradients steps");
  opt(attr_cmd, "window", aa.window.window, "rect | halfsine | hann")
      ->check(CLI::IsMember({"rect", "rectangular", "halfsine", "half_sine", "hann"}));
  opt(attr_cmd, "width", aa.window.width, "window width H (default N/10)")->check(CLI::PositiveNumber);
  opt(attr_cmd, "hop", aa.window.hop, "hop D (default H for rect, H/2 otherwise)")->check(CLI::PositiveNumber);
  opt(attr_cmd, "boundary", aa.window.boundary, "anchored | padded")->check(CLI::IsMember({"anchored", "padded"}));
  opt(attr_cmd, "frame-basis", aa.window.basis, "local | full")->check(CLI::IsMember({"local", "full"}));
  opt(attr_cmd, "out", aa.out, "output prefix (.json, .csv, .svg)")->required();
  attr_cmd->add_flag("--svg", aa.svg, "also write an SVG heatmap")->envname(env_name("svg"));

  EvaluateArgs ea;
  auto* eval_cmd = app.add_subcommand("evaluate", "localization, flipping and complexity benchmark");
  opt(eval_cmd, "model", ea.model, "model file")->required();
  opt(eval_cmd, "data", ea.data, "dataset file")->required();
  opt(eval_cmd, "methods", ea.methods, "comma-separated methods")
      ->delimiter(',')
      ->check(CLI::IsMember({"lrp", "sensitivity", "gxi", "ig"}));
  opt(eval_cmd, "samples", ea.samples, "samples for localization")->check(CLI::PositiveNumber);
  opt(eval_cmd, "flip-samples", ea.flip_samples, "samples for flipping and complexity");
  opt(eval_cmd, "flip-points", ea.flip_points, "points on the flipping curve")->check(CLI::Range(2, 100000));
  opt(eval_cmd, "ig-steps", ea.ig_steps, "integrated-gradients steps");
  opt(eval_cmd, "frame-basis", ea.basis, "frame basis of the localization sweep: full | local")
      ->check(CLI::IsMember({"local", "full"}));
  eval_cmd->add_flag("--no-random-baseline", ea.no_random, "skip random-order flipping")
      ->envname(env_name("no-random-baseline"));
  opt(eval_cmd, "seed", ea.seed, "random seed");
  opt(eval_cmd, "jobs", ea.jobs, "worker threads")->check(CLI::PositiveNumber);
  opt(eval_cmd, "out", ea.out, "report JSON (CSV tables are written next to it)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }
  // CLI11 drops environment values that fail validation; treat them as usage errors instead.
  for (const auto* sub : app.get_subcommands()) {
    for (const auto* o : sub->get_options()) {
      const std::string env = o->get_envname();
      const char* value = env.empty() ? nullptr : std::getenv(env.c_str());
      if (value && *value && o->count() == 0) {
        std::cerr << "error: " << env << "=" << value << " is not a valid value for " << o->get_name() << "\n";
        return kExitUsage;
      }
    }
  }

  try {
    if (*synth_cmd) return run_synth(sa);
    if (*train_cmd) return run_train(ta);
    if (*attr_cmd) return run_attribute(aa);
    if (*eval_cmd) return run_evaluate(ea);
  } catch (const std::exception& e) {
    const int rc = classify(e);
    std::cerr << "error: " << e.what() << "\n";
    return rc;
  }
  return kExitUsage;
}
