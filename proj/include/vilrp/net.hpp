#pragma once

// Small feed-forward network engine: dense, 1-D convolution, ReLU, flatten
// and the virtual inverse-Fourier layer. Double precision throughout.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "vilrp/error.hpp"
#include "vilrp/virtual_layer.hpp"

namespace vilrp::net {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct Dense {
  Matrix weight;  // out x in
  Vector bias;    // out
};

// Valid (unpadded) convolution over a channel-major (channels x length) input.
struct Conv1d {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel_size = 1;
  std::size_t stride = 1;
  std::vector<double> kernels;  // out x in x kernel, row-major
  Vector bias;                  // out

  double& kernel(std::size_t o, std::size_t c, std::size_t k) {
    return kernels[(o * in_channels + c) * kernel_size + k];
  }
  double kernel(std::size_t o, std::size_t c, std::size_t k) const {
    return kernels[(o * in_channels + c) * kernel_size + k];
  }
};

struct Relu {};
struct Flatten {};

using Layer = std::variant<Dense, Conv1d, Relu, Flatten, InverseFourier>;

struct Shape {
  std::size_t channels = 1;
  std::size_t length = 0;
  std::size_t size() const { return channels * length; }
};

struct Network {
  std::vector<Layer> layers;
  std::size_t input_length = 0;
  std::size_t num_classes = 0;
};

// Column-per-sample storage; labels index classes.
struct Dataset {
  Matrix inputs;  // features x samples
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t features() const { return static_cast<std::size_t>(inputs.rows()); }
};

inline bool is_parametric(const Layer& layer) {
  return std::holds_alternative<Dense>(layer) || std::holds_alternative<Conv1d>(layer);
}

// ---------------------------------------------------------------------------
// Shapes

inline Shape output_shape(const Layer& layer, const Shape& in) {
  return std::visit(
      [&](const auto& l) -> Shape {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, Dense>) {
          if (static_cast<std::size_t>(l.weight.cols()) != in.size()) {
            throw DimensionError("dense layer expects " + std::to_string(l.weight.cols()) + " inputs, got " +
                                 std::to_string(in.size()));
          }
          if (l.bias.size() != l.weight.rows()) throw DimensionError("dense bias length does not match weight rows");
          return Shape{1, static_cast<std::size_t>(l.weight.rows())};
        } else if constexpr (std::is_same_v<T, Conv1d>) {
          if (in.channels != l.in_channels) {
            throw DimensionError("conv1d expects " + std::to_string(l.in_channels) + " channels, got " +
                                 std::to_string(in.channels));
          }
          if (l.stride == 0 || l.kernel_size == 0) throw DimensionError("conv1d stride and kernel must be positive");
          if (in.length < l.kernel_size) throw DimensionError("conv1d input shorter than kernel");
          if (l.kernels.size() != l.out_channels * l.in_channels * l.kernel_size) {
            throw DimensionError("conv1d kernel tensor has wrong size");
          }
          if (static_cast<std::size_t>(l.bias.size()) != l.out_channels) throw DimensionError("conv1d bias length");
          return Shape{l.out_channels, (in.length - l.kernel_size) / l.stride + 1};
        } else if constexpr (std::is_same_v<T, Flatten>) {
          return Shape{1, in.size()};
        } else if constexpr (std::is_same_v<T, InverseFourier>) {
          virtual_layer::check_input(l, in.size());
          return Shape{1, l.length};
        } else {
          return in;
        }
      },
      layer);
}

// Shapes of every activation: result[0] is the input, result[i + 1] the output of layer i.
inline std::vector<Shape> activation_shapes(const Network& net) {
  std::vector<Shape> shapes{Shape{1, net.input_length}};
  for (const Layer& layer : net.layers) shapes.push_back(output_shape(layer, shapes.back()));
  if (shapes.back().size() != net.num_classes) {
    throw DimensionError("network produces " + std::to_string(shapes.back().size()) + " outputs, expected " +
                         std::to_string(net.num_classes) + " classes");
  }
  return shapes;
}

inline void validate(const Network& net) {
  activation_shapes(net);
  for (const Layer& layer : net.layers) {
    if (const auto* d = std::get_if<Dense>(&layer)) {
      if (!d->weight.allFinite() || !d->bias.allFinite()) throw InvalidInput("non-finite dense parameters");
    } else if (const auto* c = std::get_if<Conv1d>(&layer)) {
      for (double v : c->kernels) {
        if (!std::isfinite(v)) throw InvalidInput("non-finite conv1d parameters");
      }
      if (!c->bias.allFinite()) throw InvalidInput("non-finite conv1d parameters");
    }
  }
}

// ---------------------------------------------------------------------------
// Layer kernels on batches (one column per sample)

namespace detail {

inline Matrix conv_forward(const Conv1d& l, const Shape& in, const Matrix& x) {
  const std::size_t lout = (in.length - l.kernel_size) / l.stride + 1;
  Matrix y(static_cast<Eigen::Index>(l.out_channels * lout), x.cols());
  for (Eigen::Index col = 0; col < x.cols(); ++col) {
    const double* xc = x.col(col).data();
    for (std::size_t o = 0; o < l.out_channels; ++o) {
      for (std::size_t p = 0; p < lout; ++p) {
        double acc = l.bias(static_cast<Eigen::Index>(o));
        for (std::size_t c = 0; c < l.in_channels; ++c) {
          const double* seg = xc + c * in.length + p * l.stride;
          for (std::size_t k = 0; k < l.kernel_size; ++k) acc += l.kernel(o, c, k) * seg[k];
        }
        y(static_cast<Eigen::Index>(o * lout + p), col) = acc;
      }
    }
  }
  return y;
}

// Accumulates dL/dx for a batch; optionally dL/dkernels and dL/dbias.
inline Matrix conv_backward(const Conv1d& l, const Shape& in, const Matrix& x, const Matrix& dy, double* dkernels,
                            double* dbias) {
  const std::size_t lout = (in.length - l.kernel_size) / l.stride + 1;
  Matrix dx = Matrix::Zero(x.rows(), x.cols());
  for (Eigen::Index col = 0; col < x.cols(); ++col) {
    const double* xc = x.col(col).data();
    double* dxc = dx.col(col).data();
    for (std::size_t o = 0; o < l.out_channels; ++o) {
      for (std::size_t p = 0; p < lout; ++p) {
        const double g = dy(static_cast<Eigen::Index>(o * lout + p), col);
        if (g == 0.0) continue;
        if (dbias) dbias[o] += g;
        for (std::size_t c = 0; c < l.in_channels; ++c) {
          const std::size_t base = c * in.length + p * l.stride;
          for (std::size_t k = 0; k < l.kernel_size; ++k) {
            dxc[base + k] += l.kernel(o, c, k) * g;
            if (dkernels) dkernels[(o * l.in_channels + c) * l.kernel_size + k] += xc[base + k] * g;
          }
        }
      }
    }
  }
  return dx;
}

}  // namespace detail

inline Matrix layer_forward(const Layer& layer, const Shape& in, const Matrix& x) {
  return std::visit(
      [&](const auto& l) -> Matrix {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, Dense>) {
          Matrix y = l.weight * x;
          y.colwise() += l.bias;
          return y;
        } else if constexpr (std::is_same_v<T, Conv1d>) {
          return detail::conv_forward(l, in, x);
        } else if constexpr (std::is_same_v<T, Relu>) {
          return x.cwiseMax(0.0);
        } else if constexpr (std::is_same_v<T, Flatten>) {
          return x;
        } else {
          Matrix y(static_cast<Eigen::Index>(l.length), x.cols());
          for (Eigen::Index c = 0; c < x.cols(); ++c) {
            const std::vector<double> out =
                virtual_layer::apply(l, std::span<const double>(x.col(c).data(), static_cast<std::size_t>(x.rows())));
            y.col(c) = Eigen::Map<const Vector>(out.data(), static_cast<Eigen::Index>(out.size()));
          }
          return y;
        }
      },
      layer);
}

// Parameter blocks in a fixed order: dense (weight, bias), conv (kernels, bias).
inline std::vector<std::span<double>> parameter_blocks(Layer& layer) {
  if (auto* d = std::get_if<Dense>(&layer)) {
    return {std::span<double>(d->weight.data(), static_cast<std::size_t>(d->weight.size())),
            std::span<double>(d->bias.data(), static_cast<std::size_t>(d->bias.size()))};
  }
  if (auto* c = std::get_if<Conv1d>(&layer)) {
    return {std::span<double>(c->kernels), std::span<double>(c->bias.data(), static_cast<std::size_t>(c->bias.size()))};
  }
  return {};
}

inline std::vector<std::span<double>> parameter_blocks(Network& net) {
  std::vector<std::span<double>> blocks;
  for (Layer& layer : net.layers) {
    for (auto b : parameter_blocks(layer)) blocks.push_back(b);
  }
  return blocks;
}

inline std::size_t parameter_count(const Network& net) {
  auto copy = net;
  std::size_t n = 0;
  for (auto b : parameter_blocks(copy)) n += b.size();
  return n;
}

// Gradients mirror parameter_blocks(net).
using Gradients = std::vector<std::vector<double>>;

inline Gradients zero_gradients(Network& net) {
  Gradients g;
  for (auto b : parameter_blocks(net)) g.emplace_back(b.size(), 0.0);
  return g;
}

// Backward through one layer. `x` is the layer input, `dy` the upstream
// gradient; `grads` (may be null) points at this layer's gradient blocks.
inline Matrix layer_backward(const Layer& layer, const Shape& in, const Matrix& x, const Matrix& dy,
                             std::vector<double>* grads) {
  return std::visit(
      [&](const auto& l) -> Matrix {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, Dense>) {
          if (grads) {
            Eigen::Map<Matrix> dw(grads[0].data(), l.weight.rows(), l.weight.cols());
            Eigen::Map<Vector> db(grads[1].data(), l.bias.size());
            dw.noalias() += dy * x.transpose();
            db += dy.rowwise().sum();
          }
          return l.weight.transpose() * dy;
        } else if constexpr (std::is_same_v<T, Conv1d>) {
          return detail::conv_backward(l, in, x, dy, grads ? grads[0].data() : nullptr,
                                       grads ? grads[1].data() : nullptr);
        } else if constexpr (std::is_same_v<T, Relu>) {
          return (x.array() > 0.0).select(dy, 0.0);
        } else if constexpr (std::is_same_v<T, Flatten>) {
          return dy;
        } else {
          Matrix dx(static_cast<Eigen::Index>(l.input_size()), dy.cols());
          for (Eigen::Index c = 0; c < dy.cols(); ++c) {
            const std::vector<double> out = virtual_layer::apply_transpose(
                l, std::span<const double>(dy.col(c).data(), static_cast<std::size_t>(dy.rows())));
            dx.col(c) = Eigen::Map<const Vector>(out.data(), static_cast<Eigen::Index>(out.size()));
          }
          return dx;
        }
      },
      layer);
}

// ---------------------------------------------------------------------------
// Inference

// activations[0] is the input, activations[i + 1] the output of layer i.
struct Trace {
  std::vector<Shape> shapes;
  std::vector<Vector> activations;

  const Vector& logits() const { return activations.back(); }
};

inline Trace forward(const Network& net, std::span<const double> x) {
  Trace trace;
  trace.shapes = activation_shapes(net);
  if (x.size() != net.input_length) {
    throw DimensionError("input length " + std::to_string(x.size()) + " does not match network input " +
                         std::to_string(net.input_length));
  }
  trace.activations.reserve(net.layers.size() + 1);
  trace.activations.emplace_back(Eigen::Map<const Vector>(x.data(), static_cast<Eigen::Index>(x.size())));
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    trace.activations.emplace_back(layer_forward(net.layers[i], trace.shapes[i], trace.activations.back()));
  }
  return trace;
}

inline Vector logits(const Network& net, std::span<const double> x) { return forward(net, x).logits(); }

// Batched logits (classes x samples).
inline Matrix logits_batch(const Network& net, const Matrix& x) {
  const auto shapes = activation_shapes(net);
  if (static_cast<std::size_t>(x.rows()) != net.input_length) throw DimensionError("batch feature count mismatch");
  Matrix a = x;
  for (std::size_t i = 0; i < net.layers.size(); ++i) a = layer_forward(net.layers[i], shapes[i], a);
  return a;
}

inline Vector softmax(const Vector& z) {
  const double mx = z.maxCoeff();
  Vector e = (z.array() - mx).exp();
  return e / e.sum();
}

inline Matrix softmax_columns(const Matrix& z) {
  Matrix p(z.rows(), z.cols());
  for (Eigen::Index c = 0; c < z.cols(); ++c) p.col(c) = softmax(z.col(c));
  return p;
}

inline void check_class(const Network& net, std::size_t target) {
  if (target >= net.num_classes) {
    throw ConfigError("class index " + std::to_string(target) + " outside [0, " + std::to_string(net.num_classes) +
                      ")");
  }
}

// Gradient of logit[target] with respect to the input.
inline Vector input_gradient(const Network& net, const Trace& trace, std::size_t target) {
  check_class(net, target);
  Matrix dy = Matrix::Zero(static_cast<Eigen::Index>(net.num_classes), 1);
  dy(static_cast<Eigen::Index>(target), 0) = 1.0;
  for (std::size_t i = net.layers.size(); i-- > 0;) {
    dy = layer_backward(net.layers[i], trace.shapes[i], trace.activations[i], dy, nullptr);
  }
  return dy.col(0);
}

inline Vector backward(const Network& net, std::span<const double> x, std::size_t target) {
  return input_gradient(net, forward(net, x), target);
}

// Input gradients of logit[target] for every column of `x` (features x samples).
inline Matrix input_gradients_batch(const Network& net, const Matrix& x, std::size_t target) {
  check_class(net, target);
  const auto shapes = activation_shapes(net);
  std::vector<Matrix> acts{x};
  for (std::size_t i = 0; i < net.layers.size(); ++i) acts.push_back(layer_forward(net.layers[i], shapes[i], acts.back()));
  Matrix dy = Matrix::Zero(static_cast<Eigen::Index>(net.num_classes), x.cols());
  dy.row(static_cast<Eigen::Index>(target)).setOnes();
  for (std::size_t i = net.layers.size(); i-- > 0;) dy = layer_backward(net.layers[i], shapes[i], acts[i], dy, nullptr);
  return dy;
}

// Gradient of logit[target] with respect to every parameter (mirrors parameter_blocks).
inline Gradients parameter_gradient(Network& net, std::span<const double> x, std::size_t target) {
  check_class(net, target);
  const Trace trace = forward(net, x);
  Gradients grads = zero_gradients(net);
  Matrix dy = Matrix::Zero(static_cast<Eigen::Index>(net.num_classes), 1);
  dy(static_cast<Eigen::Index>(target), 0) = 1.0;
  std::size_t block = grads.size();
  for (std::size_t i = net.layers.size(); i-- > 0;) {
    const std::size_t nb = parameter_blocks(net.layers[i]).size();
    block -= nb;
    dy = layer_backward(net.layers[i], trace.shapes[i], trace.activations[i], dy, nb ? &grads[block] : nullptr);
  }
  return grads;
}

// ---------------------------------------------------------------------------
// Construction

// He-style uniform initialization scaled by fan-in, zero biases.
inline Dense make_dense(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Dense d{Matrix(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in)), Vector::Zero(static_cast<Eigen::Index>(out))};
  for (Eigen::Index r = 0; r < d.weight.rows(); ++r) {
    for (Eigen::Index c = 0; c < d.weight.cols(); ++c) d.weight(r, c) = dist(rng);
  }
  return d;
}

inline Conv1d make_conv1d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel_size,
                          std::size_t stride, std::mt19937_64& rng) {
  Conv1d c;
  c.in_channels = in_channels;
  c.out_channels = out_channels;
  c.kernel_size = kernel_size;
  c.stride = stride;
  const double bound = std::sqrt(6.0 / static_cast<double>(in_channels * kernel_size));
  std::uniform_real_distribution<double> dist(-bound, bound);
  c.kernels.resize(out_channels * in_channels * kernel_size);
  for (double& k : c.kernels) k = dist(rng);
  c.bias = Vector::Zero(static_cast<Eigen::Index>(out_channels));
  return c;
}

// input -> [dense(h) -> relu]* -> dense(classes)
inline Network make_mlp(std::size_t input_length, const std::vector<std::size_t>& hidden, std::size_t num_classes,
                        std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Network net{{}, input_length, num_classes};
  std::size_t prev = input_length;
  for (std::size_t h : hidden) {
    net.layers.emplace_back(make_dense(prev, h, rng));
    net.layers.emplace_back(Relu{});
    prev = h;
  }
  net.layers.emplace_back(make_dense(prev, num_classes, rng));
  validate(net);
  return net;
}

// ---------------------------------------------------------------------------
// Training

enum class Optimizer { sgd, adam };

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 128;
  double learning_rate = 1e-3;
  Optimizer optimizer = Optimizer::adam;
  double weight_decay = 0.0;  // L2 penalty (wd/2)|theta|^2 added to the loss
  std::uint64_t seed = 1;

  void validate() const {
    if (epochs == 0 || batch_size == 0 || !(learning_rate > 0.0)) {
      throw ConfigError("epochs, batch size and learning rate must be positive");
    }
    if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) throw ConfigError("weight decay must be >= 0");
  }
};

struct TrainMetrics {
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  double final_loss = 0.0;
  std::vector<double> epoch_loss;
};

struct TrainResult {
  Network network;
  TrainMetrics metrics;
};

inline double accuracy(const Network& net, const Dataset& data, std::size_t chunk = 1024) {
  if (data.size() == 0) return 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < data.size(); start += chunk) {
    const auto count = static_cast<Eigen::Index>(std::min(chunk, data.size() - start));
    const Matrix z = logits_batch(net, data.inputs.middleCols(static_cast<Eigen::Index>(start), count));
    for (Eigen::Index c = 0; c < count; ++c) {
      Eigen::Index arg = 0;
      z.col(c).maxCoeff(&arg);
      if (arg == data.labels[start + static_cast<std::size_t>(c)]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

namespace detail {

struct AdamState {
  Gradients m, v;
  std::size_t step = 0;
};

}  // namespace detail

// Cross-entropy training. Parameter updates depend only on the network, the
// data and cfg.seed (batch order), so equal seeds give equal parameters.
inline TrainResult train(Network net, const Dataset& train_set, const Dataset& test_set, const TrainConfig& cfg) {
  cfg.validate();
  validate(net);
  if (train_set.size() == 0) throw InvalidInput("training set is empty");
  if (train_set.features() != net.input_length) throw DimensionError("training features do not match network input");
  for (int label : train_set.labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= net.num_classes) {
      throw InvalidInput("label " + std::to_string(label) + " outside [0, " + std::to_string(net.num_classes) + ")");
    }
  }

  const auto shapes = activation_shapes(net);
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  detail::AdamState adam{zero_gradients(net), zero_gradients(net), 0};
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kAdamEps = 1e-8;

  TrainMetrics metrics;
  std::vector<Matrix> acts(net.layers.size() + 1);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, order.size() - start);
      acts[0].resize(static_cast<Eigen::Index>(net.input_length), static_cast<Eigen::Index>(count));
      for (std::size_t c = 0; c < count; ++c) {
        acts[0].col(static_cast<Eigen::Index>(c)) = train_set.inputs.col(static_cast<Eigen::Index>(order[start + c]));
      }
      for (std::size_t i = 0; i < net.layers.size(); ++i) acts[i + 1] = layer_forward(net.layers[i], shapes[i], acts[i]);

      Matrix dy = softmax_columns(acts.back());
      for (std::size_t c = 0; c < count; ++c) {
        const auto label = static_cast<Eigen::Index>(train_set.labels[order[start + c]]);
        loss_sum -= std::log(std::max(dy(label, static_cast<Eigen::Index>(c)), 1e-300));
        dy(label, static_cast<Eigen::Index>(c)) -= 1.0;
      }
      dy /= static_cast<double>(count);

      Gradients grads = zero_gradients(net);
      std::size_t block = grads.size();
      for (std::size_t i = net.layers.size(); i-- > 0;) {
        const std::size_t nb = parameter_blocks(net.layers[i]).size();
        block -= nb;
        dy = layer_backward(net.layers[i], shapes[i], acts[i], dy, nb ? &grads[block] : nullptr);
      }

      auto params = parameter_blocks(net);
      ++adam.step;
      const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(adam.step));
      const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(adam.step));
      for (std::size_t b = 0; b < params.size(); ++b) {
        for (std::size_t j = 0; j < params[b].size(); ++j) {
          const double g = grads[b][j] + cfg.weight_decay * params[b][j];
          if (cfg.optimizer == Optimizer::sgd) {
            params[b][j] -= cfg.learning_rate * g;
            continue;
          }
          adam.m[b][j] = kBeta1 * adam.m[b][j] + (1.0 - kBeta1) * g;
          adam.v[b][j] = kBeta2 * adam.v[b][j] + (1.0 - kBeta2) * g * g;
          params[b][j] -= cfg.learning_rate * (adam.m[b][j] / bc1) / (std::sqrt(adam.v[b][j] / bc2) + kAdamEps);
        }
      }
    }
    const double mean_loss = loss_sum / static_cast<double>(order.size());
    if (!std::isfinite(mean_loss)) {
      throw TrainingFailure("training diverged at epoch " + std::to_string(epoch + 1) + " (loss is not finite)");
    }
    for (const auto& block : parameter_blocks(net)) {
      if (!std::all_of(block.begin(), block.end(), [](double v) { return std::isfinite(v); })) {
        throw TrainingFailure("training diverged at epoch " + std::to_string(epoch + 1) + " (non-finite parameters)");
      }
    }
    metrics.epoch_loss.push_back(mean_loss);
  }
  metrics.final_loss = metrics.epoch_loss.back();
  metrics.train_accuracy = accuracy(net, train_set);
  metrics.test_accuracy = test_set.size() ? accuracy(net, test_set) : 0.0;
  return TrainResult{std::move(net), metrics};
}

// ---------------------------------------------------------------------------
// Model files: versioned JSON, row-major weight arrays.

inline constexpr int kModelFormatVersion = 1;

inline nlohmann::json window_to_json(const spectral::WindowSpec& w) {
  return {{"shape", std::string(spectral::to_string(w.shape))},
          {"width", w.width},
          {"hop", w.hop},
          {"boundary", w.boundary == spectral::Boundary::padded ? "padded" : "anchored"},
          {"basis", w.basis == spectral::FrameBasis::full ? "full" : "local"}};
}

inline nlohmann::json to_json(const Network& net) {
  nlohmann::json layers = nlohmann::json::array();
  for (const Layer& layer : net.layers) {
    std::visit(
        [&](const auto& l) {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, Dense>) {
            std::vector<double> w;
            w.reserve(static_cast<std::size_t>(l.weight.size()));
            for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
              for (Eigen::Index c = 0; c < l.weight.cols(); ++c) w.push_back(l.weight(r, c));
            }
            layers.push_back({{"kind", "dense"},
                              {"in", l.weight.cols()},
                              {"out", l.weight.rows()},
                              {"weights", w},
                              {"bias", std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size())}});
          } else if constexpr (std::is_same_v<T, Conv1d>) {
            layers.push_back({{"kind", "conv1d"},
                              {"in_channels", l.in_channels},
                              {"out_channels", l.out_channels},
                              {"kernel_size", l.kernel_size},
                              {"stride", l.stride},
                              {"kernels", l.kernels},
                              {"bias", std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size())}});
          } else if constexpr (std::is_same_v<T, Relu>) {
            layers.push_back({{"kind", "relu"}});
          } else if constexpr (std::is_same_v<T, Flatten>) {
            layers.push_back({{"kind", "flatten"}});
          } else {
            layers.push_back({{"kind", "inverse_fourier"},
                              {"length", l.length},
                              {"window", l.window ? window_to_json(*l.window) : nlohmann::json(nullptr)}});
          }
        },
        layer);
  }
  return {{"format", "vilrp-model"},
          {"format_version", kModelFormatVersion},
          {"input_length", net.input_length},
          {"num_classes", net.num_classes},
          {"layers", layers}};
}

namespace detail {

template <typename T>
T field(const nlohmann::json& obj, const std::string& key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) throw ParseError(where + ": missing field '" + key + "'");
  try {
    return obj.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(where + "." + key + ": " + e.what());
  }
}

inline std::vector<double> numbers(const nlohmann::json& obj, const std::string& key, std::size_t expected,
                                   const std::string& where) {
  auto v = field<std::vector<double>>(obj, key, where);
  if (v.size() != expected) {
    throw ParseError(where + "." + key + ": expected " + std::to_string(expected) + " values, got " +
                     std::to_string(v.size()));
  }
  return v;
}

}  // namespace detail

inline spectral::WindowSpec window_from_json(const nlohmann::json& j, const std::string& where) {
  spectral::WindowSpec w;
  try {
    w.shape = spectral::parse_window_shape(detail::field<std::string>(j, "shape", where));
  } catch (const ConfigError& e) {
    throw ParseError(where + ".shape: " + e.what());
  }
  w.width = detail::field<std::size_t>(j, "width", where);
  w.hop = detail::field<std::size_t>(j, "hop", where);
  const auto boundary = j.value("boundary", std::string("anchored"));
  if (boundary != "anchored" && boundary != "padded") {
    throw ParseError(where + ".boundary: unknown boundary '" + boundary + "'");
  }
  w.boundary = boundary == "padded" ? spectral::Boundary::padded : spectral::Boundary::anchored;
  const auto basis = j.value("basis", std::string("local"));
  if (basis != "local" && basis != "full") throw ParseError(where + ".basis: unknown frame basis '" + basis + "'");
  w.basis = basis == "full" ? spectral::FrameBasis::full : spectral::FrameBasis::local;
  return w;
}

inline Network from_json(const nlohmann::json& j) {
  if (detail::field<std::string>(j, "format", "header") != "vilrp-model") throw ParseError("header: not a vilrp model");
  const int version = detail::field<int>(j, "format_version", "header");
  if (version != kModelFormatVersion) {
    throw UnsupportedVersion("header: unsupported format_version " + std::to_string(version) + " (expected " +
                             std::to_string(kModelFormatVersion) + ")");
  }
  Network net;
  net.input_length = detail::field<std::size_t>(j, "input_length", "header");
  net.num_classes = detail::field<std::size_t>(j, "num_classes", "header");
  const auto layers = detail::field<nlohmann::json>(j, "layers", "header");
  if (!layers.is_array()) throw ParseError("header.layers: expected an array");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& lj = layers[i];
    const std::string where = "layers[" + std::to_string(i) + "]";
    const auto kind = detail::field<std::string>(lj, "kind", where);
    if (kind == "dense") {
      const auto in = detail::field<std::size_t>(lj, "in", where);
      const auto out = detail::field<std::size_t>(lj, "out", where);
      const auto w = detail::numbers(lj, "weights", in * out, where);
      const auto b = detail::numbers(lj, "bias", out, where);
      Dense d{Matrix(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in)), Vector(static_cast<Eigen::Index>(out))};
      for (std::size_t r = 0; r < out; ++r) {
        for (std::size_t c = 0; c < in; ++c) d.weight(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = w[r * in + c];
        d.bias(static_cast<Eigen::Index>(r)) = b[r];
      }
      net.layers.emplace_back(std::move(d));
    } else if (kind == "conv1d") {
      Conv1d c;
      c.in_channels = detail::field<std::size_t>(lj, "in_channels", where);
      c.out_channels = detail::field<std::size_t>(lj, "out_channels", where);
      c.kernel_size = detail::field<std::size_t>(lj, "kernel_size", where);
      c.stride = detail::field<std::size_t>(lj, "stride", where);
      c.kernels = detail::numbers(lj, "kernels", c.out_channels * c.in_channels * c.kernel_size, where);
      const auto b = detail::numbers(lj, "bias", c.out_channels, where);
      c.bias = Eigen::Map<const Vector>(b.data(), static_cast<Eigen::Index>(b.size()));
      net.layers.emplace_back(std::move(c));
    } else if (kind == "relu") {
      net.layers.emplace_back(Relu{});
    } else if (kind == "flatten") {
      net.layers.emplace_back(Flatten{});
    } else if (kind == "inverse_fourier") {
      InverseFourier f;
      f.length = detail::field<std::size_t>(lj, "length", where);
      if (lj.contains("window") && !lj.at("window").is_null()) f.window = window_from_json(lj.at("window"), where + ".window");
      net.layers.emplace_back(std::move(f));
    } else {
      throw ParseError(where + ".kind: unknown layer kind '" + kind + "'");
    }
  }
  try {
    validate(net);
  } catch (const Error& e) {
    throw ParseError(std::string("model is inconsistent: ") + e.what());
  }
  return net;
}

inline void save(const Network& net, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << to_json(net).dump() << '\n';
  if (!out) throw Error("failed writing '" + path + "'");
}

inline Network parse_model(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    const std::size_t byte = std::min<std::size_t>(e.byte, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n');
    throw ParseError("line " + std::to_string(line) + ", byte " + std::to_string(e.byte) + ": " + e.what());
  }
  return from_json(j);
}

inline Network load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open model file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_model(ss.str());
}

}  // namespace vilrp::net
