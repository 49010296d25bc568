// Train a small classifier on sums of sinusoids, then explain one prediction
// in time, frequency and time-frequency.
//
//   vilrp_demo [samples]      (default 20000; well under a minute)

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <numeric>

#include "vilrp/evaluation.hpp"

using namespace vilrp;

int main(int argc, char** argv) {
  auto cfg = synth::desk_preset();
  cfg.num_samples = argc > 1 ? std::strtoul(argv[1], nullptr, 10) : 20'000;
  cfg.seed = 42;
  const auto ds = synth::generate(cfg);
  const std::size_t n_train = cfg.num_samples * 9 / 10;
  auto [train_set, test_set] = synth::split(ds.data, n_train);

  net::TrainConfig tc;
  tc.epochs = 4;
  tc.weight_decay = 3e-4;
  const auto trained = net::train(net::make_mlp(cfg.length, {128, 128}, cfg.num_classes(), 1), train_set, test_set, tc);
  std::printf("test accuracy %.3f on %zu held-out signals\n", trained.metrics.test_accuracy, test_set.size());

  // first held-out signal that contains two of the frequencies
  std::size_t row = 0;
  while (row + 1 < test_set.size() && std::popcount(static_cast<unsigned>(test_set.labels[row])) != 2) ++row;
  const auto subset = synth::decode_label(cfg, test_set.labels[row]);
  const std::vector<double> x(test_set.inputs.col(static_cast<Eigen::Index>(row)).data(),
                              test_set.inputs.col(static_cast<Eigen::Index>(row)).data() + cfg.length);
  const net::Vector z = net::logits(trained.network, x);
  Eigen::Index predicted = 0;
  z.maxCoeff(&predicted);
  std::printf("signal %zu holds frequencies", row);
  for (auto k : subset) std::printf(" %zu", k);
  std::printf("; predicted class %ld (true %d)\n", static_cast<long>(predicted), test_set.labels[row]);

  const auto target = static_cast<std::size_t>(predicted);
  const auto time = attribution::lrp(trained.network, x, attribution::default_rules(trained.network), target);
  const auto freq = inspection::dft_lrp({time.values, x});

  // The time map is spread over every sample; the frequency map is not.
  std::printf("relevance: time total %.4f, frequency total %.4f\n", time.total(), freq.total());
  std::printf("entropy: time %.2f nats, frequency %.2f nats\n", eval::complexity(time), eval::complexity(freq));

  std::vector<std::size_t> bins(cfg.length / 2 + 1);
  std::iota(bins.begin(), bins.end(), 0);
  std::sort(bins.begin(), bins.end(), [&](auto a, auto b) { return std::abs(freq.values[a]) > std::abs(freq.values[b]); });
  std::printf("most relevant frequency bins (mirror bin included):\n");
  for (std::size_t i = 0; i < 5; ++i) {
    const auto k = bins[i];
    const double r = k == 0 || 2 * k == cfg.length ? freq.values[k] : 2 * freq.values[k];
    std::printf("  k = %3zu  R = %+.4f%s\n", k, r, std::find(subset.begin(), subset.end(), k) != subset.end() ? "  <- present" : "");
  }

  // Time-frequency: four rectangular frames on the full frequency grid.
  const spectral::WindowSpec w{spectral::WindowShape::rectangular, cfg.length / 4, cfg.length / 4,
                               spectral::Boundary::anchored, spectral::FrameBasis::full};
  const auto tf = inspection::stdft_lrp({time.values, x, w});
  std::printf("time-frequency relevance per frame at the present frequencies:\n");
  for (std::size_t m = 0; m < tf.rows; ++m) {
    std::printf("  frame %zu:", m);
    for (auto k : subset) std::printf("  k=%zu %+.4f", k, tf.at(m, k) + tf.at(m, tf.cols - k));
    std::printf("\n");
  }
  return 0;
}
