#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "cevo/grad_check.hpp"
#include "cevo/loss.hpp"
#include "cevo/network.hpp"
#include "cevo/optim.hpp"

using namespace cevo;

namespace {

Tensor<double> random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

void randomize(Network<double>& net, std::mt19937_64& rng, double scale = 0.5) {
  std::uniform_real_distribution<double> u(-scale, scale);
  for (auto& l : net.layers()) {
    for (auto& w : l.weights.data()) w = u(rng);
    for (auto& b : l.bias.data()) b = u(rng);
  }
}

// Direct nested-loop convolution, independent of the im2col path.
std::vector<double> brute_force_conv(const LayerSpec& s, const std::vector<double>& w, const std::vector<double>& b,
                                     const std::vector<double>& x) {
  std::vector<double> out(s.out_h() * s.out_w() * s.filters, 0.0);
  const long pt = long(s.pad_top()), pl = long(s.pad_left());
  for (std::size_t oy = 0; oy < s.out_h(); ++oy)
    for (std::size_t ox = 0; ox < s.out_w(); ++ox)
      for (std::size_t f = 0; f < s.filters; ++f) {
        double acc = s.use_bias ? b[f] : 0.0;
        for (std::size_t ky = 0; ky < s.filter_h; ++ky)
          for (std::size_t kx = 0; kx < s.filter_w; ++kx)
            for (std::size_t c = 0; c < s.in_c; ++c) {
              const long iy = long(oy * s.stride + ky) - pt, ix = long(ox * s.stride + kx) - pl;
              if (iy < 0 || ix < 0 || iy >= long(s.in_h) || ix >= long(s.in_w)) continue;
              acc += w[((f * s.filter_h + ky) * s.filter_w + kx) * s.in_c + c] *
                     x[(std::size_t(iy) * s.in_w + std::size_t(ix)) * s.in_c + c];
            }
        out[(oy * s.out_w() + ox) * s.filters + f] = acc;
      }
  return out;
}

}  // namespace

TEST(Forward, IdentityDenseLayerPassesInputThrough) {
  Network<double> net({LayerSpec::dense(3, 3, Activation::identity)});
  auto& w = net.layers()[0].weights;
  for (std::size_t i = 0; i < 3; ++i) w[i * 3 + i] = 1.0;
  const auto y = net.forward(Tensor<double>({3}, {1, 2, 3}));
  EXPECT_EQ(y.data(), (std::vector<double>{1, 2, 3}));
}

TEST(Forward, ReluClampsNegativePreActivation) {
  Network<double> net({LayerSpec::dense(1, 2, Activation::relu, false)});
  net.layers()[0].weights.data() = {-1.0, 0.5};
  const auto y = net.forward(Tensor<double>({1}, {1.0}));
  EXPECT_EQ(y.data(), (std::vector<double>{0.0, 0.5}));
}

TEST(Forward, AllOnesValidConvolution) {
  const auto spec = LayerSpec::conv2d(10, 14, 1, 4, 4, 3, 1, Activation::identity, Padding::valid, false);
  Network<double> net({spec});
  std::fill(net.layers()[0].weights.data().begin(), net.layers()[0].weights.data().end(), 1.0);
  const auto y = net.forward(Tensor<double>({10, 14, 1}, 1.0));
  EXPECT_EQ(y.shape(), (Shape{3, 4, 1}));
  for (double v : y.data()) EXPECT_EQ(v, 16.0);
}

TEST(Forward, ConvolutionMatchesBruteForceLoop) {
  std::mt19937_64 rng(7);
  for (Padding pad : {Padding::valid, Padding::same}) {
    for (auto [h, w, c, f, s] : {std::tuple{10, 14, 3, 4, 3}, {9, 7, 2, 3, 2}, {3, 12, 5, 3, 4}}) {
      const auto spec = LayerSpec::conv2d(h, w, c, std::min(f, h), f, s, 5, Activation::identity, pad, true);
      Network<double> net({spec});
      randomize(net, rng);
      const auto x = random_tensor({std::size_t(h), std::size_t(w), std::size_t(c)}, rng);
      const auto y = net.forward(x);
      const auto expect =
          brute_force_conv(spec, net.layers()[0].weights.data(), net.layers()[0].bias.data(), x.data());
      ASSERT_EQ(y.size(), expect.size());
      for (std::size_t i = 0; i < expect.size(); ++i) EXPECT_NEAR(y[i], expect[i], 1e-12);
    }
  }
}

TEST(Forward, SamePaddingReproducesStandardStackExtents) {
  const auto c1 = LayerSpec::conv2d(120, 160, 3, 8, 8, 4, 32, Activation::relu, Padding::same);
  EXPECT_EQ(c1.output_shape(), (Shape{30, 40, 32}));
  const auto c2 = LayerSpec::conv2d(30, 40, 32, 4, 4, 3, 64, Activation::relu, Padding::same);
  EXPECT_EQ(c2.output_shape(), (Shape{10, 14, 64}));
  const auto c3 = LayerSpec::conv2d(10, 14, 64, 4, 4, 3, 64, Activation::relu, Padding::same);
  EXPECT_EQ(c3.output_shape(), (Shape{4, 5, 64}));
  EXPECT_EQ(c3.output_size(), 1280u);
  // Unpadded conv1 would give 29 rows, which is why "same" is used there.
  EXPECT_EQ(LayerSpec::conv2d(120, 160, 3, 8, 8, 4, 32, Activation::relu).out_h(), 29u);
}

TEST(Forward, SamePaddingReproducesAlternativeStackExtents) {
  // Width axis (160) occupies the channel slot: input viewed as 3 x 120 x 160.
  const auto c1 = LayerSpec::conv2d(3, 120, 160, 3, 8, 4, 64, Activation::relu, Padding::same);
  EXPECT_EQ(c1.output_shape(), (Shape{1, 30, 64}));
  EXPECT_EQ(c1.patch_size(), 3840u);
  const auto c2 = LayerSpec::conv2d(1, 30, 64, 1, 4, 2, 128, Activation::relu, Padding::same);
  EXPECT_EQ(c2.output_shape(), (Shape{1, 15, 128}));
  const auto c3 = LayerSpec::conv2d(1, 15, 128, 1, 4, 2, 256, Activation::relu, Padding::same);
  EXPECT_EQ(c3.output_shape(), (Shape{1, 8, 256}));
  EXPECT_EQ(c3.output_size(), 2048u);
}

TEST(Forward, ShapeMismatchNamesTheLayer) {
  Network<double> net({LayerSpec::conv2d(8, 8, 3, 3, 3, 1, 2, Activation::relu)});
  try {
    net.forward(Tensor<double>({8, 9, 3}));
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("layer 0 (conv2d)"), std::string::npos);
  }
  EXPECT_THROW(Network<double>({LayerSpec::dense(4, 5, Activation::relu), LayerSpec::dense(6, 2, Activation::relu)}),
               ConfigError);
}

TEST(Forward, BatchedRowsMatchSingleSamples) {
  std::mt19937_64 rng(3);
  Network<double> net({LayerSpec::conv2d(6, 6, 2, 3, 3, 2, 4, Activation::relu, Padding::same),
                       LayerSpec::dense(36, 5, Activation::sigmoid)});
  randomize(net, rng);
  const auto batch = random_tensor({3, 6, 6, 2}, rng);
  const auto yb = net.forward(batch);
  ASSERT_EQ(yb.shape(), (Shape{3, 5}));
  for (std::size_t n = 0; n < 3; ++n) {
    Tensor<double> one({6, 6, 2}, std::vector<double>(batch.data().begin() + long(n * 72),
                                                      batch.data().begin() + long((n + 1) * 72)));
    const auto y = net.infer(one);
    for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(y[j], yb[n * 5 + j], 1e-14);
  }
}

TEST(Forward, ActivationRangesOnRandomInputs) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    Network<double> net({LayerSpec::dense(6, 8, Activation::relu), LayerSpec::dense(8, 4, Activation::sigmoid)});
    randomize(net, rng, 2.0);
    const auto x = random_tensor({6}, rng, -5.0, 5.0);
    const auto hidden = net.infer(RowMatrix<double>(Eigen::Map<const RowMatrix<double>>(x.data().data(), 1, 6)), 0, 1);
    EXPECT_GE(hidden.minCoeff(), 0.0);
    const auto y = net.infer(x);
    for (double v : y.data()) {
      EXPECT_GT(v, 0.0);
      EXPECT_LT(v, 1.0);
    }
  }
}

TEST(Backward, ZeroLossGradientGivesZeroTape) {
  std::mt19937_64 rng(1);
  Network<double> net({LayerSpec::dense(4, 3, Activation::relu), LayerSpec::dense(3, 2, Activation::sigmoid)});
  randomize(net, rng);
  net.forward(random_tensor({4}, rng));
  const auto tape = net.backward(Tensor<double>({2}, 0.0));
  for (std::size_t i = 0; i < 2; ++i) {
    for (double g : tape.weight_grads[i].data()) EXPECT_EQ(g, 0.0);
    for (double g : tape.bias_grads[i].data()) EXPECT_EQ(g, 0.0);
    EXPECT_EQ(tape.weight_grads[i].shape(), net.layers()[i].weights.shape());
  }
}

TEST(Backward, ScalarDenseGradientIsInput) {
  Network<double> net({LayerSpec::dense(1, 1, Activation::identity, false)});
  net.layers()[0].weights[0] = 0.7;
  net.forward(Tensor<double>({1}, {2.0}));
  const auto tape = net.backward(Tensor<double>({1}, {1.0}));
  EXPECT_DOUBLE_EQ(tape.weight_grads[0][0], 2.0);
}

TEST(Backward, BeforeForwardIsStateError) {
  Network<double> net({LayerSpec::dense(2, 2, Activation::relu)});
  EXPECT_THROW(net.backward(Tensor<double>({2})), StateError);
}

TEST(Backward, RandomThreeLayerNetsMatchFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    Network<double> net({LayerSpec::conv2d(5, 6, 2, 3, 3, 2, 3, Activation::relu, Padding::same),
                         LayerSpec::dense(27, 7, Activation::sigmoid), LayerSpec::dense(7, 3, Activation::identity)});
    randomize(net, rng);
    const auto r = grad_check(net, random_tensor({5, 6, 2}, rng), 1e-4);
    EXPECT_LT(r.max_relative_error, 1e-4) << "seed " << seed;
    EXPECT_GT(r.checked, 0.95 * double(net.parameter_count())) << "seed " << seed;
  }
}

TEST(MaeLoss, Examples) {
  Tensor<double> a({2, 3}, 0.25);
  EXPECT_EQ(mae_loss(a, a).first, 0.0);
  EXPECT_DOUBLE_EQ(mae_loss(Tensor<double>({4, 5}, 1.0), Tensor<double>({4, 5}, 0.5)).first, 0.5);
  const auto [loss, grad] = mae_loss(Tensor<double>({2}, {0.0, 1.0}), Tensor<double>({2}, {0.5, 0.5}));
  EXPECT_DOUBLE_EQ(loss, 0.5);
  EXPECT_EQ(grad.data(), (std::vector<double>{-0.5, 0.5}));
  EXPECT_EQ(mae_loss(a, a).second.data(), std::vector<double>(6, 0.0));
  EXPECT_THROW(mae_loss(Tensor<double>({2}), Tensor<double>({3})), ConfigError);
}

TEST(Sgd, StepArithmetic) {
  Network<double> net({LayerSpec::dense(1, 1, Activation::identity, false)});
  net.layers()[0].weights[0] = 1.0;
  GradientTape<double> tape{{Tensor<double>({1, 1}, {2.0})}, {Tensor<double>()}};
  sgd_step(net, tape, 0.0);
  EXPECT_EQ(net.layers()[0].weights[0], 1.0);
  sgd_step(net, tape, 0.1);
  EXPECT_DOUBLE_EQ(net.layers()[0].weights[0], 0.8);
}

TEST(Sgd, QuadraticConvergesAtGeometricRate) {
  // L = (w - 3)^2, w_{k+1} = 0.8 w_k + 0.6, so |w_k - 3| = 3 * 0.8^k.
  Network<double> net({LayerSpec::dense(1, 1, Activation::identity, false)});
  for (int k = 0; k < 20; ++k) {
    const auto y = net.forward(Tensor<double>({1}, {1.0}));
    sgd_step(net, net.backward(Tensor<double>({1}, {2.0 * (y[0] - 3.0)})), 0.1);
  }
  const double w = net.layers()[0].weights[0];
  EXPECT_NEAR(std::abs(w - 3.0), 3.0 * std::pow(0.8, 20), 1e-12);
  EXPECT_LT(std::abs(w - 3.0), 0.05);
}

TEST(Sgd, NonFiniteGradientNamesLayer) {
  Network<double> net({LayerSpec::dense(1, 1, Activation::identity), LayerSpec::dense(1, 1, Activation::identity)});
  GradientTape<double> tape{{Tensor<double>({1, 1}), Tensor<double>({1, 1}, {NAN})},
                            {Tensor<double>({1}), Tensor<double>({1})}};
  try {
    sgd_step(net, tape, 0.1);
    FAIL();
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("layer 1"), std::string::npos);
  }
}

TEST(Sgd, SmallStepDecreasesLoss) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    Network<double> net({LayerSpec::dense(4, 6, Activation::sigmoid), LayerSpec::dense(6, 3, Activation::identity)});
    randomize(net, rng);
    const auto x = random_tensor({4}, rng);
    const auto target = random_tensor({3}, rng);
    auto loss = [&] {
      const auto y = net.infer(x);
      double l = 0;
      for (std::size_t i = 0; i < 3; ++i) l += 0.5 * (y[i] - target[i]) * (y[i] - target[i]);
      return l;
    };
    const double before = loss();
    auto y = net.forward(x);
    for (std::size_t i = 0; i < 3; ++i) y[i] -= target[i];
    sgd_step(net, net.backward(y), 1e-3);
    EXPECT_LT(loss(), before);
  }
}

TEST(ParameterCount, ControllerTopologyWithoutBiasesIs2208) {
  Network<double> net({LayerSpec::dense(128, 16, Activation::sigmoid, false),
                       LayerSpec::dense(16, 8, Activation::sigmoid, false),
                       LayerSpec::dense(8, 4, Activation::sigmoid, false)});
  EXPECT_EQ(net.parameter_count(), 2208u);
  Network<double> biased({LayerSpec::dense(128, 16, Activation::sigmoid), LayerSpec::dense(16, 8, Activation::sigmoid)});
  EXPECT_EQ(biased.parameter_count(), 128u * 16 + 16 + 16 * 8 + 8);
}

TEST(GradCheck, IdentityLayer) {
  Network<double> net({LayerSpec::dense(3, 3, Activation::identity, false)});
  for (std::size_t i = 0; i < 3; ++i) net.layers()[0].weights[i * 3 + i] = 1.0;
  EXPECT_LT(grad_check(net, Tensor<double>({3}, {1, 2, 3}), 1e-4).max_relative_error, 1e-6);
}

TEST(GradCheck, ControllerTopology) {
  std::mt19937_64 rng(2208);
  Network<double> net({LayerSpec::dense(128, 16, Activation::sigmoid, false),
                       LayerSpec::dense(16, 8, Activation::sigmoid, false),
                       LayerSpec::dense(8, 4, Activation::sigmoid, false)});
  randomize(net, rng);
  const auto r = grad_check(net, random_tensor({128}, rng, 0.0, 1.0), 1e-4);
  EXPECT_LT(r.max_relative_error, 1e-4);
  EXPECT_EQ(r.checked, 2208u);
}

TEST(GradCheck, MiniatureConvDenseNet) {
  std::mt19937_64 rng(8);
  Network<double> net({LayerSpec::conv2d(8, 8, 3, 3, 3, 2, 4, Activation::relu, Padding::same),
                       LayerSpec::dense(64, 10, Activation::relu), LayerSpec::dense(10, 8 * 8 * 3, Activation::sigmoid)});
  net.init_glorot(rng);
  for (auto& l : net.layers())
    for (auto& b : l.bias.data()) b = 0.05;
  const auto r = grad_check(net, random_tensor({8, 8, 3}, rng, 0.0, 1.0), 1e-4);
  EXPECT_LT(r.max_relative_error, 1e-4);
  EXPECT_GT(r.checked, 0.95 * double(net.parameter_count()));
}

TEST(GradCheck, RejectsNonPositiveEpsilon) {
  Network<double> net({LayerSpec::dense(1, 1, Activation::identity)});
  EXPECT_THROW(grad_check(net, Tensor<double>({1}), 0.0), ConfigError);
}

TEST(Serialization, RoundTripIsBitExact) {
  std::mt19937_64 rng(99);
  const auto path = (std::filesystem::temp_directory_path() / "cevo_roundtrip.bin").string();
  for (int trial = 0; trial < 5; ++trial) {
    Network<double> net({LayerSpec::conv2d(7, 9, 3, 3, 4, 2, 5, Activation::relu, trial % 2 ? Padding::same : Padding::valid),
                         LayerSpec::dense(trial % 2 ? 100 : 45, 4, Activation::sigmoid, trial % 3 == 0)});
    net.init_glorot(rng);
    for (auto& b : net.layers()[0].bias.data()) b = std::ldexp(double(rng() % 1000), -int(rng() % 40));
    save_network(net, path);
    const auto back = load_network(path);
    EXPECT_TRUE(back == net);
    BinaryWriter a, b;
    write_network(a, net);
    write_network(b, back);
    EXPECT_EQ(a.buffer(), b.buffer());
    EXPECT_EQ(a.buffer().substr(0, 4), "CEVO");
  }
  std::filesystem::remove(path);
}

TEST(Serialization, RejectsCorruptData) {
  Network<double> net({LayerSpec::dense(2, 2, Activation::relu)});
  BinaryWriter w;
  write_network(w, net);
  std::string bad = w.buffer();
  bad[0] = 'X';
  BinaryReader r1(bad);
  EXPECT_THROW(read_network(r1), FormatError);
  BinaryReader r2(w.buffer().substr(0, w.buffer().size() - 3));
  EXPECT_THROW(read_network(r2), FormatError);
}
