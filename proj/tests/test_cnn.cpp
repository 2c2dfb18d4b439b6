#include <cmath>

#include <gtest/gtest.h>

#include "support.hpp"
#include "websed/cnn.hpp"

using namespace websed;
using websed::testing::tiny_cnn;

namespace {

std::vector<double> random_input(const CnnConfig& cfg, std::size_t batch, std::uint64_t seed) {
  SplitMix64 rng(seed);
  std::vector<double> x(batch * cfg.input_size());
  for (auto& v : x) v = rng.uniform(-1.0, 1.0);
  return x;
}

double mean_cross_entropy(const Network<double>& net, const std::vector<double>& x, std::size_t batch,
                          const std::vector<std::size_t>& labels) {
  Activations<double> act;
  const auto probs = forward<double>(net, x, batch, Mode::Infer, nullptr, act);
  double ce = 0.0;
  for (std::size_t b = 0; b < batch; ++b) ce -= std::log(probs[b * net.config.num_classes + labels[b]]);
  return ce / static_cast<double>(batch);
}

}  // namespace

TEST(Cnn, ReferenceStageShapes) {
  CnnConfig cfg;
  const auto s = cfg.stages();
  const auto same = [](Shape3 a, Shape3 b) { return a.channels == b.channels && a.height == b.height && a.width == b.width; };
  EXPECT_TRUE(same(s.input, {2, 60, 101}));
  EXPECT_TRUE(same(s.conv1, {80, 4, 96}));
  EXPECT_TRUE(same(s.pool1, {80, 1, 32}));
  EXPECT_TRUE(same(s.conv2, {80, 1, 30}));
  EXPECT_TRUE(same(s.pool2, {80, 1, 10}));
  EXPECT_EQ(s.flatten, 800u);
  const auto sizes = block_sizes(cfg);
  EXPECT_EQ(sizes[kConv1W], 80u * 2 * 57 * 6);
  EXPECT_EQ(sizes[kConv2W], 80u * 80 * 1 * 3);
  EXPECT_EQ(sizes[kFc1W], 800u * 5000);
  EXPECT_EQ(sizes[kFc2W], 5000u * 5000);
  EXPECT_EQ(sizes[kOutW], 5000u * 10);
  EXPECT_EQ(sizes[kOutB], 10u);
}

TEST(Cnn, InvalidShapesAreRejected) {
  auto cfg = tiny_cnn();
  cfg.conv1.kernel_h = 13;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = tiny_cnn();
  cfg.num_classes = 1;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = tiny_cnn();
  cfg.dropout_p = 1.0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = tiny_cnn();
  cfg.pool2.pool_w = 4;
  EXPECT_THROW(cfg.validate(), Error);
}

TEST(Cnn, HeUniformInitialization) {
  auto cfg = tiny_cnn();
  cfg.fc_width = 64;
  const auto net = make_network<double>(cfg, 5);
  const auto s = net.shapes;
  const std::array<double, kBlockCount> fan_in = {2.0 * 9 * 4, 1, 4.0 * 1 * 2, 1, double(s.flatten), 1, 64, 1, 64, 1};
  for (std::size_t b = 0; b < kBlockCount; ++b) {
    ASSERT_EQ(net.params[b].size(), block_sizes(cfg)[b]);
    if (!is_weight_block(b)) {
      for (double v : net.params[b]) EXPECT_EQ(v, 0.0);
      continue;
    }
    const double limit = std::sqrt(6.0 / fan_in[b]);
    double sq = 0.0;
    for (double v : net.params[b]) {
      EXPECT_LT(std::abs(v), limit);
      sq += v * v;
    }
    if (net.params[b].size() >= 500) {
      // Uniform(-L, L) has variance L^2 / 3 = 2 / fan_in.
      EXPECT_NEAR(sq / net.params[b].size(), 2.0 / fan_in[b], 0.15 * 2.0 / fan_in[b]) << kBlockNames[b];
    }
  }
  EXPECT_EQ(make_network<double>(cfg, 5).params, net.params);
  EXPECT_NE(make_network<double>(cfg, 6).params, net.params);
}

TEST(Cnn, SoftmaxRowsSumToOne) {
  const auto cfg = tiny_cnn(4);
  const auto net = make_network<double>(cfg, 1);
  Activations<double> act;
  const auto probs = forward<double>(net, random_input(cfg, 6, 2), 6, Mode::Infer, nullptr, act);
  ASSERT_EQ(probs.size(), 24u);
  for (std::size_t b = 0; b < 6; ++b) {
    double s = 0.0;
    for (std::size_t k = 0; k < 4; ++k) {
      EXPECT_GT(probs[b * 4 + k], 0.0);
      s += probs[b * 4 + k];
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  EXPECT_THROW(forward<double>(net, random_input(cfg, 6, 2), 5, Mode::Infer, nullptr, act), Error);
}

TEST(Cnn, GradientsMatchFiniteDifferences) {
  const auto cfg = tiny_cnn(3);
  auto net = make_network<double>(cfg, 17);
  // Non-zero biases so every ReLU sees both signs.
  SplitMix64 rng(99);
  for (std::size_t b = 0; b < kBlockCount; ++b)
    if (!is_weight_block(b))
      for (auto& v : net.params[b]) v = rng.uniform(-0.1, 0.1);
  const std::size_t batch = 4;
  const auto x = random_input(cfg, batch, 3);
  const std::vector<std::size_t> labels = {0, 2, 1, 2};

  Activations<double> act;
  forward<double>(net, x, batch, Mode::Infer, nullptr, act);
  const auto r = backward<double>(net, act, labels, 0.0);
  EXPECT_NEAR(r.data_loss, mean_cross_entropy(net, x, batch, labels), 1e-12);

  const double h = 1e-6;
  double worst = 0.0;
  for (std::size_t b = 0; b < kBlockCount; ++b) {
    ASSERT_EQ(r.grads[b].size(), net.params[b].size());
    for (std::size_t i = 0; i < net.params[b].size(); ++i) {
      const double keep = net.params[b][i];
      net.params[b][i] = keep + h;
      const double up = mean_cross_entropy(net, x, batch, labels);
      net.params[b][i] = keep - h;
      const double down = mean_cross_entropy(net, x, batch, labels);
      net.params[b][i] = keep;
      const double numeric = (up - down) / (2 * h);
      const double analytic = r.grads[b][i];
      const double err = std::abs(numeric - analytic) / std::max(1e-4, std::abs(numeric) + std::abs(analytic));
      worst = std::max(worst, err);
      EXPECT_LT(err, 1e-4) << kBlockNames[b] << "[" << i << "] numeric " << numeric << " analytic " << analytic;
    }
  }
  RecordProperty("worst_relative_error", std::to_string(worst));
}

TEST(Cnn, LossIncludesL2Penalty) {
  const auto cfg = tiny_cnn(3);
  const auto net = make_network<double>(cfg, 4);
  const auto x = random_input(cfg, 2, 8);
  Activations<double> act;
  forward<double>(net, x, 2, Mode::Infer, nullptr, act);
  const std::vector<std::size_t> labels = {1, 0};
  const auto r = backward<double>(net, act, labels, 0.01);
  double sq = 0.0;
  for (std::size_t b = 0; b < kBlockCount; ++b)
    if (b % 2 == 0)
      for (double w : net.params[b]) sq += w * w;
  EXPECT_NEAR(r.loss - r.data_loss, 0.01 * sq, 1e-12);
  const auto plain = backward<double>(net, act, labels, 0.0);
  EXPECT_EQ(plain.grads, r.grads);
}

TEST(Cnn, DropoutOnlyTouchesFullyConnectedLayers) {
  const auto cfg = tiny_cnn(3, 0.5);
  auto wide = cfg;
  wide.fc_width = 200;
  const auto net = make_network<double>(wide, 2);
  const auto x = random_input(wide, 3, 1);
  Activations<double> train_act, infer_act;
  SplitMix64 rng(10);
  forward<double>(net, x, 3, Mode::Train, &rng, train_act);
  forward<double>(net, x, 3, Mode::Infer, nullptr, infer_act);
  EXPECT_EQ(train_act.conv1, infer_act.conv1);
  EXPECT_EQ(train_act.pool1, infer_act.pool1);
  EXPECT_EQ(train_act.conv2, infer_act.conv2);
  EXPECT_EQ(train_act.pool2, infer_act.pool2);
  EXPECT_EQ(train_act.fc1, infer_act.fc1);
  EXPECT_TRUE(infer_act.mask1.empty());
  ASSERT_EQ(train_act.mask1.size(), 600u);
  std::size_t dropped = 0;
  for (const auto* mask : {&train_act.mask1, &train_act.mask2})
    for (double m : *mask) {
      EXPECT_TRUE(m == 0.0 || m == 2.0);
      dropped += m == 0.0;
    }
  EXPECT_NEAR(dropped / 1200.0, 0.5, 0.06);
  EXPECT_THROW(forward<double>(net, x, 3, Mode::Train, nullptr, train_act), Error);
}

TEST(Cnn, InferenceIsDeterministicAcrossThreadCounts) {
  const auto cfg = tiny_cnn(5);
  const auto net = make_network<float>(cfg, 12);
  SplitMix64 rng(4);
  std::vector<float> x(9 * cfg.input_size());
  for (auto& v : x) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  Activations<float> a1, a2, a3;
  const auto p1 = forward<float>(net, x, 9, Mode::Infer, nullptr, a1, 1);
  const std::vector<float> first(p1.begin(), p1.end());
  const auto p2 = forward<float>(net, x, 9, Mode::Infer, nullptr, a2, 1);
  const auto p3 = forward<float>(net, x, 9, Mode::Infer, nullptr, a3, 4);
  EXPECT_EQ(first, std::vector<float>(p2.begin(), p2.end()));
  EXPECT_EQ(first, std::vector<float>(p3.begin(), p3.end()));
}

TEST(Cnn, ParallelBackwardMatchesSerial) {
  const auto cfg = tiny_cnn(3);
  const auto net = make_network<float>(cfg, 21);
  SplitMix64 rng(5);
  std::vector<float> x(7 * cfg.input_size());
  for (auto& v : x) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  const std::vector<std::size_t> labels = {0, 1, 2, 0, 1, 2, 0};
  Activations<float> a1, a4;
  forward<float>(net, x, 7, Mode::Infer, nullptr, a1, 1);
  forward<float>(net, x, 7, Mode::Infer, nullptr, a4, 4);
  EXPECT_EQ(backward<float>(net, a1, labels, 0.001, 1).grads, backward<float>(net, a4, labels, 0.001, 4).grads);
}

TEST(Sgd, NesterovMatchesLookaheadForm) {
  // Scalar quadratic f(w) = a w^2 / 2. The classic form evaluates the
  // gradient at w + mu v; sgd_step tracks phi = w + mu v directly.
  const double a = 3.0, lr = 0.05, mu = 0.9;
  double w = 2.0, v = 0.0;
  Parameters<double> params, grads, velocity;
  for (std::size_t b = 0; b < kBlockCount; ++b) {
    params[b] = {2.0};
    grads[b] = {0.0};
    velocity[b] = {0.0};
  }
  for (int step = 0; step < 40; ++step) {
    const double v_next = mu * v - lr * a * (w + mu * v);
    w += v_next;
    v = v_next;
    for (std::size_t b = 0; b < kBlockCount; ++b) grads[b][0] = a * params[b][0];
    sgd_step(params, grads, velocity, {lr, mu, 0.0});
    for (std::size_t b = 0; b < kBlockCount; ++b) ASSERT_NEAR(params[b][0], w + mu * v, 1e-12) << step;
  }
}

TEST(Sgd, ZeroGradientIsAFixedPoint) {
  auto net = make_network<double>(tiny_cnn(), 3);
  const auto before = net.params;
  auto grads = Parameters<double>::zeros_like(net.params);
  auto velocity = Parameters<double>::zeros_like(net.params);
  for (int i = 0; i < 5; ++i) sgd_step(net.params, grads, velocity, {0.1, 0.9, 0.0});
  EXPECT_EQ(net.params, before);
}

TEST(Sgd, WeightDecayShrinksWeightsOnly) {
  auto net = make_network<double>(tiny_cnn(), 3);
  for (auto& v : net.params[kFc1B]) v = 0.5;
  const auto before = net.params;
  auto grads = Parameters<double>::zeros_like(net.params);
  auto velocity = Parameters<double>::zeros_like(net.params);
  const double lr = 0.1, mu = 0.9, l2 = 0.01;
  sgd_step(net.params, grads, velocity, {lr, mu, l2});
  // g = 2 l2 w, v = -lr g, w' = w + mu v - lr g = w (1 - 2 l2 lr (1 + mu)).
  const double factor = 1.0 - 2.0 * l2 * lr * (1.0 + mu);
  for (std::size_t b = 0; b < kBlockCount; ++b)
    for (std::size_t i = 0; i < net.params[b].size(); ++i)
      ASSERT_NEAR(net.params[b][i], is_weight_block(b) ? before[b][i] * factor : before[b][i], 1e-15);
  grads[kOutB].pop_back();
  EXPECT_THROW(sgd_step(net.params, grads, velocity, {lr, mu, l2}), Error);
}
