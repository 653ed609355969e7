#include <gtest/gtest.h>

#include <cmath>

#include "cwmp/model.hpp"
#include "support.hpp"

using namespace cwmp;

TEST(Layout, FlatLengthIsSumOfLayerCounts) {
  const auto layers = mlp_layers(5, {4, 3}, 2);
  ModelParams p(layers);
  EXPECT_EQ(p.size(), (5 * 4 + 4) + (4 * 3 + 3) + (3 * 2 + 2));
  EXPECT_EQ(p.layer_offset(0), 0u);
  EXPECT_EQ(p.layer_offset(1), 24u);
  EXPECT_EQ(p.layer_offset(2), 39u);
}

TEST(Layout, LayerOfIsTotalAndContiguous) {
  ModelParams p(mlp_layers(3, {2}, 4));
  std::size_t prev = 0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    const auto l = p.layer_of(j);
    EXPECT_GE(l, prev);
    EXPECT_GE(j, p.layer_offset(l));
    prev = l;
  }
  EXPECT_EQ(p.layer_of(p.size() - 1), 1u);
  EXPECT_THROW(p.layer_of(p.size()), ConfigError);
}

TEST(Layout, WeightsAreRowMajorOutByInThenBiases) {
  std::vector<LayerSpec> layers{{2, 3, Activation::Identity}};
  LayerTensors t{Matrix(3, 2), {7, 8, 9}};
  for (std::size_t o = 0; o < 3; ++o)
    for (std::size_t i = 0; i < 2; ++i) t.weights(o, i) = 10.0 * static_cast<double>(o) + static_cast<double>(i);
  const auto p = ModelParams::flatten(layers, {t});
  const std::vector<double> expected{0, 1, 10, 11, 20, 21, 7, 8, 9};
  EXPECT_EQ(std::vector<double>(p.values().begin(), p.values().end()), expected);
}

TEST(Layout, FlattenUnflattenRoundTripProperty) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const auto p = test::random_model(rng, test::uniform_index(rng, 1, 6), test::uniform_index(rng, 2, 5));
    const auto tensors = p.unflatten();
    EXPECT_EQ(ModelParams::flatten(p.layers(), tensors), p);
    EXPECT_EQ(ModelParams::flatten(p.layers(), tensors).unflatten(), tensors);
  }
}

TEST(Layout, RejectsBadShapes) {
  EXPECT_THROW(ModelParams(std::vector<LayerSpec>{}), ConfigError);
  EXPECT_THROW(ModelParams(std::vector<LayerSpec>{{2, 3, Activation::Relu}}), ConfigError);
  EXPECT_THROW(ModelParams(mlp_layers(2, {}, 2), std::vector<double>(5)), ConfigError);
  EXPECT_THROW(ModelParams(std::vector<LayerSpec>{{2, 3, Activation::Relu}, {4, 2, Activation::Identity}}),
               ConfigError);
}

TEST(Forward, ZeroWeightsGiveLogOfClassCount) {
  for (std::size_t C : {2u, 3u, 10u}) {
    ModelParams p(mlp_layers(4, {}, C));
    Rng rng(C);
    const auto b = test::random_batch(7, 4, C, rng);
    EXPECT_DOUBLE_EQ(forward(p, b).loss, std::log(static_cast<double>(C)));
  }
}

TEST(Forward, LargeMarginGivesNearZeroLoss) {
  // identity-like weights map one-hot inputs to logits with margin 20
  ModelParams p(mlp_layers(3, {}, 3));
  for (std::size_t c = 0; c < 3; ++c) p.values()[c * 3 + c] = 20.0;
  Batch b{Matrix(3, 3), {0, 1, 2}};
  for (std::size_t c = 0; c < 3; ++c) b.inputs(c, c) = 1.0;
  EXPECT_LT(forward(p, b).loss, 1e-3);
}

TEST(Forward, MatchesStraightLineReimplementation) {
  Rng rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = test::random_model(rng, 6, 4);
    const auto b = test::random_batch(9, 6, 4, rng);
    EXPECT_NEAR(forward(p, b).loss, test::reference_loss(p, b), 1e-12);
  }
}

TEST(Forward, ErrorsOnBadBatches) {
  ModelParams p(mlp_layers(3, {}, 2));
  EXPECT_THROW(forward(p, Batch{Matrix(0, 3), {}}), InputError);
  EXPECT_THROW(forward(p, Batch{Matrix(1, 4), {0}}), ConfigError);
  EXPECT_THROW(forward(p, Batch{Matrix(1, 3), {2}}), InputError);
  EXPECT_THROW(backward(p, Batch{Matrix(0, 3), {}}), InputError);
}

TEST(Backward, ConvexOptimumHasZeroGradient) {
  // Every input appears once with each label, so zero logits are optimal for
  // a single linear layer.
  ModelParams p(mlp_layers(3, {}, 4));
  Rng rng(5);
  Batch b{Matrix(8, 3), {}};
  for (std::size_t r = 0; r < 8; ++r) {
    const std::size_t base = (r / 4) * 4;
    if (r == base)
      for (std::size_t i = 0; i < 3; ++i) b.inputs(r, i) = rng.normal();
    else
      for (std::size_t i = 0; i < 3; ++i) b.inputs(r, i) = b.inputs(base, i);
    b.labels.push_back(static_cast<int>(r % 4));
  }
  const auto g = backward(p, b);
  double norm = 0.0;
  for (double v : g.values) norm += v * v;
  EXPECT_LT(std::sqrt(norm), 1e-6);
}

TEST(Backward, MatchesCentralFiniteDifferences) {
  Rng rng(2024);
  int checked = 0;
  while (checked < 30) {
    const auto p = test::random_model(rng, 4, 3);
    const auto b = test::random_batch(5, 4, 3, rng);
    if (test::min_hidden_preactivation(p, b) < 1e-3) continue;
    const auto g = backward(p, b);
    const auto fd = test::finite_difference_gradient(p, b);
    for (std::size_t j = 0; j < g.size(); ++j) EXPECT_LT(test::relative_error(g[j], fd[j]), 1e-4) << "j=" << j;
    ++checked;
  }
}

TEST(Backward, DuplicatingTheBatchLeavesTheGradientUnchanged) {
  Rng rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    const auto p = test::random_model(rng, 3, 3);
    const auto b = test::random_batch(4, 3, 3, rng);
    Batch twice{Matrix(8, 3), {}};
    for (std::size_t r = 0; r < 8; ++r) {
      auto src = b.inputs.row(r % 4);
      std::copy(src.begin(), src.end(), twice.inputs.row(r).begin());
      twice.labels.push_back(b.labels[r % 4]);
    }
    const auto g1 = backward(p, b);
    const auto g2 = backward(p, twice);
    for (std::size_t j = 0; j < g1.size(); ++j) EXPECT_NEAR(g1[j], g2[j], 1e-14);
  }
}

TEST(Backward, AllEntriesFinite) {
  Rng rng(3);
  auto p = test::random_model(rng, 5, 4);
  for (auto& w : p.values()) w *= 50.0;  // saturating logits
  const auto g = backward(p, test::random_batch(6, 5, 4, rng));
  EXPECT_EQ(g.size(), p.size());
  for (double v : g.values) EXPECT_TRUE(std::isfinite(v));
}

TEST(Sgd, PlainStep) {
  ModelParams p(std::vector<LayerSpec>{{1, 1, Activation::Identity}});
  const auto [next, v] = sgd_step(p, GradientVector({1.0, 0.0}), 0.1, GradientVector(2), 0.0);
  EXPECT_DOUBLE_EQ(next.values()[0], -0.1);
  EXPECT_DOUBLE_EQ(next.values()[1], 0.0);
  EXPECT_DOUBLE_EQ(v[0], 1.0);
}

TEST(Sgd, ZeroGradientZeroStateIsAFixedPoint) {
  Rng rng(1);
  const auto p = test::random_model(rng, 3, 2);
  const auto [next, v] = sgd_step(p, GradientVector(p.size()), 0.3, GradientVector(p.size()), 0.9);
  EXPECT_EQ(next, p);
}

TEST(Sgd, MomentumUnrollsToOneThenOnePointNine) {
  ModelParams p(std::vector<LayerSpec>{{1, 1, Activation::Identity}});
  const GradientVector g({2.0, -1.0});
  const double lr = 0.1;
  const auto [p1, v1] = sgd_step(p, g, lr, GradientVector(2), 0.9);
  const auto [p2, v2] = sgd_step(p1, g, lr, v1, 0.9);
  for (std::size_t j = 0; j < 2; ++j) {
    EXPECT_NEAR(p.values()[j] - p1.values()[j], lr * g[j], 1e-15);
    EXPECT_NEAR(p1.values()[j] - p2.values()[j], lr * 1.9 * g[j], 1e-15);
  }
}

TEST(Sgd, RejectsShapeMismatchAndBadHyperparameters) {
  ModelParams p(std::vector<LayerSpec>{{1, 1, Activation::Identity}});
  EXPECT_THROW(sgd_step(p, GradientVector(3), 0.1, GradientVector(2), 0.0), ConfigError);
  EXPECT_THROW(sgd_step(p, GradientVector(2), 0.1, GradientVector(3), 0.0), ConfigError);
  EXPECT_THROW(sgd_step(p, GradientVector(2), 0.0, GradientVector(2), 0.0), ConfigError);
  EXPECT_THROW(sgd_step(p, GradientVector(2), 0.1, GradientVector(2), 1.0), ConfigError);
}

TEST(Rng, SplitStreamsAreDeterministicAndDistinct) {
  const Rng root(7);
  Rng a = root.split(3), b = root.split(3), c = root.split(4);
  const auto x = a(), y = b(), z = c();
  EXPECT_EQ(x, y);
  EXPECT_NE(x, z);
  EXPECT_EQ(root.split({1, 2}).seed(), root.split({1, 2}).seed());
  EXPECT_NE(root.split({1, 2}).seed(), root.split({2, 1}).seed());
}
