#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "fedala/data.hpp"
#include "fedala/error.hpp"
#include "fedala/model.hpp"
#include "oracles.hpp"

namespace fedala {
namespace {

ModelArch linear(std::size_t d, std::size_t c) {
  ModelArch a;
  a.input_dim = d;
  a.num_classes = c;
  return a;
}

Batch batch_of(std::vector<double> x, std::vector<int> y, std::size_t d) {
  Batch b;
  b.features = std::move(x);
  b.labels = std::move(y);
  b.input_dim = d;
  return b;
}

TEST(ForwardLoss, ZeroParamsGiveLogC) {
  const ModelArch a = linear(3, 4);
  const auto r = forward_loss(a, make_params(a), batch_of({1, 2, 3}, {2}, 3));
  EXPECT_NEAR(r.loss, std::log(4.0), 1e-15);
  EXPECT_NEAR(r.loss, 1.386294, 1e-6);
}

TEST(ForwardLoss, ConfidentCorrectLogitsApproachZero) {
  const ModelArch a = linear(1, 2);
  ModelParams p = make_params(a);
  p.layers[0].data = {-50.0, 50.0};
  EXPECT_LT(forward_loss(a, p, batch_of({1}, {1}, 1)).loss, 1e-40);
}

TEST(ForwardLoss, LogisticByHand) {
  // logits (0, 1) for x = 1: loss = -log(e / (1 + e)) = ln(1 + e^-1)
  const ModelArch a = linear(1, 2);
  ModelParams p = make_params(a);
  p.layers[0].data = {0.0, 1.0};
  const double loss = forward_loss(a, p, batch_of({1}, {1}, 1)).loss;
  EXPECT_NEAR(loss, std::log1p(std::exp(-1.0)), 1e-15);
  EXPECT_NEAR(loss, 0.313262, 1e-6);
}

TEST(ForwardLoss, LargeLogitsStayFinite) {
  const ModelArch a = linear(1, 2);
  ModelParams p = make_params(a);
  p.layers[0].data = {1e4, -1e4};
  const double loss = forward_loss(a, p, batch_of({1}, {1}, 1)).loss;
  EXPECT_NEAR(loss, 2e4, 1e-9);
}

TEST(ForwardLoss, MatchesLonghandReference) {
  for (std::uint32_t s = 0; s < 30; ++s) {
    const auto in = testing::random_instance(s % 2 ? ArchKind::kMlp1Hidden : ArchKind::kLinearSoftmax, s);
    EXPECT_NEAR(forward_loss(in.arch, in.params, in.batch).loss,
                testing::reference_loss(in.arch, in.params, in.batch), 1e-12);
  }
}

TEST(ForwardLoss, RejectsBadInput) {
  const ModelArch a = linear(2, 3);
  const ModelParams p = make_params(a);
  EXPECT_THROW(forward_loss(a, p, batch_of({}, {}, 2)), InvalidArgument);
  EXPECT_THROW(forward_loss(a, p, batch_of({1, 2}, {3}, 2)), InvalidArgument);
  EXPECT_THROW(forward_loss(a, p, batch_of({1, 2, 3}, {0}, 3)), InvalidArgument);
  EXPECT_THROW(forward_loss(a, p, batch_of({1, NAN}, {0}, 2)), NumericError);
  ModelParams bad = p;
  bad.layers[1].data[0] = std::numeric_limits<double>::infinity();
  EXPECT_THROW(forward_loss(a, bad, batch_of({1, 2}, {0}, 2)), NumericError);
  ModelArch m = a;
  m.kind = ArchKind::kMlp1Hidden;
  m.hidden_dim = 2;
  EXPECT_THROW(forward_loss(m, p, batch_of({1, 2}, {0}, 2)), InvalidArgument);
}

TEST(Backward, MatchesCentralDifferences) {
  int checked = 0;
  for (std::uint32_t s = 0; checked < 60; ++s) {
    const auto in = testing::random_instance(s % 2 ? ArchKind::kMlp1Hidden : ArchKind::kLinearSoftmax, s);
    if (testing::min_relu_margin(in.arch, in.params, in.batch) < 1e-4) continue;
    const auto r = forward_loss(in.arch, in.params, in.batch);
    const ModelParams g = backward(in.params, r.cache);
    const ModelParams fd = testing::central_difference_wide(in.params, [&](const testing::Layers& q) {
      return testing::reference_loss(in.arch, q, in.batch);
    });
    for (std::size_t t = 0; t < g.layers.size(); ++t)
      for (std::size_t i = 0; i < g.layers[t].size(); ++i)
        ASSERT_LT(testing::rel_err(g.layers[t].data[i], fd.layers[t].data[i], 1e-6), 1e-4)
            << "seed " << s << " tensor " << g.layers[t].name << " element " << i;
    ++checked;
  }
}

TEST(Backward, SymmetricBatchHasZeroBiasGradient) {
  const ModelArch a = linear(2, 2);
  const ModelParams p = make_params(a);
  const auto r = forward_loss(a, p, batch_of({1, 2, -1, -2}, {0, 1}, 2));
  EXPECT_EQ(backward(p, r.cache).layers[1].data, (std::vector<double>{0.0, 0.0}));
}

TEST(Backward, DuplicatedBatchLeavesGradientUnchanged) {
  const auto in = testing::random_instance(ArchKind::kMlp1Hidden, 5);
  Batch twice = in.batch;
  twice.features.insert(twice.features.end(), in.batch.features.begin(), in.batch.features.end());
  twice.labels.insert(twice.labels.end(), in.batch.labels.begin(), in.batch.labels.end());
  const ModelParams g1 = backward(in.params, forward_loss(in.arch, in.params, in.batch).cache);
  const ModelParams g2 = backward(in.params, forward_loss(in.arch, in.params, twice).cache);
  for (std::size_t t = 0; t < g1.layers.size(); ++t)
    for (std::size_t i = 0; i < g1.layers[t].size(); ++i)
      EXPECT_NEAR(g1.layers[t].data[i], g2.layers[t].data[i], 1e-14);
}

TEST(Backward, StaleOrMissingCacheThrows) {
  const auto in = testing::random_instance(ArchKind::kLinearSoftmax, 3);
  auto r = forward_loss(in.arch, in.params, in.batch);
  ModelParams moved = in.params;
  moved.layers[0].data[0] += 1.0;
  EXPECT_THROW(backward(moved, r.cache), InvalidState);
  EXPECT_THROW(backward(in.params, ForwardCache{}), InvalidState);
}

TEST(SgdStep, Examples) {
  ModelParams p;
  p.layers.push_back(LayerTensor("x", {1}, std::vector<double>{1.0}));
  ModelParams g = p;
  g.layers[0].data = {2.0};
  ModelParams q = p;
  sgd_step(q, g, 0.0);
  EXPECT_EQ(q, p);
  sgd_step(q, g, 0.1);
  EXPECT_DOUBLE_EQ(q.layers[0].data[0], 0.8);
  EXPECT_THROW(sgd_step(q, g, -0.1), InvalidArgument);
}

TEST(SgdStep, TwoStepsEqualOneDoubledStep) {
  ModelParams p;
  p.layers.push_back(LayerTensor("x", {3}, std::vector<double>{0.5, -1.0, 2.0}));
  ModelParams g = p;
  g.layers[0].data = {0.25, 0.5, -0.75};
  ModelParams g2 = g;
  for (auto& v : g2.layers[0].data) v *= 2.0;
  ModelParams a = p, b = p;
  sgd_step(a, g, 0.5);
  sgd_step(a, g, 0.5);
  sgd_step(b, g2, 0.5);
  EXPECT_EQ(a, b);  // dyadic values: exact in binary
}

TEST(InitParams, DeterministicAndBounded) {
  ModelArch a;
  a.kind = ArchKind::kMlp1Hidden;
  a.input_dim = 8;
  a.hidden_dim = 6;
  a.num_classes = 3;
  const ModelParams p = init_params(a, 42);
  EXPECT_EQ(p, init_params(a, 42));
  EXPECT_NE(p, init_params(a, 43));
  const double bound1 = std::sqrt(6.0 / (8 + 6));
  for (double v : p.layers[0].data) EXPECT_LE(std::abs(v), bound1);
  for (double v : p.layers[1].data) EXPECT_EQ(v, 0.0);
  for (double v : p.layers[3].data) EXPECT_EQ(v, 0.0);
}

TEST(Evaluate, AccuracyAndTieBreak) {
  const ModelArch a = linear(1, 3);
  const ModelParams p = make_params(a);  // all logits tie: predicts class 0
  const std::vector<double> x = {1, 2, 3, 4};
  const std::vector<int> y = {0, 0, 1, 2};
  const EvalResult r = evaluate(a, p, x, y);
  EXPECT_EQ(r.count, 4u);
  EXPECT_DOUBLE_EQ(r.accuracy, 0.5);
  EXPECT_NEAR(r.loss, std::log(3.0), 1e-15);
  const std::vector<int> bad = {0, 0, 1, 3};
  EXPECT_THROW(evaluate(a, p, x, bad), InvalidArgument);
}

TEST(CentralTraining, SeparableSyntheticDataIsLearned) {
  // Plain full-data SGD on a linear model; separability check for the generator.
  const Dataset d = gen_synthetic(4, 8, 100, 10.0, 9);
  const ModelArch a = linear(8, 4);
  ModelParams p = init_params(a, 1);
  std::vector<std::size_t> idx(d.size());
  for (int epoch = 0; epoch < 20; ++epoch)
    for (std::size_t start = 0; start < d.size(); start += 10) {
      idx.clear();
      for (std::size_t i = start; i < std::min(d.size(), start + 10); ++i) idx.push_back((i * 37) % d.size());
      const Batch b = make_batch(d, idx);
      sgd_step(p, backward(p, forward_loss(a, p, b).cache), 0.05);
    }
  EXPECT_GE(evaluate(a, p, d.features, d.labels).accuracy, 0.95);
}

}  // namespace
}  // namespace fedala
