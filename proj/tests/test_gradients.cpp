#include <gtest/gtest.h>

#include "fairforest/baselines.hpp"
#include "fairforest/error.hpp"
#include "fairforest/gradients.hpp"
#include "fairforest/learner.hpp"
#include "helpers.hpp"

using namespace fairforest;

namespace {

// Central differences on every parameter, written out independently of the
// verify module.
ForestGradient central_differences(const ObliqueForest& forest,
                                   std::span<const double> x, std::size_t y,
                                   double step) {
  ForestGradient g = ForestGradient::zeros_like(forest);
  ObliqueForest probe = forest;
  for (std::size_t t = 0; t < forest.trees.size(); ++t) {
    auto params = buffers(probe.trees[t]);
    auto grads = buffers(g.trees[t]);
    for (std::size_t b = 0; b < 3; ++b) {
      for (std::size_t k = 0; k < params[b].size(); ++k) {
        const double saved = params[b][k];
        params[b][k] = saved + step;
        const double up = cross_entropy(probe, x, y);
        params[b][k] = saved - step;
        const double down = cross_entropy(probe, x, y);
        params[b][k] = saved;
        grads[b][k] = (up - down) / (2 * step);
      }
    }
  }
  return g;
}

double rel(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

double max_rel(const ForestGradient& a, const ForestGradient& b) {
  double worst = 0.0;
  for (std::size_t t = 0; t < a.trees.size(); ++t) {
    const auto ga = buffers(a.trees[t]);
    const auto gb = buffers(b.trees[t]);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t k = 0; k < ga[i].size(); ++k)
        worst = std::max(worst, rel(ga[i][k], gb[i][k]));
  }
  return worst;
}

double max_abs_diff(const ForestGradient& a, const ForestGradient& b) {
  double worst = 0.0;
  for (std::size_t t = 0; t < a.trees.size(); ++t) {
    const auto ga = buffers(a.trees[t]);
    const auto gb = buffers(b.trees[t]);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t k = 0; k < ga[i].size(); ++k)
        worst = std::max(worst, std::abs(ga[i][k] - gb[i][k]));
  }
  return worst;
}

bool all_zero(const ForestGradient& g) {
  for (const auto& t : g.trees)
    for (auto buf : buffers(t))
      for (double v : buf)
        if (v != 0.0) return false;
  return true;
}

}  // namespace

TEST(NodeGrad, Examples) {
  const std::vector<double> x = {2.0, 0.0};
  const auto [gw, gb] = node_grad(0.5, x);
  EXPECT_EQ(gw, (std::vector<double>{0.5, 0.0}));
  EXPECT_EQ(gb, 0.25);
  EXPECT_EQ(node_grad(0.0, x).second, 0.0);
  EXPECT_EQ(node_grad(1.0, x).second, 0.0);
}

TEST(NodeGrad, MatchesFiniteDifferences) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t d = 1 + rng() % 5;
    auto w = testutil::random_vector(rng, d);
    const double b = testutil::uniform(rng, -1, 1);
    const auto x = testutil::random_vector(rng, d, -2, 2);
    auto eval = [&](const std::vector<double>& ww, double bb) {
      double z = bb;
      for (std::size_t k = 0; k < d; ++k) z += ww[k] * x[k];
      return 1.0 / (1.0 + std::exp(-z));
    };
    const auto [gw, gb] = node_grad(eval(w, b), x);
    const double h = 1e-5;
    EXPECT_NEAR(gb, (eval(w, b + h) - eval(w, b - h)) / (2 * h), 1e-6);
    for (std::size_t k = 0; k < d; ++k) {
      auto up = w, down = w;
      up[k] += h;
      down[k] -= h;
      EXPECT_NEAR(gw[k], (eval(up, b) - eval(down, b)) / (2 * h), 1e-6);
    }
  }
}

TEST(Huber, Examples) {
  EXPECT_EQ(huber(0.0, 0.01), 0.0);
  EXPECT_NEAR(huber(0.005, 0.01), 1.25e-5, 1e-18);
  EXPECT_NEAR(huber(0.02, 0.01), 1.5e-4, 1e-18);
  EXPECT_NEAR(huber(-0.02, 0.01), 1.5e-4, 1e-18);
  EXPECT_EQ(huber_grad_coeff(0.0, 0.01), 0.0);
  EXPECT_EQ(huber_grad_coeff(0.02, 0.01), 0.01);
  EXPECT_EQ(huber_grad_coeff(-0.02, 0.01), -0.01);
  EXPECT_EQ(huber_grad_coeff(0.004, 0.01), 0.004);
}

TEST(Huber, ContinuousAtDelta) {
  for (double delta : {0.001, 0.01, 0.5, 2.0}) {
    // both branches give delta^2 / 2 at |F| = delta
    EXPECT_NEAR(huber(delta, delta), delta * delta / 2, 1e-12);
    // the jump across |F| = delta shrinks with the gap (slope is delta)
    for (double eps : {1e-3, 1e-6, 1e-9, 1e-12}) {
      const double bound = 2 * eps * delta * (1 + 1e-6) + 1e-15;
      EXPECT_LE(std::abs(huber(delta - eps, delta) - huber(delta + eps, delta)), bound);
      EXPECT_LE(std::abs(huber(-delta + eps, delta) - huber(-delta - eps, delta)), bound);
    }
  }
}

TEST(Huber, NonNegativeAndEven) {
  std::mt19937_64 rng(32);
  for (int i = 0; i < 1000; ++i) {
    const double F = testutil::uniform(rng, -1, 1);
    const double delta = testutil::uniform(rng, 1e-3, 0.5);
    EXPECT_GE(huber(F, delta), 0.0);
    EXPECT_EQ(huber(F, delta), huber(-F, delta));
  }
}

TEST(TaskGradient, IdenticalLeavesGiveNoRoutingGradient) {
  std::mt19937_64 rng(33);
  auto forest = testutil::random_forest(rng, TreeShape{3, 4, 3}, 2);
  for (auto& t : forest.trees)
    for (std::size_t l = 0; l < 8; ++l) {
      t.leaf(l)[0] = 0.4;
      t.leaf(l)[1] = -0.1;
      t.leaf(l)[2] = 0.7;
    }
  const auto x = testutil::random_vector(rng, 4);
  const auto g = task_gradient(forest, x, 1);
  for (const auto& t : g.trees) {
    for (double v : t.weights) EXPECT_NEAR(v, 0.0, 1e-15);
    for (double v : t.biases) EXPECT_NEAR(v, 0.0, 1e-15);
  }
}

TEST(TaskGradient, OneHotOutputHasFlatLeaves) {
  std::mt19937_64 rng(34);
  auto forest = testutil::random_forest(rng, TreeShape{2, 3, 3}, 2);
  for (auto& t : forest.trees)
    for (std::size_t l = 0; l < 4; ++l) {
      t.leaf(l)[0] = 0.0;
      t.leaf(l)[1] = 40.0;
      t.leaf(l)[2] = 0.0;
    }
  const auto x = testutil::random_vector(rng, 3);
  const auto g = task_gradient(forest, x, 1);
  for (const auto& t : g.trees)
    for (double v : t.leaves) EXPECT_NEAR(v, 0.0, 1e-3);
}

TEST(TaskGradient, MatchesCentralDifferences) {
  std::mt19937_64 rng(35);
  for (int trial = 0; trial < 60; ++trial) {
    const int h = 1 + static_cast<int>(rng() % 3);
    const std::size_t d = 1 + rng() % 5, c = 2 + rng() % 2, trees = 1 + rng() % 3;
    const auto forest = testutil::random_forest(rng, TreeShape{h, d, c}, trees);
    const auto x = testutil::random_vector(rng, d, -2, 2);
    const std::size_t y = rng() % c;
    const auto analytic = task_gradient(forest, x, y);
    const auto numeric = central_differences(forest, x, y, 1e-5);
    EXPECT_LE(max_rel(analytic, numeric), 1e-4) << "trial " << trial;
  }
}

TEST(TaskGradient, SaturatedNodesStayFinite) {
  std::mt19937_64 rng(36);
  auto forest = testutil::random_forest(rng, TreeShape{3, 2, 2}, 1);
  for (double& b : forest.trees[0].biases) b = 1000.0;
  const auto x = testutil::random_vector(rng, 2);
  const auto g = task_gradient(forest, x, 0);
  for (auto buf : buffers(g.trees[0]))
    for (double v : buf) EXPECT_TRUE(std::isfinite(v));
}

TEST(FairnessGradient, IdenticalStatisticsAndZeroLambda) {
  StoreLayout layout;
  layout.trees = 1;
  layout.nodes = 3;
  layout.dim = 2;
  AggregateStore store(layout);
  const std::vector<double> g = {0.3, -0.2};
  for (std::size_t n = 0; n < 3; ++n)
    for (std::size_t a = 0; a < 2; ++a) store.update(0, n, {a, std::nullopt}, 0.6, g, 0.1);
  const TreeShape shape{2, 2, 2};
  EXPECT_TRUE(all_zero(fairness_gradient(store, {0.01, 1.0}, shape).gradient));

  AggregateStore skewed(layout);
  skewed.update(0, 0, {0, std::nullopt}, 0.9, g, 0.1);
  skewed.update(0, 0, {1, std::nullopt}, 0.1, std::vector<double>{0.0, 0.0}, 0.0);
  EXPECT_TRUE(all_zero(fairness_gradient(skewed, {0.01, 0.0}, shape).gradient));
  EXPECT_FALSE(all_zero(fairness_gradient(skewed, {0.01, 1.0}, shape).gradient));
}

TEST(FairnessGradient, ColdStoreIsZero) {
  StoreLayout layout;
  layout.nodes = 1;
  layout.dim = 1;
  AggregateStore store(layout);
  store.update(0, 0, {0, std::nullopt}, 0.9, std::vector<double>{0.2}, 0.1);
  const auto fg = fairness_gradient(store, {0.01, 1.0}, TreeShape{1, 1, 2});
  EXPECT_TRUE(fg.cold);
  EXPECT_TRUE(all_zero(fg.gradient));
}

class FrozenAggregate : public ::testing::TestWithParam<FairnessNotion> {};

TEST_P(FrozenAggregate, MatchesReservoirBatchGradient) {
  const FairnessNotion notion = GetParam();
  const std::size_t groups = notion == FairnessNotion::kMultiGroup ? 3 : 2;
  std::mt19937_64 rng(37);
  LearnerConfig config;
  config.shape = TreeShape{3, 4, 2};
  config.trees = 2;
  config.notion = notion;
  config.groups = groups;
  for (double lambda : {0.0, 0.7}) {
    for (double delta : {1e-3, 0.05, 10.0}) {
      config.huber = {delta, lambda};
      const auto forest = testutil::random_forest(rng, config.shape, config.trees);
      const auto data = testutil::random_instances(rng, 50, 4, 2, groups);
      NodeAggregateEstimator est(config);
      std::vector<HistoryEntry> history;
      for (const auto& inst : data) {
        est.observe(forest, forward_pass(forest, inst.x), inst.x, inst.y, inst.a);
        history.push_back({inst.x, inst.y, inst.a});
      }
      const auto agg = est.gradient(forest);
      const auto exact =
          reservoir_fairness_gradient(history, forest, config.huber, notion, groups);
      EXPECT_LE(max_abs_diff(agg.gradient, exact.gradient), 1e-10)
          << "lambda " << lambda << " delta " << delta;
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Notions, FrozenAggregate,
                         ::testing::Values(FairnessNotion::kDemographicParity,
                                           FairnessNotion::kEqualizedOdds,
                                           FairnessNotion::kMultiGroup));

TEST(TotalGradient, SumsComponents) {
  std::mt19937_64 rng(38);
  const TreeShape shape{2, 3, 2};
  const auto fa = testutil::random_forest(rng, shape, 2);
  const auto fb = testutil::random_forest(rng, shape, 2);
  ForestGradient a = ForestGradient::zeros(shape, 2), b = a;
  for (std::size_t t = 0; t < 2; ++t) {
    a.trees[t].weights = fa.trees[t].weights;
    a.trees[t].leaves = fa.trees[t].leaves;
    b.trees[t].biases = fb.trees[t].biases;
    b.trees[t].weights = fb.trees[t].weights;
  }
  const auto zero = ForestGradient::zeros(shape, 2);
  EXPECT_EQ(max_abs_diff(total_gradient(a, zero), a), 0.0);
  EXPECT_EQ(max_abs_diff(total_gradient(zero, b), b), 0.0);
  const auto sum = total_gradient(a, b);
  for (std::size_t t = 0; t < 2; ++t)
    for (std::size_t k = 0; k < sum.trees[t].weights.size(); ++k)
      EXPECT_EQ(sum.trees[t].weights[k], a.trees[t].weights[k] + b.trees[t].weights[k]);
}

TEST(GradientNorm, Examples) {
  const TreeShape shape{1, 1, 2};
  auto g = ForestGradient::zeros(shape, 1);
  EXPECT_EQ(gradient_norm(g), 0.0);
  g.trees[0].weights[0] = 3.0;
  g.trees[0].leaves[1] = 4.0;
  EXPECT_DOUBLE_EQ(gradient_norm(g), 5.0);

  std::mt19937_64 rng(39);
  const auto f = testutil::random_forest(rng, TreeShape{3, 4, 3}, 3);
  auto r = ForestGradient::zeros_like(f);
  double sq = 0.0;
  for (std::size_t t = 0; t < 3; ++t) {
    r.trees[t].weights = f.trees[t].weights;
    r.trees[t].biases = f.trees[t].biases;
    r.trees[t].leaves = f.trees[t].leaves;
    for (auto buf : buffers(f.trees[t]))
      for (double v : buf) sq += v * v;
  }
  EXPECT_NEAR(gradient_norm(r), std::sqrt(sq), 1e-12);
}
