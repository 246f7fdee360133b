#include <gtest/gtest.h>

#include "fairforest/data.hpp"
#include "fairforest/error.hpp"
#include "fairforest/verify.hpp"
#include "helpers.hpp"

using namespace fairforest;

namespace {

double half_square_norm(const ObliqueForest& f) {
  double s = 0.0;
  for (const auto& t : f.trees)
    for (auto buf : buffers(t))
      for (double v : buf) s += 0.5 * v * v;
  return s;
}

std::vector<Instance> equal_groups(std::mt19937_64& rng, std::size_t per_group,
                                   std::size_t dim) {
  std::vector<Instance> out;
  for (std::size_t i = 0; i < per_group; ++i) {
    out.push_back({testutil::random_vector(rng, dim, -2, 2), 0, 0});
    out.push_back({testutil::random_vector(rng, dim, -2, 2), 1, 1});
  }
  return out;
}

}  // namespace

TEST(FiniteDifference, QuadraticIsExact) {
  std::mt19937_64 rng(1);
  const auto forest = testutil::random_forest(rng, TreeShape{2, 3, 2}, 2);
  const auto g = finite_difference(half_square_norm, forest, 1e-5);
  for (std::size_t t = 0; t < 2; ++t) {
    const auto p = buffers(forest.trees[t]);
    const auto d = buffers(g.trees[t]);
    for (std::size_t b = 0; b < 3; ++b)
      for (std::size_t k = 0; k < p[b].size(); ++k) EXPECT_NEAR(d[b][k], p[b][k], 1e-8);
  }
}

TEST(FiniteDifference, ConstantLossAndNonFinite) {
  std::mt19937_64 rng(2);
  const auto forest = testutil::random_forest(rng, TreeShape{1, 2, 2}, 1);
  const auto g = finite_difference([](const ObliqueForest&) { return 3.0; }, forest, 1e-5);
  EXPECT_EQ(gradient_norm(g), 0.0);
  try {
    finite_difference([](const ObliqueForest&) { return std::nan(""); }, forest, 1e-5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNumerical);
  }
}

TEST(FiniteDifference, RelativeError) {
  EXPECT_EQ(relative_error(1.0, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(relative_error(2.0, 1.0), 0.5);
  EXPECT_DOUBLE_EQ(relative_error(0.0, 1e-9), 1e-9 / 1e-6);
}

TEST(Gradcheck, SingleTrialIsDeterministic) {
  GradcheckConfig c;
  c.trials = 1;
  c.seed = 4;
  const auto a = gradcheck(c);
  const auto b = gradcheck(c);
  EXPECT_EQ(a.max_rel_error, b.max_rel_error);
  EXPECT_EQ(a.to_json().dump(), b.to_json().dump());
}

TEST(Gradcheck, HundredTrialsPass) {
  const auto report = gradcheck(GradcheckConfig{});
  EXPECT_EQ(report.trials.size(), 100u);
  EXPECT_TRUE(report.pass);
  EXPECT_LE(report.max_rel_error, 1e-4);
  for (const auto& t : report.trials) {
    EXPECT_GE(t.height, 1);
    EXPECT_LE(t.height, 3);
    EXPECT_LE(t.dim, 5u);
    EXPECT_LE(t.classes, 3u);
    EXPECT_LE(t.trees, 3u);
  }
}

TEST(Gradcheck, CorruptedGradientFails) {
  GradcheckConfig c;
  c.trials = 5;
  c.corrupt = true;
  const auto report = gradcheck(c);
  EXPECT_FALSE(report.pass);
  EXPECT_GT(report.max_rel_error, 1e-4);
}

TEST(DpBound, ZeroWeightsGiveZero) {
  std::mt19937_64 rng(5);
  auto forest = testutil::random_forest(rng, TreeShape{3, 2, 2}, 2);
  for (auto& t : forest.trees) {
    std::fill(t.weights.begin(), t.weights.end(), 0.0);
    std::fill(t.biases.begin(), t.biases.end(), 0.0);
  }
  const auto r = check_dp_bound(forest, equal_groups(rng, 20, 2));
  EXPECT_NEAR(r.observed, 0.0, 1e-15);
  EXPECT_EQ(r.theoretical, 0.0);
  EXPECT_TRUE(r.pass);
}

TEST(DpBound, HandComputedHeightOne) {
  ObliqueForest forest;
  forest.trees.emplace_back(TreeShape{1, 1, 2});
  auto& t = forest.trees[0];
  t.weights[0] = 2.0;
  t.biases[0] = -0.5;
  // leaf rows (3, 4) and (0, -2) normalize to (0.6, 0.8) and (0, -1)
  t.leaves = {3.0, 4.0, 0.0, -2.0};
  const std::vector<Instance> data = {{{1.0}, 0, 0}, {{-0.25}, 0, 1}};
  const double n0 = 1.0 / (1.0 + std::exp(-1.5));
  const double n1 = 1.0 / (1.0 + std::exp(1.0));
  const double diff = n0 - n1;
  const double dp = std::abs(diff) * std::sqrt(0.6 * 0.6 + 1.8 * 1.8);
  const auto r = check_dp_bound(forest, data);
  EXPECT_NEAR(r.observed, dp, 1e-14);
  EXPECT_NEAR(r.theoretical, 2.0 * std::abs(diff), 1e-14);
  EXPECT_TRUE(r.pass);
}

TEST(DpBound, RandomForestsRespectBound) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const int h = 1 + static_cast<int>(rng() % 3);
    const std::size_t d = 1 + rng() % 5, c = 2 + rng() % 2;
    const auto forest = testutil::random_forest(rng, TreeShape{h, d, c}, 1 + rng() % 3, 2.0);
    const auto r = check_dp_bound(forest, equal_groups(rng, 5 + rng() % 20, d));
    EXPECT_TRUE(r.pass) << "trial " << trial << " observed " << r.observed
                        << " bound " << r.theoretical;
    EXPECT_LE(r.observed, r.theoretical + 1e-9);
  }
}

TEST(DpBound, UnequalGroupsAreRejected) {
  std::mt19937_64 rng(7);
  const auto forest = testutil::random_forest(rng, TreeShape{2, 2, 2}, 1);
  auto data = equal_groups(rng, 4, 2);
  data.push_back({{0.0, 0.0}, 0, 0});
  try {
    check_dp_bound(forest, data);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kPrecondition);
  }
}

TEST(Audit, FrozenTraceHasNoError) {
  std::mt19937_64 rng(8);
  const auto forest = testutil::random_forest(rng, TreeShape{3, 3, 2}, 2);
  std::vector<TraceStep> trace;
  for (const auto& inst : testutil::random_instances(rng, 60, 3, 2, 2))
    trace.push_back({forest, inst});
  for (auto notion : {FairnessNotion::kDemographicParity, FairnessNotion::kEqualizedOdds}) {
    const auto reports = audit_estimation_error(trace, {0.01, 1.0}, notion, 2, 1.0);
    ASSERT_EQ(reports.size(), trace.size());
    for (const auto& r : reports) {
      EXPECT_LE(r.observed, 1e-12);
      EXPECT_TRUE(r.pass);
    }
  }
}

TEST(Audit, SingleInstancePerGroupIsExact) {
  std::mt19937_64 rng(9);
  const auto forest = testutil::random_forest(rng, TreeShape{2, 2, 2}, 1);
  std::vector<TraceStep> trace;
  for (std::size_t a = 0; a < 2; ++a)
    trace.push_back({forest, {testutil::random_vector(rng, 2), 0, a}});
  const auto reports = audit_estimation_error(trace, {0.01, 1.0},
                                              FairnessNotion::kDemographicParity, 2);
  EXPECT_EQ(reports.back().observed, 0.0);
}

TEST(Audit, DriftingRunStaysWithinBound) {
  SyntheticConfig sc;
  sc.n = 500;
  sc.noise = 0.1;
  sc.bound = 1.0;
  SyntheticStream stream(sc);
  LearnerConfig c;
  c.shape = TreeShape{4, 10, 2};
  c.trees = 3;
  c.huber = {0.01, 1.0};
  c.adam.learning_rate = 0.05;
  ForestLearner learner(c);
  const auto trace = record_trace(learner, stream, 500);
  ASSERT_EQ(trace.size(), 500u);
  double worst = 0.0;
  for (const auto& r : audit_estimation_error(trace, c.huber, c.notion, 2, 1.0)) {
    EXPECT_TRUE(r.pass);
    EXPECT_EQ(r.theoretical, 0.005);
    worst = std::max(worst, r.observed);
  }
  // The parameters move, so the estimate is not exact.
  EXPECT_GT(worst, 0.0);
}

TEST(Report, PassFollowsSlack) {
  const auto ok = make_report("x", 1.0, 1.0 + 5e-10, 1e-9);
  EXPECT_TRUE(ok.pass);
  const auto bad = make_report("x", 1.0, 1.0 + 2e-9, 1e-9);
  EXPECT_FALSE(bad.pass);
  EXPECT_LT(bad.slack, 0.0);
  EXPECT_EQ(to_json(ok).at("name"), "x");
}
