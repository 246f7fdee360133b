#include <gtest/gtest.h>

#include <numeric>

#include "fairforest/error.hpp"
#include "fairforest/forest.hpp"
#include "helpers.hpp"

using namespace fairforest;

namespace {

// Walk from each leaf up to the root through parent pointers of the complete
// binary tree (heap indexing over all 2^(h+1) - 1 vertices).
std::vector<std::int8_t> parent_pointer_mask(int h) {
  const std::size_t m = (std::size_t{1} << h) - 1;
  const std::size_t leaves = m + 1;
  std::vector<std::int8_t> mask(m * leaves, 0);
  for (std::size_t l = 0; l < leaves; ++l) {
    std::size_t v = m + l;
    while (v != 0) {
      const std::size_t parent = (v - 1) / 2;
      mask[parent * leaves + l] = (v == 2 * parent + 1) ? 1 : -1;
      v = parent;
    }
  }
  return mask;
}

TreeParams tree_with_outputs(const std::vector<double>& n, std::size_t classes) {
  int h = 1;
  while ((std::size_t{1} << h) - 1 < n.size()) ++h;
  TreeParams tp(TreeShape{h, 1, classes});
  for (std::size_t i = 0; i < n.size(); ++i) tp.biases[i] = testutil::logit(n[i]);
  return tp;
}

}  // namespace

TEST(Mask, HeightOne) {
  EXPECT_EQ(build_mask(1).dense(), (std::vector<std::int8_t>{1, -1}));
}

TEST(Mask, HeightTwoMatchesReferenceMatrix) {
  const std::vector<std::int8_t> expected = {1, 1,  -1, -1,  //
                                             1, -1, 0,  0,   //
                                             0, 0,  1,  -1};
  EXPECT_EQ(build_mask(2).dense(), expected);
}

TEST(Mask, MatchesParentPointerWalk) {
  for (int h = 1; h <= 8; ++h) {
    SCOPED_TRACE(h);
    EXPECT_EQ(build_mask(h).dense(), parent_pointer_mask(h));
  }
}

TEST(Mask, PathAgreesWithDense) {
  const AncestorMask mask = build_mask(4);
  for (std::size_t l = 0; l < mask.cols(); ++l) {
    const auto path = mask.path(l);
    ASSERT_EQ(path.size(), 4u);
    EXPECT_EQ(path.front().node, 0u);
    for (const auto& s : path) EXPECT_EQ(mask.at(s.node, l), s.left ? 1 : -1);
  }
}

TEST(Mask, RejectsOutOfRangeHeight) {
  EXPECT_THROW(build_mask(0), Error);
  EXPECT_THROW(build_mask(kMaxHeight + 1), Error);
}

TEST(NodeOutputs, ZeroParametersGiveOneHalf) {
  TreeParams tp(TreeShape{3, 4, 2});
  const std::vector<double> x = {1.0, -2.0, 3.5, 0.25};
  for (double n : node_outputs(tp, x)) EXPECT_DOUBLE_EQ(n, 0.5);
}

TEST(NodeOutputs, SingleWeight) {
  TreeParams tp(TreeShape{1, 1, 2});
  tp.weights[0] = 1.0;
  const std::vector<double> pos = {1.0};
  const std::vector<double> neg = {-1.0};
  const double n_pos = node_outputs(tp, pos)[0];
  EXPECT_NEAR(n_pos, 0.7310586, 1e-7);
  EXPECT_NEAR(n_pos + node_outputs(tp, neg)[0], 1.0, 1e-15);
}

TEST(NodeOutputs, DimensionMismatchIsShapeError) {
  TreeParams tp(TreeShape{2, 3, 2});
  const std::vector<double> x = {1.0, 2.0};
  try {
    node_outputs(tp, x);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kShape);
  }
}

TEST(LeafProbabilities, Examples) {
  const std::vector<double> half1 = {0.5};
  EXPECT_EQ(leaf_probabilities(half1, build_mask(1)),
            (std::vector<double>{0.5, 0.5}));

  const std::vector<double> half2 = {0.5, 0.5, 0.5};
  for (double p : leaf_probabilities(half2, build_mask(2))) EXPECT_DOUBLE_EQ(p, 0.25);

  const std::vector<double> n = {0.9, 0.8, 0.3};
  const auto p = leaf_probabilities(n, build_mask(2));
  const std::vector<double> expected = {0.9 * 0.8, 0.9 * 0.2, 0.1 * 0.3, 0.1 * 0.7};
  ASSERT_EQ(p.size(), 4u);
  for (std::size_t l = 0; l < 4; ++l) EXPECT_NEAR(p[l], expected[l], 1e-15);
  EXPECT_NEAR(p[0], 0.72, 1e-12);
  EXPECT_NEAR(p[3], 0.07, 1e-12);
  EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-15);
}

TEST(LeafProbabilities, SumToOneOnRandomForests) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    const int h = 1 + static_cast<int>(rng() % 6);
    const std::size_t d = 1 + rng() % 6;
    const auto forest = testutil::random_forest(rng, TreeShape{h, d, 2}, 1, 4.0);
    const auto x = testutil::random_vector(rng, d, -3.0, 3.0);
    const auto p = leaf_probabilities(node_outputs(forest.trees[0], x), build_mask(h));
    double sum = 0.0;
    for (double v : p) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
      sum += v;
    }
    EXPECT_NEAR(sum, 1.0, 1e-9);
  }
}

TEST(LeafProbabilities, SaturatedRoutingStaysFinite) {
  TreeParams tp(TreeShape{8, 1, 2});
  for (double& b : tp.biases) b = 800.0;
  const std::vector<double> x = {0.0};
  const auto p = leaf_probabilities(node_outputs(tp, x), build_mask(8));
  EXPECT_DOUBLE_EQ(p[0], 1.0);
  for (std::size_t l = 1; l < p.size(); ++l) EXPECT_EQ(p[l], 0.0);
}

TEST(Forward, IdenticalLeavesGiveThatRow) {
  std::mt19937_64 rng(3);
  auto forest = testutil::random_forest(rng, TreeShape{3, 2, 3}, 2);
  const std::vector<double> v = {0.3, -1.2, 2.0};
  for (auto& t : forest.trees)
    for (std::size_t l = 0; l < 8; ++l)
      std::copy(v.begin(), v.end(), t.leaf(l).begin());
  for (int i = 0; i < 10; ++i) {
    const auto x = testutil::random_vector(rng, 2, -5.0, 5.0);
    const auto out = forward(forest, x);
    for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(out[c], v[c], 1e-12);
  }
}

TEST(Forward, AveragesTrees) {
  std::mt19937_64 rng(4);
  const auto forest = testutil::random_forest(rng, TreeShape{2, 3, 2}, 2);
  const auto x = testutil::random_vector(rng, 3);
  ObliqueForest first, second;
  first.trees = {forest.trees[0]};
  second.trees = {forest.trees[1]};
  const auto u = forward(first, x);
  const auto w = forward(second, x);
  const auto out = forward(forest, x);
  for (std::size_t c = 0; c < 2; ++c) EXPECT_NEAR(out[c], (u[c] + w[c]) / 2, 1e-15);
}

TEST(Forward, IdentityLeavesReproduceLeafProbabilities) {
  ObliqueForest forest;
  forest.trees.push_back(tree_with_outputs({0.9, 0.8, 0.3}, 4));
  for (std::size_t l = 0; l < 4; ++l) forest.trees[0].leaf(l)[l] = 1.0;
  const std::vector<double> x = {0.0};
  const auto out = forward(forest, x);
  const std::vector<double> expected = {0.72, 0.18, 0.03, 0.07};
  for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(out[c], expected[c], 1e-12);
}

TEST(Forward, TreeOrderDoesNotMatter) {
  std::mt19937_64 rng(5);
  auto forest = testutil::random_forest(rng, TreeShape{3, 4, 3}, 3);
  const auto x = testutil::random_vector(rng, 4);
  const auto before = forward(forest, x);
  std::swap(forest.trees[0], forest.trees[2]);
  const auto after = forward(forest, x);
  for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(before[c], after[c], 1e-12);
  EXPECT_EQ(predict(forest, x), argmax(before));
}

TEST(Predict, ArgmaxWithLowestIndexTies) {
  EXPECT_EQ(argmax(std::vector<double>{0.2, 0.8}), 1u);
  EXPECT_EQ(argmax(std::vector<double>{0.5, 0.5}), 0u);
  EXPECT_EQ(argmax(std::vector<double>{0.1, 0.7, 0.2}), 1u);
}

TEST(Forest, ValidateRejectsEmptyAndRagged) {
  ObliqueForest empty;
  EXPECT_THROW(empty.validate(), Error);
  ObliqueForest ragged;
  ragged.trees.emplace_back(TreeShape{2, 3, 2});
  ragged.trees.emplace_back(TreeShape{3, 3, 2});
  EXPECT_THROW(ragged.validate(), Error);
}

TEST(Forest, InitIsSeeded) {
  std::mt19937_64 a(9), b(9);
  const auto fa = init_forest(TreeShape{3, 5, 2}, 2, a);
  const auto fb = init_forest(TreeShape{3, 5, 2}, 2, b);
  for (std::size_t t = 0; t < 2; ++t) {
    EXPECT_EQ(fa.trees[t].weights, fb.trees[t].weights);
    EXPECT_EQ(fa.trees[t].leaves, fb.trees[t].leaves);
    for (double w : fa.trees[t].weights) EXPECT_LE(std::abs(w), 1.0 / std::sqrt(5.0));
    for (double b0 : fa.trees[t].biases) EXPECT_EQ(b0, 0.0);
  }
}
