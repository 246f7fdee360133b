#pragma once

// Soft-routed oblique decision trees and forests.
//
// A tree of height h is a complete binary tree with m = 2^h - 1 internal
// nodes stored breadth-first (children of node i are 2i+1 and 2i+2) and 2^h
// leaves. Node i computes n_i(x) = logistic(w_i . x + b_i), the probability
// of routing x to its left child. The tree output is sum_l p_l(x) theta_l,
// where p_l is the product of routing probabilities along the path to leaf l.
// A forest averages the outputs of its trees.

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace fairforest {

constexpr int kMaxHeight = 16;

struct TreeShape {
  int height = 1;
  std::size_t dim = 1;      // input dimension d
  std::size_t classes = 2;  // output dimension c

  std::size_t node_count() const { return (std::size_t{1} << height) - 1; }
  std::size_t leaf_count() const { return std::size_t{1} << height; }

  /// Throws kConfig when any field is out of range.
  void validate() const;

  friend bool operator==(const TreeShape&, const TreeShape&) = default;
};

/// Parameters of one tree. Row-major: weights is node_count x dim, leaves is
/// leaf_count x classes.
struct TreeParams {
  TreeShape shape;
  std::vector<double> weights;
  std::vector<double> biases;
  std::vector<double> leaves;

  TreeParams() = default;
  explicit TreeParams(const TreeShape& s);

  std::span<const double> node_weights(std::size_t node) const {
    return {weights.data() + node * shape.dim, shape.dim};
  }
  std::span<double> node_weights(std::size_t node) {
    return {weights.data() + node * shape.dim, shape.dim};
  }
  std::span<const double> leaf(std::size_t l) const {
    return {leaves.data() + l * shape.classes, shape.classes};
  }
  std::span<double> leaf(std::size_t l) {
    return {leaves.data() + l * shape.classes, shape.classes};
  }

  bool all_finite() const;
};

/// One step on a root-to-leaf path: the node visited and the branch taken.
struct PathStep {
  std::size_t node;
  bool left;
};

/// Ancestor mask A with A(i, l) = +1 if leaf l lies in the left subtree of
/// node i, -1 if it lies in the right subtree and 0 otherwise. Entries are
/// evaluated on demand so large heights do not materialize m x 2^h storage.
class AncestorMask {
 public:
  explicit AncestorMask(int height);

  int height() const { return height_; }
  std::size_t rows() const { return (std::size_t{1} << height_) - 1; }
  std::size_t cols() const { return std::size_t{1} << height_; }

  int at(std::size_t node, std::size_t leaf) const;

  /// The h nodes on the path from the root to `leaf`, root first.
  std::vector<PathStep> path(std::size_t leaf) const;

  /// Row-major rows() x cols() matrix. Only sensible for small heights.
  std::vector<std::int8_t> dense() const;

 private:
  int height_;
};

/// Throws kConfig unless 1 <= h <= kMaxHeight.
AncestorMask build_mask(int height);

struct ObliqueForest {
  std::vector<TreeParams> trees;

  TreeShape shape() const;
  std::size_t tree_count() const { return trees.size(); }

  /// Throws kConfig if empty or ragged.
  void validate() const;
};

double logistic(double z);

/// n_i = logistic(w_i . x + b_i) for every internal node.
std::vector<double> node_outputs(const TreeParams& tree,
                                 std::span<const double> x);

/// Leaf reach probabilities. The routing factor for a path step is n on a
/// left turn and 1 - n on a right turn.
std::vector<double> leaf_probabilities(std::span<const double> outputs,
                                       const AncestorMask& mask);

/// Per-tree intermediates of one forward pass, reused by the gradients.
struct TreePass {
  std::vector<double> nodes;   // node outputs, length m
  std::vector<double> leaves;  // leaf probabilities, length 2^h
};

struct ForwardPass {
  std::vector<TreePass> trees;
  std::vector<double> output;  // forest output f(x), length c
};

ForwardPass forward_pass(const ObliqueForest& forest,
                         std::span<const double> x);

std::vector<double> forward(const ObliqueForest& forest,
                            std::span<const double> x);

/// Argmax with ties broken towards the lowest index.
std::size_t argmax(std::span<const double> values);

std::size_t predict(const ObliqueForest& forest, std::span<const double> x);

/// Weights ~ U[-1/sqrt(d), 1/sqrt(d)], biases 0, leaves ~ U[-0.1, 0.1].
ObliqueForest init_forest(const TreeShape& shape, std::size_t tree_count,
                          std::mt19937_64& rng);

}  // namespace fairforest
