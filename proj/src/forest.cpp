#include "fairforest/forest.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>

#include "fairforest/error.hpp"

namespace fairforest {

void TreeShape::validate() const {
  require(height >= 1 && height <= kMaxHeight, ErrorKind::kConfig,
          "tree height must be in [1, " + std::to_string(kMaxHeight) +
              "], got " + std::to_string(height));
  require(dim >= 1, ErrorKind::kConfig, "input dimension must be >= 1");
  require(classes >= 1, ErrorKind::kConfig, "output dimension must be >= 1");
}

TreeParams::TreeParams(const TreeShape& s)
    : shape(s),
      weights(s.node_count() * s.dim, 0.0),
      biases(s.node_count(), 0.0),
      leaves(s.leaf_count() * s.classes, 0.0) {}

bool TreeParams::all_finite() const {
  auto finite = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(),
                       [](double e) { return std::isfinite(e); });
  };
  return finite(weights) && finite(biases) && finite(leaves);
}

AncestorMask::AncestorMask(int height) : height_(height) {
  require(height >= 1 && height <= kMaxHeight, ErrorKind::kConfig,
          "mask height must be in [1, " + std::to_string(kMaxHeight) +
              "], got " + std::to_string(height));
}

int AncestorMask::at(std::size_t node, std::size_t leaf) const {
  // Node i (1-based heap index i+1) at depth l covers the leaves whose heap
  // index 2^h + j falls in [(i+1) 2^(h-l), (i+1) 2^(h-l) + 2^(h-l)); the
  // first half of that range is its left subtree.
  const int depth = std::bit_width(node + 1) - 1;
  const std::size_t span = std::size_t{1} << (height_ - depth);
  const std::size_t begin = (node + 1) * span;
  const std::size_t heap_leaf = cols() + leaf;
  if (heap_leaf < begin || heap_leaf >= begin + span) return 0;
  return heap_leaf < begin + span / 2 ? 1 : -1;
}

std::vector<PathStep> AncestorMask::path(std::size_t leaf) const {
  std::vector<PathStep> steps(static_cast<std::size_t>(height_));
  const std::size_t heap_leaf = cols() + leaf;
  for (int depth = 0; depth < height_; ++depth) {
    const std::size_t heap_node = heap_leaf >> (height_ - depth);
    const std::size_t child = heap_leaf >> (height_ - depth - 1);
    steps[static_cast<std::size_t>(depth)] = {heap_node - 1, (child & 1) == 0};
  }
  return steps;
}

std::vector<std::int8_t> AncestorMask::dense() const {
  std::vector<std::int8_t> out(rows() * cols());
  for (std::size_t i = 0; i < rows(); ++i)
    for (std::size_t l = 0; l < cols(); ++l)
      out[i * cols() + l] = static_cast<std::int8_t>(at(i, l));
  return out;
}

AncestorMask build_mask(int height) { return AncestorMask(height); }

TreeShape ObliqueForest::shape() const {
  require(!trees.empty(), ErrorKind::kConfig, "forest has no trees");
  return trees.front().shape;
}

void ObliqueForest::validate() const {
  require(!trees.empty(), ErrorKind::kConfig, "forest has no trees");
  const TreeShape s = trees.front().shape;
  s.validate();
  for (const auto& t : trees) {
    require(t.shape == s, ErrorKind::kConfig,
            "all trees of a forest must share height, dim and classes");
    require(t.weights.size() == s.node_count() * s.dim &&
                t.biases.size() == s.node_count() &&
                t.leaves.size() == s.leaf_count() * s.classes,
            ErrorKind::kShape, "tree parameter buffers do not match shape");
  }
}

double logistic(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

std::vector<double> node_outputs(const TreeParams& tree,
                                 std::span<const double> x) {
  if (x.size() != tree.shape.dim)
    fail(ErrorKind::kShape, "input has length " + std::to_string(x.size()) +
                                ", tree expects " +
                                std::to_string(tree.shape.dim));
  const std::size_t m = tree.shape.node_count();
  std::vector<double> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    const auto w = tree.node_weights(i);
    double z = tree.biases[i];
    for (std::size_t k = 0; k < x.size(); ++k) z += w[k] * x[k];
    out[i] = logistic(z);
  }
  return out;
}

std::vector<double> leaf_probabilities(std::span<const double> outputs,
                                       const AncestorMask& mask) {
  if (outputs.size() != mask.rows())
    fail(ErrorKind::kShape, "node outputs do not match mask height");
  constexpr double kTiny = 1e-12;
  const int h = mask.height();
  const std::size_t leaves = mask.cols();
  std::vector<double> probs(leaves);
  std::vector<double> factors(static_cast<std::size_t>(h));
  for (std::size_t l = 0; l < leaves; ++l) {
    const std::size_t heap_leaf = leaves + l;
    bool tiny = false;
    for (int depth = 0; depth < h; ++depth) {
      const std::size_t node = (heap_leaf >> (h - depth)) - 1;
      const bool left = ((heap_leaf >> (h - depth - 1)) & 1) == 0;
      const double n = outputs[node];
      const double f = left ? n : 1.0 - n;
      factors[static_cast<std::size_t>(depth)] = f;
      tiny = tiny || f < kTiny;
    }
    if (!tiny) {
      double p = 1.0;
      for (double f : factors) p *= f;
      probs[l] = p;
    } else {
      double log_p = 0.0;
      for (double f : factors) log_p += std::log(f);
      probs[l] = std::exp(log_p);  // log(0) = -inf maps back to 0
    }
  }
  return probs;
}

ForwardPass forward_pass(const ObliqueForest& forest,
                         std::span<const double> x) {
  const TreeShape s = forest.shape();
  const AncestorMask mask(s.height);
  ForwardPass pass;
  pass.trees.reserve(forest.tree_count());
  pass.output.assign(s.classes, 0.0);
  for (const auto& tree : forest.trees) {
    TreePass tp;
    tp.nodes = node_outputs(tree, x);
    tp.leaves = leaf_probabilities(tp.nodes, mask);
    pass.trees.push_back(std::move(tp));
  }
  // Fixed tree order keeps the reduction bitwise reproducible.
  const double inv_t = 1.0 / static_cast<double>(forest.tree_count());
  for (std::size_t t = 0; t < forest.tree_count(); ++t) {
    const auto& tree = forest.trees[t];
    const auto& probs = pass.trees[t].leaves;
    for (std::size_t l = 0; l < probs.size(); ++l) {
      const auto theta = tree.leaf(l);
      for (std::size_t c = 0; c < s.classes; ++c)
        pass.output[c] += inv_t * probs[l] * theta[c];
    }
  }
  return pass;
}

std::vector<double> forward(const ObliqueForest& forest,
                            std::span<const double> x) {
  return forward_pass(forest, x).output;
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

std::size_t predict(const ObliqueForest& forest, std::span<const double> x) {
  return argmax(forward(forest, x));
}

ObliqueForest init_forest(const TreeShape& shape, std::size_t tree_count,
                          std::mt19937_64& rng) {
  shape.validate();
  require(tree_count >= 1, ErrorKind::kConfig, "tree count must be >= 1");
  const double bound = 1.0 / std::sqrt(static_cast<double>(shape.dim));
  std::uniform_real_distribution<double> weight_dist(-bound, bound);
  std::uniform_real_distribution<double> leaf_dist(-0.1, 0.1);
  ObliqueForest forest;
  for (std::size_t t = 0; t < tree_count; ++t) {
    TreeParams tree(shape);
    for (double& w : tree.weights) w = weight_dist(rng);
    for (double& v : tree.leaves) v = leaf_dist(rng);
    forest.trees.push_back(std::move(tree));
  }
  return forest;
}

}  // namespace fairforest
