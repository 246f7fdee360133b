#pragma once

// Closed-form gradients of the online objective
//   L(f(x), y) + lambda * sum_ij H_delta(F_ij)
// with L the softmax cross-entropy and F_ij the node-level fairness
// constraints estimated from an AggregateStore.

#include <array>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "fairforest/forest.hpp"
#include "fairforest/stats.hpp"

namespace fairforest {

struct HuberParams {
  double delta = 0.01;
  double lambda = 0.0;

  void validate() const;
};

/// Gradient buffers laid out exactly like TreeParams.
struct TreeGradient {
  TreeShape shape;
  std::vector<double> weights;
  std::vector<double> biases;
  std::vector<double> leaves;

  TreeGradient() = default;
  explicit TreeGradient(const TreeShape& s);
};

struct ForestGradient {
  std::vector<TreeGradient> trees;

  static ForestGradient zeros(const TreeShape& shape, std::size_t tree_count);
  static ForestGradient zeros_like(const ObliqueForest& forest);

  ForestGradient& operator+=(const ForestGradient& other);
  ForestGradient& operator*=(double scale);
};

/// The three parameter buffers of a tree (weights, biases, leaves), in the
/// canonical flattening order used by optimizers and finite differences.
std::array<std::span<double>, 3> buffers(TreeParams& tree);
std::array<std::span<const double>, 3> buffers(const TreeParams& tree);
std::array<std::span<double>, 3> buffers(TreeGradient& grad);
std::array<std::span<const double>, 3> buffers(const TreeGradient& grad);

/// d n / d w = n (1 - n) x and d n / d b = n (1 - n).
std::pair<std::vector<double>, double> node_grad(double n_value,
                                                 std::span<const double> x);

/// H_delta(F) = F^2 / 2 for |F| < delta, delta (|F| - delta / 2) otherwise.
double huber(double F, double delta);

/// Coefficient multiplying grad F in grad H_delta(F): F inside the quadratic
/// zone, delta * sgn(F - delta / 2) outside, with sgn(0) = 0.
double huber_grad_coeff(double F, double delta);

/// coeff(F) * grad F for one constraint, without lambda.
std::pair<std::vector<double>, double> huber_gradient(
    const ConstraintEstimate& est, double delta);

std::vector<double> softmax(std::span<const double> logits);

/// -log softmax(f(x))[y].
double cross_entropy(std::span<const double> logits, std::size_t y);
double cross_entropy(const ObliqueForest& forest, std::span<const double> x,
                     std::size_t y);

/// Analytic gradient of the cross-entropy through the forest. Routing
/// derivatives use path products (no division by n or 1 - n), so saturated
/// nodes are handled exactly.
ForestGradient task_gradient(const ObliqueForest& forest,
                             const ForwardPass& pass,
                             std::span<const double> x, std::size_t y);
ForestGradient task_gradient(const ObliqueForest& forest,
                             std::span<const double> x, std::size_t y);

struct FairnessGradient {
  ForestGradient gradient;  // lambda already applied; leaves are zero
  bool cold = false;        // some constraint had an unobserved group
};

/// lambda * sum over nodes (and over class conditions / group labels for the
/// equalized-odds and multi-group notions) of grad H_delta(F-hat).
FairnessGradient fairness_gradient(const AggregateStore& store,
                                   const HuberParams& params,
                                   const TreeShape& shape);

ForestGradient total_gradient(const ForestGradient& task,
                              const ForestGradient& fair);

double gradient_norm(const ForestGradient& g);
double gradient_norm(const TreeGradient& g);

}  // namespace fairforest
