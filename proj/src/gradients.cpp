#include "fairforest/gradients.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fairforest/error.hpp"

namespace fairforest {

void HuberParams::validate() const {
  require(delta > 0.0 && std::isfinite(delta), ErrorKind::kConfig,
          "huber delta must be positive and finite");
  require(lambda >= 0.0 && std::isfinite(lambda), ErrorKind::kConfig,
          "lambda must be non-negative and finite");
}

TreeGradient::TreeGradient(const TreeShape& s)
    : shape(s),
      weights(s.node_count() * s.dim, 0.0),
      biases(s.node_count(), 0.0),
      leaves(s.leaf_count() * s.classes, 0.0) {}

ForestGradient ForestGradient::zeros(const TreeShape& shape,
                                     std::size_t tree_count) {
  ForestGradient g;
  g.trees.assign(tree_count, TreeGradient(shape));
  return g;
}

ForestGradient ForestGradient::zeros_like(const ObliqueForest& forest) {
  return zeros(forest.shape(), forest.tree_count());
}

ForestGradient& ForestGradient::operator+=(const ForestGradient& other) {
  if (other.trees.size() != trees.size())
    fail(ErrorKind::kShape, "gradient tree counts differ");
  for (std::size_t t = 0; t < trees.size(); ++t) {
    if (!(trees[t].shape == other.trees[t].shape))
      fail(ErrorKind::kShape, "gradient tree shapes differ");
    auto dst = buffers(trees[t]);
    const auto src = buffers(other.trees[t]);
    for (std::size_t b = 0; b < dst.size(); ++b)
      for (std::size_t k = 0; k < dst[b].size(); ++k) dst[b][k] += src[b][k];
  }
  return *this;
}

ForestGradient& ForestGradient::operator*=(double scale) {
  for (auto& tree : trees)
    for (auto buf : buffers(tree))
      for (double& v : buf) v *= scale;
  return *this;
}

std::array<std::span<double>, 3> buffers(TreeParams& tree) {
  return {tree.weights, tree.biases, tree.leaves};
}
std::array<std::span<const double>, 3> buffers(const TreeParams& tree) {
  return {tree.weights, tree.biases, tree.leaves};
}
std::array<std::span<double>, 3> buffers(TreeGradient& grad) {
  return {grad.weights, grad.biases, grad.leaves};
}
std::array<std::span<const double>, 3> buffers(const TreeGradient& grad) {
  return {grad.weights, grad.biases, grad.leaves};
}

std::pair<std::vector<double>, double> node_grad(double n_value,
                                                 std::span<const double> x) {
  const double slope = n_value * (1.0 - n_value);
  std::vector<double> gw(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) gw[k] = slope * x[k];
  return {std::move(gw), slope};
}

double huber(double F, double delta) {
  const double a = std::abs(F);
  if (a < delta) return 0.5 * F * F;
  return delta * (a - 0.5 * delta);
}

double huber_grad_coeff(double F, double delta) {
  if (std::abs(F) < delta) return F;
  const double shifted = F - 0.5 * delta;
  const double sgn = shifted > 0 ? 1.0 : (shifted < 0 ? -1.0 : 0.0);
  return delta * sgn;
}

std::pair<std::vector<double>, double> huber_gradient(
    const ConstraintEstimate& est, double delta) {
  const double coeff = est.cold ? 0.0 : huber_grad_coeff(est.value, delta);
  std::vector<double> gw(est.grad_w.size());
  for (std::size_t k = 0; k < gw.size(); ++k) gw[k] = coeff * est.grad_w[k];
  return {std::move(gw), coeff * est.grad_b};
}

std::vector<double> softmax(std::span<const double> logits) {
  const double top = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (std::size_t c = 0; c < logits.size(); ++c) {
    out[c] = std::exp(logits[c] - top);
    sum += out[c];
  }
  for (double& v : out) v /= sum;
  return out;
}

double cross_entropy(std::span<const double> logits, std::size_t y) {
  const double top = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - top);
  return top + std::log(sum) - logits[y];
}

double cross_entropy(const ObliqueForest& forest, std::span<const double> x,
                     std::size_t y) {
  return cross_entropy(forward(forest, x), y);
}

ForestGradient task_gradient(const ObliqueForest& forest,
                             const ForwardPass& pass,
                             std::span<const double> x, std::size_t y) {
  const TreeShape s = forest.shape();
  if (y >= s.classes)
    fail(ErrorKind::kDomain, "label " + std::to_string(y) + " outside [0, " +
                                 std::to_string(s.classes) + ")");
  const std::size_t m = s.node_count();
  const std::size_t leaves = s.leaf_count();
  const double inv_t = 1.0 / static_cast<double>(forest.tree_count());

  std::vector<double> residual = softmax(pass.output);
  residual[y] -= 1.0;

  ForestGradient grad = ForestGradient::zeros(s, forest.tree_count());
  // value[k] for heap slot k (internal nodes 0..m-1, then leaves): expected
  // dL/dp contribution of the subtree below slot k, conditioned on reaching k.
  std::vector<double> value(m + leaves);
  std::vector<double> reach(m);
  for (std::size_t t = 0; t < forest.tree_count(); ++t) {
    const TreeParams& tree = forest.trees[t];
    const TreePass& tp = pass.trees[t];
    TreeGradient& g = grad.trees[t];

    for (std::size_t l = 0; l < leaves; ++l) {
      const auto theta = tree.leaf(l);
      double dot = 0.0;
      for (std::size_t c = 0; c < s.classes; ++c) {
        dot += theta[c] * residual[c];
        g.leaves[l * s.classes + c] = tp.leaves[l] * residual[c] * inv_t;
      }
      value[m + l] = dot * inv_t;
    }
    for (std::size_t i = m; i-- > 0;) {
      const double n = tp.nodes[i];
      value[i] = n * value[2 * i + 1] + (1.0 - n) * value[2 * i + 2];
    }
    reach[0] = 1.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double n = tp.nodes[i];
      const std::size_t left = 2 * i + 1;
      if (left < m) {
        reach[left] = reach[i] * n;
        reach[left + 1] = reach[i] * (1.0 - n);
      }
      const double d_n = reach[i] * (value[left] - value[left + 1]);
      const double d_z = d_n * n * (1.0 - n);
      for (std::size_t k = 0; k < s.dim; ++k)
        g.weights[i * s.dim + k] = d_z * x[k];
      g.biases[i] = d_z;
    }
    for (const auto buf : buffers(std::as_const(g)))
      for (double v : buf)
        if (!std::isfinite(v))
          fail(ErrorKind::kNumerical,
               "non-finite task gradient in tree " + std::to_string(t));
  }
  return grad;
}

ForestGradient task_gradient(const ObliqueForest& forest,
                             std::span<const double> x, std::size_t y) {
  return task_gradient(forest, forward_pass(forest, x), x, y);
}

FairnessGradient fairness_gradient(const AggregateStore& store,
                                   const HuberParams& params,
                                   const TreeShape& shape) {
  const StoreLayout& layout = store.layout();
  if (layout.nodes != shape.node_count() || layout.dim != shape.dim)
    fail(ErrorKind::kShape, "aggregate store does not match forest shape");

  FairnessGradient out{ForestGradient::zeros(shape, layout.trees), false};
  if (layout.notion == FairnessNotion::kNone || params.lambda == 0.0)
    return out;

  auto accumulate = [&](TreeGradient& g, std::size_t node,
                        const ConstraintEstimate& est) {
    out.cold = out.cold || est.cold;
    if (est.cold) return;
    const double coeff =
        params.lambda * huber_grad_coeff(est.value, params.delta);
    for (std::size_t k = 0; k < shape.dim; ++k)
      g.weights[node * shape.dim + k] += coeff * est.grad_w[k];
    g.biases[node] += coeff * est.grad_b;
  };

  for (std::size_t t = 0; t < layout.trees; ++t) {
    TreeGradient& g = out.gradient.trees[t];
    for (std::size_t i = 0; i < layout.nodes; ++i) {
      switch (layout.notion) {
        case FairnessNotion::kDemographicParity:
          accumulate(g, i, store.estimate(t, i));
          break;
        case FairnessNotion::kEqualizedOdds:
          for (std::size_t c = 0; c < layout.classes; ++c)
            accumulate(g, i, store.estimate_eo(t, i, c));
          break;
        case FairnessNotion::kMultiGroup:
          for (std::size_t k = 0; k < layout.groups; ++k)
            accumulate(g, i, store.estimate_multigroup(t, i, k));
          break;
        case FairnessNotion::kNone:
          break;
      }
    }
  }
  return out;
}

ForestGradient total_gradient(const ForestGradient& task,
                              const ForestGradient& fair) {
  ForestGradient sum = task;
  sum += fair;
  return sum;
}

double gradient_norm(const TreeGradient& g) {
  double sq = 0.0;
  for (const auto buf : buffers(g))
    for (double v : buf) sq += v * v;
  return std::sqrt(sq);
}

double gradient_norm(const ForestGradient& g) {
  double sq = 0.0;
  for (const auto& tree : g.trees)
    for (const auto buf : buffers(tree))
      for (double v : buf) sq += v * v;
  return std::sqrt(sq);
}

}  // namespace fairforest
