#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "fairforest/data.hpp"
#include "fairforest/forest.hpp"

namespace testutil {

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n,
                                         double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = uniform(rng, lo, hi);
  return v;
}

/// Forest with every parameter drawn from U[-scale, scale].
inline fairforest::ObliqueForest random_forest(std::mt19937_64& rng,
                                               const fairforest::TreeShape& s,
                                               std::size_t trees,
                                               double scale = 1.0) {
  fairforest::ObliqueForest f;
  for (std::size_t t = 0; t < trees; ++t) {
    fairforest::TreeParams tp(s);
    for (double& v : tp.weights) v = uniform(rng, -scale, scale);
    for (double& v : tp.biases) v = uniform(rng, -scale, scale);
    for (double& v : tp.leaves) v = uniform(rng, -scale, scale);
    f.trees.push_back(std::move(tp));
  }
  return f;
}

inline std::vector<fairforest::Instance> random_instances(
    std::mt19937_64& rng, std::size_t n, std::size_t dim, std::size_t classes,
    std::size_t groups) {
  std::vector<fairforest::Instance> out;
  for (std::size_t i = 0; i < n; ++i) {
    fairforest::Instance inst;
    inst.x = random_vector(rng, dim);
    inst.y = rng() % classes;
    inst.a = rng() % groups;
    out.push_back(std::move(inst));
  }
  return out;
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

}  // namespace testutil
