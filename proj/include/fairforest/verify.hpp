#pragma once

// Oracles and bound checkers: central finite differences, the soft-output DP
// bound h * 2^h * eps, and the aggregate-vs-exact fairness gradient audit.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fairforest/forest.hpp"
#include "fairforest/gradients.hpp"
#include "fairforest/instance.hpp"
#include "fairforest/learner.hpp"
#include "fairforest/stats.hpp"

namespace fairforest {

struct BoundReport {
  std::string name;
  double theoretical = 0.0;
  double observed = 0.0;
  double slack = 0.0;  // theoretical + tolerance - observed
  double tolerance = 0.0;
  bool pass = false;
  std::optional<std::size_t> step;
  std::optional<std::size_t> tree;
  std::optional<std::size_t> node;
};

BoundReport make_report(std::string name, double theoretical, double observed,
                        double tolerance);
nlohmann::json to_json(const BoundReport& report);
nlohmann::json to_json(std::span<const BoundReport> reports);

using ForestLoss = std::function<double(const ObliqueForest&)>;

/// (loss(theta + step e_k) - loss(theta - step e_k)) / (2 step) for every
/// parameter. Throws kNumerical on a non-finite loss.
ForestGradient finite_difference(const ForestLoss& loss,
                                 const ObliqueForest& forest, double step);

/// |a - b| / max(|a|, |b|, floor).
double relative_error(double a, double b, double floor = 1e-6);
double max_relative_error(const ForestGradient& a, const ForestGradient& b,
                          double floor = 1e-6);

struct GradcheckConfig {
  std::size_t trials = 100;
  std::uint64_t seed = 0;
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Test hook: perturbs the analytic gradient so the check must fail.
  bool corrupt = false;
};

struct GradcheckTrial {
  int height = 1;
  std::size_t dim = 1;
  std::size_t classes = 2;
  std::size_t trees = 1;
  double max_rel_error = 0.0;
  double step_consistency = 0.0;  // FD at step vs step / 10
};

struct GradcheckReport {
  std::vector<GradcheckTrial> trials;
  double max_rel_error = 0.0;
  double max_step_consistency = 0.0;
  double tolerance = 0.0;
  bool pass = false;

  nlohmann::json to_json() const;
};

/// Random (h <= 3, d <= 5, c <= 3, |T| <= 3) forests and instances; compares
/// the analytic cross-entropy gradient with central differences.
GradcheckReport gradcheck(const GradcheckConfig& config);

/// Soft-output DP against h * 2^h * eps on a copy of the forest whose leaf
/// rows are scaled to unit norm. DP is the L2 norm of the difference of group
/// mean outputs; eps is the max over nodes of the mean |n(x0) - n(x1)| over
/// all cross-group pairs. Requires two equally sized nonempty groups and at
/// most 10^6 pairs.
BoundReport check_dp_bound(const ObliqueForest& forest,
                           std::span<const Instance> dataset);

struct TraceStep {
  ObliqueForest params;  // parameters used to predict on `instance`
  Instance instance;
};

/// Runs the learner over the source, recording parameters before each step.
std::vector<TraceStep> record_trace(ForestLearner& learner,
                                    InstanceSource& source,
                                    std::size_t max_steps);

/// Replays the trace into a fresh aggregate store and, at every step and
/// constraint, compares the Huber gradient from the aggregates with the one
/// recomputed exactly from history at the current parameters. One report per
/// step holding the worst constraint; bound delta * B / 2. With bound <= 0,
/// B is the max input norm in the trace.
std::vector<BoundReport> audit_estimation_error(
    std::span<const TraceStep> trace, const HuberParams& huber,
    FairnessNotion notion, std::size_t groups, double bound = 0.0);

}  // namespace fairforest
