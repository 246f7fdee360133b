#pragma once

// The online loop. Each step predicts with the current parameters, records
// the prediction, folds the revealed feedback into the fairness statistics
// and applies one Adam update with the task gradient plus the fairness
// gradient.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fairforest/forest.hpp"
#include "fairforest/gradients.hpp"
#include "fairforest/instance.hpp"
#include "fairforest/stats.hpp"

namespace fairforest {

struct AdamConfig {
  double learning_rate = 2e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

/// Adam moments for an ordered list of parameter buffers.
class AdamState {
 public:
  AdamState() = default;
  AdamState(const AdamConfig& config, std::vector<std::size_t> buffer_sizes);

  /// One bias-corrected Adam update; params[i] and grads[i] pair up with the
  /// buffer sizes given at construction.
  void apply(std::span<const std::span<double>> params,
             std::span<const std::span<const double>> grads);

  std::uint64_t step_count() const { return step_; }
  const AdamConfig& config() const { return config_; }

  nlohmann::json to_json() const;
  static AdamState from_json(const nlohmann::json& j);

 private:
  AdamConfig config_;
  std::vector<std::vector<double>> first_;
  std::vector<std::vector<double>> second_;
  std::uint64_t step_ = 0;
};

/// Running accuracy and demographic parity over every prediction made so far.
/// DP compares per-group mean predicted labels (positive rates for binary
/// tasks); with K > 2 groups it is max_k |overall rate - rate of group k|.
class MetricsTracker {
 public:
  MetricsTracker() = default;
  explicit MetricsTracker(std::size_t groups);

  void record(std::size_t prediction, double soft_score, std::size_t y,
              std::size_t a);

  std::size_t total() const { return total_; }
  std::size_t correct() const { return correct_; }
  double accuracy() const;
  /// Absent until at least two groups have been observed.
  std::optional<double> dp_hard() const;
  std::optional<double> dp_soft() const;
  double group_rate(std::size_t group) const;

  nlohmann::json to_json() const;
  static MetricsTracker from_json(const nlohmann::json& j);

 private:
  std::optional<double> dp_of(const std::vector<double>& sums,
                              double overall) const;

  std::size_t total_ = 0;
  std::size_t correct_ = 0;
  std::vector<std::size_t> group_count_;
  std::vector<double> group_pred_sum_;
  std::vector<double> group_soft_sum_;
  double pred_sum_ = 0.0;
  double soft_sum_ = 0.0;
};

std::optional<double> dp_metric(const MetricsTracker& tracker);

enum class Variant {
  kNode,       // node-level constraints from aggregate statistics
  kLeaf,       // leaf-level constraints from aggregate statistics
  kReservoir,  // node-level constraints recomputed from stored history
  kMlp,        // two-layer MLP with an output-level constraint
  kMajority,   // node-level learner plus majority post-processing
};

const char* to_string(Variant v);
Variant parse_variant(const std::string& name);

enum class MajoritySource { kRunning, kFixed };

struct LearnerConfig {
  TreeShape shape{4, 1, 2};
  std::size_t trees = 3;
  HuberParams huber{0.01, 0.0};
  FairnessNotion notion = FairnessNotion::kDemographicParity;
  std::size_t groups = 2;
  AdamConfig adam;
  std::uint64_t seed = 0;
  double ema_decay = 0.0;
  Variant variant = Variant::kNode;
  std::size_t mlp_hidden = 64;
  double majority_p = 0.5;
  MajoritySource majority_source = MajoritySource::kRunning;
  std::size_t majority_label = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static LearnerConfig from_json(const nlohmann::json& j);
};

struct StepResult {
  std::size_t prediction = 0;
  double soft_score = 0.0;  // expected label under softmax(f(x))
  double accuracy = 0.0;
  std::optional<double> dp_hard;
  std::optional<double> dp_soft;
  double grad_norm_total = 0.0;
  double grad_norm_fair = 0.0;
  std::vector<double> tree_grad_norms;  // per-tree norm of the total gradient
};

class OnlineLearner {
 public:
  virtual ~OnlineLearner() = default;

  /// Predict on x, then learn from the revealed (y, a).
  virtual StepResult step(std::span<const double> x, std::size_t y,
                          std::size_t a) = 0;

  virtual const LearnerConfig& config() const = 0;
  virtual const MetricsTracker& metrics() const = 0;
  virtual std::uint64_t steps_taken() const = 0;

  virtual nlohmann::json checkpoint() const = 0;
  virtual void restore(const nlohmann::json& j) = 0;
};

/// Strategy producing the fairness gradient of a forest learner.
class FairnessEstimator {
 public:
  virtual ~FairnessEstimator() = default;

  /// Record the current instance, evaluated at the current parameters.
  virtual void observe(const ObliqueForest& forest, const ForwardPass& pass,
                       std::span<const double> x, std::size_t y,
                       std::size_t a) = 0;
  virtual FairnessGradient gradient(const ObliqueForest& forest) const = 0;

  virtual nlohmann::json to_json() const = 0;
  virtual void restore(const nlohmann::json& j) = 0;
};

/// Node-level constraints estimated from per-node aggregate statistics.
class NodeAggregateEstimator : public FairnessEstimator {
 public:
  explicit NodeAggregateEstimator(const LearnerConfig& config);

  void observe(const ObliqueForest& forest, const ForwardPass& pass,
               std::span<const double> x, std::size_t y,
               std::size_t a) override;
  FairnessGradient gradient(const ObliqueForest& forest) const override;

  nlohmann::json to_json() const override { return store_.to_json(); }
  void restore(const nlohmann::json& j) override;

  const AggregateStore& store() const { return store_; }

 private:
  HuberParams huber_;
  AggregateStore store_;
};

class ForestLearner : public OnlineLearner {
 public:
  /// Node-level estimator by default.
  explicit ForestLearner(const LearnerConfig& config);
  ForestLearner(const LearnerConfig& config,
                std::unique_ptr<FairnessEstimator> estimator);

  StepResult step(std::span<const double> x, std::size_t y,
                  std::size_t a) override;

  const LearnerConfig& config() const override { return config_; }
  const MetricsTracker& metrics() const override { return metrics_; }
  std::uint64_t steps_taken() const override { return steps_; }

  const ObliqueForest& forest() const { return forest_; }
  ObliqueForest& mutable_forest() { return forest_; }
  const FairnessEstimator& estimator() const { return *estimator_; }
  const AdamState& adam() const { return adam_; }

  nlohmann::json checkpoint() const override;
  void restore(const nlohmann::json& j) override;

 private:
  LearnerConfig config_;
  ObliqueForest forest_;
  std::unique_ptr<FairnessEstimator> estimator_;
  AdamState adam_;
  MetricsTracker metrics_;
  std::uint64_t steps_ = 0;
};

/// Shared argument checks for every learner's step().
void validate_step_input(const LearnerConfig& config,
                         std::span<const double> x, std::size_t y,
                         std::size_t a);

/// Sum_c c * softmax(logits)_c; the positive-class probability when c = 2.
double soft_score(std::span<const double> logits);

struct TrajectoryRow {
  std::uint64_t step = 0;
  std::size_t y = 0;
  std::size_t a = 0;
  std::size_t prediction = 0;
  double running_accuracy = 0.0;
  std::optional<double> dp_hard;
  std::optional<double> dp_soft;
  double grad_norm_total = 0.0;
  double grad_norm_fair = 0.0;
};

using RowSink = std::function<void(const TrajectoryRow&, const StepResult&)>;

/// Feeds every instance through learner.step and reports one row per step.
/// Errors are rethrown with the failing step index. Returns rows consumed.
std::uint64_t run_stream(OnlineLearner& learner, InstanceSource& source,
                         const RowSink& sink);
std::vector<TrajectoryRow> run_stream(OnlineLearner& learner,
                                      InstanceSource& source);

}  // namespace fairforest
