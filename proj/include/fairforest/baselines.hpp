#pragma once

// Comparison systems: leaf-level constraints, a history-storing reservoir,
// a two-layer MLP with an output-level constraint, and majority-label
// post-processing.

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fairforest/learner.hpp"

namespace fairforest {

/// Leaf-level DP constraints F_l = E[p_l | a=0] - E[p_l | a=1], with the
/// gradient of p_l with respect to the (w, b) of the h nodes on its path kept
/// as per-group running means. The signed difference goes into the Huber
/// penalty.
class LeafAggregateEstimator : public FairnessEstimator {
 public:
  explicit LeafAggregateEstimator(const LearnerConfig& config);

  void observe(const ObliqueForest& forest, const ForwardPass& pass,
               std::span<const double> x, std::size_t y,
               std::size_t a) override;
  FairnessGradient gradient(const ObliqueForest& forest) const override;

  nlohmann::json to_json() const override;
  void restore(const nlohmann::json& j) override;

  /// Per-group aggregate of leaf l in tree t; mean_grad_w holds the path
  /// gradient laid out as h blocks of (w..., b), root first.
  const NodeAggregate& cell(std::size_t tree, std::size_t leaf,
                            std::size_t group) const;

 private:
  TreeShape shape_;
  std::size_t trees_;
  std::size_t groups_;
  HuberParams huber_;
  double ema_decay_;
  std::vector<NodeAggregate> cells_;  // [tree][leaf][group]
};

/// Gradient of p_l with respect to the path nodes' parameters, as h blocks of
/// (d weights, 1 bias) ordered root first. Uses exclusive prefix/suffix
/// products so no routing factor is divided out.
std::vector<double> leaf_path_gradient(const TreeShape& shape,
                                       std::span<const double> nodes,
                                       std::span<const double> x,
                                       std::size_t leaf);

struct HistoryEntry {
  std::vector<double> x;
  std::size_t y = 0;
  std::size_t a = 0;
};

/// Constraint values and gradients recomputed from raw history at the current
/// parameters. Indexed [tree][node][constraint]: one constraint for DP, C for
/// equalized odds, K for multi-group.
std::vector<std::vector<std::vector<ConstraintEstimate>>> reservoir_constraints(
    std::span<const HistoryEntry> history, const ObliqueForest& forest,
    FairnessNotion notion, std::size_t groups);

/// Exact batch gradient of lambda * sum H_delta(F) over the stored history.
FairnessGradient reservoir_fairness_gradient(
    std::span<const HistoryEntry> history, const ObliqueForest& forest,
    const HuberParams& params, FairnessNotion notion, std::size_t groups);

/// lambda * sum H_delta(F) over the stored history; used as a
/// finite-difference target.
double reservoir_fairness_loss(std::span<const HistoryEntry> history,
                               const ObliqueForest& forest,
                               const HuberParams& params,
                               FairnessNotion notion, std::size_t groups);

class ReservoirEstimator : public FairnessEstimator {
 public:
  explicit ReservoirEstimator(const LearnerConfig& config);

  void observe(const ObliqueForest& forest, const ForwardPass& pass,
               std::span<const double> x, std::size_t y,
               std::size_t a) override;
  FairnessGradient gradient(const ObliqueForest& forest) const override;

  nlohmann::json to_json() const override;
  void restore(const nlohmann::json& j) override;

  const std::vector<HistoryEntry>& history() const { return history_; }

 private:
  HuberParams huber_;
  FairnessNotion notion_;
  std::size_t groups_;
  std::size_t dim_;
  std::vector<HistoryEntry> history_;
};

struct MlpParams {
  std::size_t dim = 1;
  std::size_t hidden = 64;
  std::size_t classes = 2;
  std::vector<double> w1;  // dim x hidden
  std::vector<double> b1;  // hidden
  std::vector<double> w2;  // hidden x classes
  std::vector<double> b2;  // classes

  MlpParams() = default;
  MlpParams(std::size_t d, std::size_t h, std::size_t c);

  std::size_t size() const { return w1.size() + b1.size() + w2.size() + b2.size(); }
  std::array<std::span<double>, 4> buffers();
  std::array<std::span<const double>, 4> buffers() const;
};

std::vector<double> mlp_forward(const MlpParams& p, std::span<const double> x);
/// Cross-entropy gradient, flattened.
std::vector<double> mlp_task_gradient(const MlpParams& p,
                                      std::span<const double> x,
                                      std::size_t y);
/// Soft score sum_c c * softmax_c and its flattened parameter gradient.
std::pair<double, std::vector<double>> mlp_score_gradient(
    const MlpParams& p, std::span<const double> x);

/// Two-layer ReLU network trained online with one output-level DP constraint
/// on the soft score, estimated from per-group running means.
class MlpLearner : public OnlineLearner {
 public:
  explicit MlpLearner(const LearnerConfig& config);

  StepResult step(std::span<const double> x, std::size_t y,
                  std::size_t a) override;

  const LearnerConfig& config() const override { return config_; }
  const MetricsTracker& metrics() const override { return metrics_; }
  std::uint64_t steps_taken() const override { return steps_; }

  nlohmann::json checkpoint() const override;
  void restore(const nlohmann::json& j) override;

  const MlpParams& params() const { return params_; }
  MlpParams& mutable_params() { return params_; }

  /// Feed (x, a) into the group statistics at the current parameters.
  void observe(std::span<const double> x, std::size_t a);
  /// lambda * H'(F) * grad F from the group statistics; cold until both
  /// groups are seen.
  std::pair<std::vector<double>, bool> fairness_gradient() const;
  const NodeAggregate& group_stats(std::size_t group) const {
    return stats_.at(group);
  }

 private:
  LearnerConfig config_;
  MlpParams params_;
  std::vector<NodeAggregate> stats_;  // per group; mean_grad_w is flat
  AdamState adam_;
  MetricsTracker metrics_;
  std::uint64_t steps_ = 0;
};

/// Keeps `prediction` when u < p for u ~ U[0, 1) drawn from rng, otherwise
/// returns `majority_label`.
std::size_t majority_postprocess(std::size_t prediction, double p,
                                 std::size_t majority_label,
                                 std::mt19937_64& rng);

/// Node-level forest learner whose emitted prediction is replaced by the
/// majority label with probability 1 - p. The forest still trains on every
/// instance; metrics track the emitted predictions.
class MajorityLearner : public OnlineLearner {
 public:
  explicit MajorityLearner(const LearnerConfig& config);

  StepResult step(std::span<const double> x, std::size_t y,
                  std::size_t a) override;

  const LearnerConfig& config() const override { return config_; }
  const MetricsTracker& metrics() const override { return metrics_; }
  std::uint64_t steps_taken() const override { return inner_.steps_taken(); }

  nlohmann::json checkpoint() const override;
  void restore(const nlohmann::json& j) override;

  /// Running label with the most observations so far (lowest on ties), or
  /// the fixed label.
  std::size_t majority_label() const;
  const ForestLearner& inner() const { return inner_; }

 private:
  LearnerConfig config_;
  ForestLearner inner_;
  std::vector<std::uint64_t> label_counts_;
  std::mt19937_64 rng_;
  MetricsTracker metrics_;
};

/// Builds the learner selected by config.variant.
std::unique_ptr<OnlineLearner> make_learner(const LearnerConfig& config);

/// make_learner followed by restore, using the config stored in the
/// checkpoint.
std::unique_ptr<OnlineLearner> restore_learner(const nlohmann::json& checkpoint);

}  // namespace fairforest
