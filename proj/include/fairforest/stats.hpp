#pragma once

// Per-node, per-group running means of node outputs and of their parameter
// gradients. These replace stored history when estimating group-fairness
// gradients online: every constraint is a difference of group-conditional
// expectations, and each expectation is tracked as a cumulative mean.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace fairforest {

enum class FairnessNotion {
  kNone,
  kDemographicParity,  // F = E[n | a=0] - E[n | a=1]
  kEqualizedOdds,      // F^c = E[n | y=c, a=0] - E[n | y=c, a=1]
  kMultiGroup,         // F^k = E[n] - E[n | a=k], K > 2
};

const char* to_string(FairnessNotion notion);
/// Accepts none, dp, eo, equalized_odds, multi, multigroup.
FairnessNotion parse_notion(const std::string& name);

struct GroupKey {
  std::size_t group = 0;
  std::optional<std::size_t> class_condition;  // equalized odds only
};

/// Cumulative (or optionally exponentially decayed) means of one node's
/// output and output gradient over the instances routed to one key.
struct NodeAggregate {
  std::size_t count = 0;
  double mean_output = 0.0;
  std::vector<double> mean_grad_w;
  double mean_grad_b = 0.0;

  NodeAggregate() = default;
  explicit NodeAggregate(std::size_t dim) : mean_grad_w(dim, 0.0) {}

  /// mean <- mean + (value - mean) * rate with rate = 1/count, or
  /// max(1/count, 1 - decay) when 0 < decay < 1.
  void add(double n_value, std::span<const double> grad_w, double grad_b,
           double decay = 0.0);
};

nlohmann::json aggregate_json(const NodeAggregate& a);
/// Throws kData on malformed input or a gradient length other than dim.
NodeAggregate aggregate_from(const nlohmann::json& j, std::size_t dim);

struct StoreLayout {
  FairnessNotion notion = FairnessNotion::kDemographicParity;
  std::size_t groups = 2;   // K
  std::size_t classes = 2;  // C, used by equalized odds
  std::size_t trees = 1;
  std::size_t nodes = 1;    // internal nodes per tree
  std::size_t dim = 1;
  double ema_decay = 0.0;   // 0 disables decay

  void validate() const;
  /// Keyed cells per node: K, or K * C for equalized odds.
  std::size_t cells_per_node() const;
};

/// F-hat and its gradient for one constraint. `cold` marks that a required
/// group (or class/group cell) has no observations yet; the value and
/// gradient are then zero.
struct ConstraintEstimate {
  double value = 0.0;
  std::vector<double> grad_w;
  double grad_b = 0.0;
  bool cold = false;
};

class AggregateStore {
 public:
  AggregateStore() = default;
  explicit AggregateStore(const StoreLayout& layout);

  const StoreLayout& layout() const { return layout_; }

  void update(std::size_t tree, std::size_t node, const GroupKey& key,
              double n_value, std::span<const double> grad_w, double grad_b);

  const NodeAggregate& cell(std::size_t tree, std::size_t node,
                            const GroupKey& key) const;
  /// Aggregate over all keys (used by the multi-group constraint).
  const NodeAggregate& overall(std::size_t tree, std::size_t node) const;

  /// Demographic parity, K = 2.
  ConstraintEstimate estimate(std::size_t tree, std::size_t node) const;
  /// F^k = E[n] - E[n | a=k], K > 2.
  ConstraintEstimate estimate_multigroup(std::size_t tree, std::size_t node,
                                         std::size_t k) const;
  /// F^c = E[n | y=c, a=0] - E[n | y=c, a=1].
  ConstraintEstimate estimate_eo(std::size_t tree, std::size_t node,
                                 std::size_t class_c) const;

  /// Scalar accessors for the DP constraint (value only / gradient only).
  double estimate_F(std::size_t tree, std::size_t node) const;
  ConstraintEstimate estimate_grad_F(std::size_t tree, std::size_t node) const;

  /// Number of allocated aggregates; fixed at construction.
  std::size_t cell_count() const { return cells_.size() + overall_.size(); }

  nlohmann::json to_json() const;
  static AggregateStore from_json(const nlohmann::json& j);

 private:
  std::size_t cell_index(std::size_t tree, std::size_t node,
                         const GroupKey& key) const;
  static ConstraintEstimate difference(const NodeAggregate& lhs,
                                       const NodeAggregate& rhs);

  StoreLayout layout_;
  std::vector<NodeAggregate> cells_;    // [tree][node][cell]
  std::vector<NodeAggregate> overall_;  // [tree][node]
};

}  // namespace fairforest
