#include "fairforest/stats.hpp"

#include <algorithm>

#include "fairforest/error.hpp"

namespace fairforest {

const char* to_string(FairnessNotion notion) {
  switch (notion) {
    case FairnessNotion::kNone: return "none";
    case FairnessNotion::kDemographicParity: return "dp";
    case FairnessNotion::kEqualizedOdds: return "eo";
    case FairnessNotion::kMultiGroup: return "multi";
  }
  return "none";
}

FairnessNotion parse_notion(const std::string& name) {
  if (name == "none") return FairnessNotion::kNone;
  if (name == "dp") return FairnessNotion::kDemographicParity;
  if (name == "eo" || name == "equalized_odds")
    return FairnessNotion::kEqualizedOdds;
  if (name == "multi" || name == "multigroup") return FairnessNotion::kMultiGroup;
  fail(ErrorKind::kConfig, "unknown fairness notion '" + name + "'");
}

void NodeAggregate::add(double n_value, std::span<const double> grad_w,
                        double grad_b, double decay) {
  ++count;
  double rate = 1.0 / static_cast<double>(count);
  if (decay > 0.0 && decay < 1.0) rate = std::max(rate, 1.0 - decay);
  mean_output += (n_value - mean_output) * rate;
  for (std::size_t k = 0; k < mean_grad_w.size(); ++k)
    mean_grad_w[k] += (grad_w[k] - mean_grad_w[k]) * rate;
  mean_grad_b += (grad_b - mean_grad_b) * rate;
}

void StoreLayout::validate() const {
  require(groups >= 2, ErrorKind::kConfig, "group count K must be >= 2");
  require(trees >= 1 && nodes >= 1 && dim >= 1, ErrorKind::kConfig,
          "aggregate store needs at least one tree, node and feature");
  require(ema_decay >= 0.0 && ema_decay < 1.0, ErrorKind::kConfig,
          "ema decay must be in [0, 1)");
  if (notion == FairnessNotion::kEqualizedOdds) {
    require(groups == 2, ErrorKind::kConfig,
            "equalized odds is defined for a binary protected attribute");
    require(classes >= 1, ErrorKind::kConfig, "class count must be >= 1");
  }
  if (notion == FairnessNotion::kDemographicParity)
    require(groups == 2, ErrorKind::kConfig,
            "demographic parity needs K = 2; use the multi-group notion");
  if (notion == FairnessNotion::kMultiGroup)
    require(groups > 2, ErrorKind::kConfig, "multi-group notion needs K > 2");
}

std::size_t StoreLayout::cells_per_node() const {
  return notion == FairnessNotion::kEqualizedOdds ? groups * classes : groups;
}

AggregateStore::AggregateStore(const StoreLayout& layout) : layout_(layout) {
  layout_.validate();
  cells_.assign(layout_.trees * layout_.nodes * layout_.cells_per_node(),
                NodeAggregate(layout_.dim));
  overall_.assign(layout_.trees * layout_.nodes, NodeAggregate(layout_.dim));
}

std::size_t AggregateStore::cell_index(std::size_t tree, std::size_t node,
                                       const GroupKey& key) const {
  if (tree >= layout_.trees || node >= layout_.nodes)
    fail(ErrorKind::kShape, "tree/node index outside the store layout");
  if (key.group >= layout_.groups)
    fail(ErrorKind::kDomain, "group " + std::to_string(key.group) +
                                 " outside [0, " +
                                 std::to_string(layout_.groups) + ")");
  std::size_t cell = key.group;
  if (layout_.notion == FairnessNotion::kEqualizedOdds) {
    if (!key.class_condition)
      fail(ErrorKind::kPrecondition,
           "equalized odds aggregates need a class condition");
    if (*key.class_condition >= layout_.classes)
      fail(ErrorKind::kDomain, "class condition outside [0, C)");
    cell = *key.class_condition * layout_.groups + key.group;
  } else if (key.class_condition) {
    fail(ErrorKind::kPrecondition,
         "class condition is only meaningful for equalized odds");
  }
  return (tree * layout_.nodes + node) * layout_.cells_per_node() + cell;
}

void AggregateStore::update(std::size_t tree, std::size_t node,
                            const GroupKey& key, double n_value,
                            std::span<const double> grad_w, double grad_b) {
  const std::size_t idx = cell_index(tree, node, key);
  if (!(n_value >= 0.0 && n_value <= 1.0))
    fail(ErrorKind::kDomain, "node output must lie in [0, 1]");
  if (grad_w.size() != layout_.dim)
    fail(ErrorKind::kShape, "gradient length does not match store dim");
  cells_[idx].add(n_value, grad_w, grad_b, layout_.ema_decay);
  overall_[tree * layout_.nodes + node].add(n_value, grad_w, grad_b,
                                            layout_.ema_decay);
}

const NodeAggregate& AggregateStore::cell(std::size_t tree, std::size_t node,
                                          const GroupKey& key) const {
  return cells_[cell_index(tree, node, key)];
}

const NodeAggregate& AggregateStore::overall(std::size_t tree,
                                             std::size_t node) const {
  if (tree >= layout_.trees || node >= layout_.nodes)
    fail(ErrorKind::kShape, "tree/node index outside the store layout");
  return overall_[tree * layout_.nodes + node];
}

ConstraintEstimate AggregateStore::difference(const NodeAggregate& lhs,
                                              const NodeAggregate& rhs) {
  ConstraintEstimate est;
  est.grad_w.assign(lhs.mean_grad_w.size(), 0.0);
  if (lhs.count == 0 || rhs.count == 0) {
    est.cold = true;
    return est;
  }
  est.value = lhs.mean_output - rhs.mean_output;
  for (std::size_t k = 0; k < est.grad_w.size(); ++k)
    est.grad_w[k] = lhs.mean_grad_w[k] - rhs.mean_grad_w[k];
  est.grad_b = lhs.mean_grad_b - rhs.mean_grad_b;
  return est;
}

ConstraintEstimate AggregateStore::estimate(std::size_t tree,
                                            std::size_t node) const {
  if (layout_.notion != FairnessNotion::kDemographicParity &&
      layout_.notion != FairnessNotion::kNone)
    fail(ErrorKind::kPrecondition,
         "demographic parity estimate requested from a non-DP store");
  return difference(cell(tree, node, {0, std::nullopt}),
                    cell(tree, node, {1, std::nullopt}));
}

ConstraintEstimate AggregateStore::estimate_multigroup(std::size_t tree,
                                                       std::size_t node,
                                                       std::size_t k) const {
  if (layout_.notion == FairnessNotion::kEqualizedOdds)
    fail(ErrorKind::kPrecondition,
         "multi-group estimate requested from an equalized-odds store");
  return difference(overall(tree, node), cell(tree, node, {k, std::nullopt}));
}

ConstraintEstimate AggregateStore::estimate_eo(std::size_t tree,
                                               std::size_t node,
                                               std::size_t class_c) const {
  if (layout_.notion != FairnessNotion::kEqualizedOdds)
    fail(ErrorKind::kPrecondition,
         "equalized-odds estimate requested from a non-EO store");
  return difference(cell(tree, node, {0, class_c}),
                    cell(tree, node, {1, class_c}));
}

double AggregateStore::estimate_F(std::size_t tree, std::size_t node) const {
  return estimate(tree, node).value;
}

ConstraintEstimate AggregateStore::estimate_grad_F(std::size_t tree,
                                                   std::size_t node) const {
  return estimate(tree, node);
}

nlohmann::json aggregate_json(const NodeAggregate& a) {
  return {{"count", a.count},
          {"mean_output", a.mean_output},
          {"mean_grad_w", a.mean_grad_w},
          {"mean_grad_b", a.mean_grad_b}};
}

NodeAggregate aggregate_from(const nlohmann::json& j, std::size_t dim) {
  NodeAggregate a;
  try {
    a.count = j.at("count").get<std::size_t>();
    a.mean_output = j.at("mean_output").get<double>();
    a.mean_grad_w = j.at("mean_grad_w").get<std::vector<double>>();
    a.mean_grad_b = j.at("mean_grad_b").get<double>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kData, std::string("bad aggregate snapshot: ") + e.what());
  }
  if (a.mean_grad_w.size() != dim)
    fail(ErrorKind::kData, "aggregate snapshot has wrong gradient length");
  return a;
}

// Layout: {"layout": {...}, "cells": [tree][node][cell], "overall":
// [tree][node]}, each entry {count, mean_output, mean_grad_w, mean_grad_b}.
nlohmann::json AggregateStore::to_json() const {
  nlohmann::json cells = nlohmann::json::array();
  nlohmann::json overall = nlohmann::json::array();
  const std::size_t per = layout_.cells_per_node();
  for (std::size_t t = 0; t < layout_.trees; ++t) {
    nlohmann::json tree_cells = nlohmann::json::array();
    nlohmann::json tree_overall = nlohmann::json::array();
    for (std::size_t i = 0; i < layout_.nodes; ++i) {
      nlohmann::json node_cells = nlohmann::json::array();
      for (std::size_t c = 0; c < per; ++c)
        node_cells.push_back(
            aggregate_json(cells_[(t * layout_.nodes + i) * per + c]));
      tree_cells.push_back(std::move(node_cells));
      tree_overall.push_back(aggregate_json(overall_[t * layout_.nodes + i]));
    }
    cells.push_back(std::move(tree_cells));
    overall.push_back(std::move(tree_overall));
  }
  return {{"layout",
           {{"notion", to_string(layout_.notion)},
            {"groups", layout_.groups},
            {"classes", layout_.classes},
            {"trees", layout_.trees},
            {"nodes", layout_.nodes},
            {"dim", layout_.dim},
            {"ema_decay", layout_.ema_decay}}},
          {"cells", std::move(cells)},
          {"overall", std::move(overall)}};
}

AggregateStore AggregateStore::from_json(const nlohmann::json& j) {
  try {
    const auto& l = j.at("layout");
    StoreLayout layout;
    layout.notion = parse_notion(l.at("notion").get<std::string>());
    layout.groups = l.at("groups").get<std::size_t>();
    layout.classes = l.at("classes").get<std::size_t>();
    layout.trees = l.at("trees").get<std::size_t>();
    layout.nodes = l.at("nodes").get<std::size_t>();
    layout.dim = l.at("dim").get<std::size_t>();
    layout.ema_decay = l.at("ema_decay").get<double>();
    AggregateStore store(layout);
    const std::size_t per = layout.cells_per_node();
    const auto& cells = j.at("cells");
    const auto& overall = j.at("overall");
    for (std::size_t t = 0; t < layout.trees; ++t)
      for (std::size_t i = 0; i < layout.nodes; ++i) {
        for (std::size_t c = 0; c < per; ++c)
          store.cells_[(t * layout.nodes + i) * per + c] =
              aggregate_from(cells.at(t).at(i).at(c), layout.dim);
        store.overall_[t * layout.nodes + i] =
            aggregate_from(overall.at(t).at(i), layout.dim);
      }
    return store;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kData, std::string("malformed aggregate snapshot: ") +
                               e.what());
  }
}

}  // namespace fairforest
