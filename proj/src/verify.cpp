#include "fairforest/verify.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "fairforest/baselines.hpp"
#include "fairforest/error.hpp"

namespace fairforest {

BoundReport make_report(std::string name, double theoretical, double observed,
                        double tolerance) {
  BoundReport r;
  r.name = std::move(name);
  r.theoretical = theoretical;
  r.observed = observed;
  r.tolerance = tolerance;
  r.slack = theoretical + tolerance - observed;
  r.pass = observed <= theoretical + tolerance;
  return r;
}

nlohmann::json to_json(const BoundReport& report) {
  nlohmann::json j = {{"name", report.name},
                      {"theoretical", report.theoretical},
                      {"observed", report.observed},
                      {"slack", report.slack},
                      {"tolerance", report.tolerance},
                      {"pass", report.pass}};
  if (report.step) j["step"] = *report.step;
  if (report.tree) j["tree"] = *report.tree;
  if (report.node) j["node"] = *report.node;
  return j;
}

nlohmann::json to_json(std::span<const BoundReport> reports) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : reports) out.push_back(to_json(r));
  return out;
}

ForestGradient finite_difference(const ForestLoss& loss,
                                 const ObliqueForest& forest, double step) {
  require(step > 0.0, ErrorKind::kConfig, "finite-difference step must be > 0");
  ObliqueForest probe = forest;
  ForestGradient grad = ForestGradient::zeros_like(forest);
  for (std::size_t t = 0; t < probe.tree_count(); ++t) {
    auto params = buffers(probe.trees[t]);
    auto out = buffers(grad.trees[t]);
    for (std::size_t b = 0; b < params.size(); ++b)
      for (std::size_t k = 0; k < params[b].size(); ++k) {
        const double saved = params[b][k];
        params[b][k] = saved + step;
        const double up = loss(probe);
        params[b][k] = saved - step;
        const double down = loss(probe);
        params[b][k] = saved;
        if (!std::isfinite(up) || !std::isfinite(down))
          fail(ErrorKind::kNumerical,
               "non-finite loss during finite differences in tree " +
                   std::to_string(t));
        out[b][k] = (up - down) / (2.0 * step);
      }
  }
  return grad;
}

double relative_error(double a, double b, double floor) {
  const double scale = std::max({std::abs(a), std::abs(b), floor});
  return std::abs(a - b) / scale;
}

double max_relative_error(const ForestGradient& a, const ForestGradient& b,
                          double floor) {
  if (a.trees.size() != b.trees.size())
    fail(ErrorKind::kShape, "gradient tree counts differ");
  double worst = 0.0;
  for (std::size_t t = 0; t < a.trees.size(); ++t) {
    const auto lhs = buffers(a.trees[t]);
    const auto rhs = buffers(b.trees[t]);
    for (std::size_t buf = 0; buf < lhs.size(); ++buf) {
      if (lhs[buf].size() != rhs[buf].size())
        fail(ErrorKind::kShape, "gradient shapes differ");
      for (std::size_t k = 0; k < lhs[buf].size(); ++k)
        worst = std::max(worst, relative_error(lhs[buf][k], rhs[buf][k], floor));
    }
  }
  return worst;
}

nlohmann::json GradcheckReport::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& t : trials)
    rows.push_back({{"height", t.height},
                    {"dim", t.dim},
                    {"classes", t.classes},
                    {"trees", t.trees},
                    {"max_rel_error", t.max_rel_error},
                    {"step_consistency", t.step_consistency}});
  return {{"trials", trials.size()},
          {"max_rel_error", max_rel_error},
          {"max_step_consistency", max_step_consistency},
          {"tolerance", tolerance},
          {"pass", pass},
          {"per_trial", std::move(rows)}};
}

GradcheckReport gradcheck(const GradcheckConfig& config) {
  require(config.trials >= 1, ErrorKind::kConfig, "trials must be >= 1");
  require(config.step > 0.0, ErrorKind::kConfig, "step must be > 0");
  std::mt19937_64 rng(config.seed);
  auto pick = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };
  std::uniform_real_distribution<double> unit(-1.0, 1.0);

  GradcheckReport report;
  report.tolerance = config.tolerance;
  for (std::size_t trial = 0; trial < config.trials; ++trial) {
    GradcheckTrial row;
    row.height = static_cast<int>(pick(1, 3));
    row.dim = pick(1, 5);
    row.classes = pick(2, 3);
    row.trees = pick(1, 3);
    const TreeShape shape{row.height, row.dim, row.classes};
    ObliqueForest forest = init_forest(shape, row.trees, rng);
    for (auto& tree : forest.trees) {
      for (double& v : tree.biases) v = unit(rng);
      for (double& v : tree.leaves) v = unit(rng);
    }
    std::vector<double> x(row.dim);
    for (double& v : x) v = 2.0 * unit(rng);
    const std::size_t y = pick(0, row.classes - 1);

    ForestGradient analytic = task_gradient(forest, x, y);
    if (config.corrupt) analytic.trees[0].leaves[0] += 1e-2;
    const ForestLoss loss = [&](const ObliqueForest& f) {
      return cross_entropy(f, x, y);
    };
    const ForestGradient coarse = finite_difference(loss, forest, config.step);
    const ForestGradient fine =
        finite_difference(loss, forest, config.step / 10.0);
    row.max_rel_error = max_relative_error(analytic, coarse);
    row.step_consistency = max_relative_error(coarse, fine);
    if (!std::isfinite(row.max_rel_error))
      fail(ErrorKind::kNumerical, "non-finite gradient error in trial " +
                                      std::to_string(trial));
    report.max_rel_error = std::max(report.max_rel_error, row.max_rel_error);
    report.max_step_consistency =
        std::max(report.max_step_consistency, row.step_consistency);
    report.trials.push_back(row);
  }
  report.pass = report.max_rel_error <= config.tolerance;
  return report;
}

BoundReport check_dp_bound(const ObliqueForest& forest,
                           std::span<const Instance> dataset) {
  forest.validate();
  std::vector<const Instance*> group0;
  std::vector<const Instance*> group1;
  for (const auto& inst : dataset) {
    if (inst.a == 0) group0.push_back(&inst);
    else if (inst.a == 1) group1.push_back(&inst);
    else fail(ErrorKind::kPrecondition, "dp bound needs a binary group label");
  }
  if (group0.empty() || group0.size() != group1.size())
    fail(ErrorKind::kPrecondition,
         "dp bound needs two nonempty groups of equal size (got " +
             std::to_string(group0.size()) + " and " +
             std::to_string(group1.size()) + ")");
  if (group0.size() * group1.size() > 1000000)
    fail(ErrorKind::kPrecondition, "dp bound pair count exceeds 10^6");

  ObliqueForest unit = forest;
  for (auto& tree : unit.trees)
    for (std::size_t l = 0; l < tree.shape.leaf_count(); ++l) {
      auto row = tree.leaf(l);
      double sq = 0.0;
      for (double v : row) sq += v * v;
      if (sq > 0.0)
        for (double& v : row) v /= std::sqrt(sq);
    }

  const TreeShape s = unit.shape();
  const std::size_t m = s.node_count();
  const double n_group = static_cast<double>(group0.size());

  std::vector<double> diff(s.classes, 0.0);
  std::vector<std::vector<double>> nodes0;
  std::vector<std::vector<double>> nodes1;
  for (const Instance* inst : group0) {
    const auto pass = forward_pass(unit, inst->x);
    for (std::size_t c = 0; c < s.classes; ++c) diff[c] += pass.output[c] / n_group;
    std::vector<double> all;
    for (const auto& tp : pass.trees) all.insert(all.end(), tp.nodes.begin(), tp.nodes.end());
    nodes0.push_back(std::move(all));
  }
  for (const Instance* inst : group1) {
    const auto pass = forward_pass(unit, inst->x);
    for (std::size_t c = 0; c < s.classes; ++c) diff[c] -= pass.output[c] / n_group;
    std::vector<double> all;
    for (const auto& tp : pass.trees) all.insert(all.end(), tp.nodes.begin(), tp.nodes.end());
    nodes1.push_back(std::move(all));
  }
  double dp_sq = 0.0;
  for (double v : diff) dp_sq += v * v;
  const double dp = std::sqrt(dp_sq);

  double eps = 0.0;
  std::size_t worst_tree = 0;
  std::size_t worst_node = 0;
  const double pairs = n_group * n_group;
  for (std::size_t k = 0; k < unit.tree_count() * m; ++k) {
    double sum = 0.0;
    for (const auto& u : nodes0)
      for (const auto& v : nodes1) sum += std::abs(u[k] - v[k]);
    const double mean = sum / pairs;
    if (mean > eps) {
      eps = mean;
      worst_tree = k / m;
      worst_node = k % m;
    }
  }
  const double h = static_cast<double>(s.height);
  const double bound = h * std::ldexp(1.0, s.height) * eps;
  BoundReport r = make_report("dp_bound", bound, dp, 1e-9);
  r.tree = worst_tree;
  r.node = worst_node;
  return r;
}

std::vector<TraceStep> record_trace(ForestLearner& learner,
                                    InstanceSource& source,
                                    std::size_t max_steps) {
  std::vector<TraceStep> trace;
  while (trace.size() < max_steps) {
    auto inst = source.next();
    if (!inst) break;
    trace.push_back(TraceStep{learner.forest(), *inst});
    learner.step(inst->x, inst->y, inst->a);
  }
  return trace;
}

namespace {

double gradient_gap(const ConstraintEstimate& lhs, const ConstraintEstimate& rhs,
                    double delta) {
  const auto [lw, lb] = huber_gradient(lhs, delta);
  const auto [rw, rb] = huber_gradient(rhs, delta);
  double sq = (lb - rb) * (lb - rb);
  for (std::size_t k = 0; k < lw.size(); ++k)
    sq += (lw[k] - rw[k]) * (lw[k] - rw[k]);
  return std::sqrt(sq);
}

}  // namespace

std::vector<BoundReport> audit_estimation_error(
    std::span<const TraceStep> trace, const HuberParams& huber,
    FairnessNotion notion, std::size_t groups, double bound) {
  if (trace.empty()) fail(ErrorKind::kPrecondition, "audit trace is empty");
  huber.validate();
  require(notion != FairnessNotion::kNone, ErrorKind::kConfig,
          "audit needs a fairness notion");
  const ObliqueForest& first = trace.front().params;
  const TreeShape s = first.shape();
  if (bound <= 0.0) {
    bound = 0.0;
    for (const auto& step : trace) {
      double sq = 0.0;
      for (double v : step.instance.x) sq += v * v;
      bound = std::max(bound, std::sqrt(sq));
    }
  }
  const double theoretical = huber.delta * bound / 2.0;

  AggregateStore store(StoreLayout{notion, groups, s.classes,
                                   first.tree_count(), s.node_count(), s.dim,
                                   0.0});
  std::vector<HistoryEntry> history;
  std::vector<BoundReport> reports;
  for (std::size_t t = 0; t < trace.size(); ++t) {
    const ObliqueForest& params = trace[t].params;
    const Instance& inst = trace[t].instance;
    if (!(params.shape() == s) || params.tree_count() != first.tree_count())
      fail(ErrorKind::kShape, "trace parameters change shape at step " +
                                  std::to_string(t));
    const auto pass = forward_pass(params, inst.x);
    GroupKey key{inst.a, std::nullopt};
    if (notion == FairnessNotion::kEqualizedOdds) key.class_condition = inst.y;
    for (std::size_t tree = 0; tree < params.tree_count(); ++tree)
      for (std::size_t i = 0; i < s.node_count(); ++i) {
        const double n = pass.trees[tree].nodes[i];
        const auto [gw, gb] = node_grad(n, inst.x);
        store.update(tree, i, key, n, gw, gb);
      }
    history.push_back(HistoryEntry{inst.x, inst.y, inst.a});

    const auto exact = reservoir_constraints(history, params, notion, groups);
    double worst = 0.0;
    std::size_t worst_tree = 0;
    std::size_t worst_node = 0;
    for (std::size_t tree = 0; tree < exact.size(); ++tree)
      for (std::size_t i = 0; i < exact[tree].size(); ++i)
        for (std::size_t c = 0; c < exact[tree][i].size(); ++c) {
          ConstraintEstimate approx;
          switch (notion) {
            case FairnessNotion::kEqualizedOdds:
              approx = store.estimate_eo(tree, i, c);
              break;
            case FairnessNotion::kMultiGroup:
              approx = store.estimate_multigroup(tree, i, c);
              break;
            default:
              approx = store.estimate(tree, i);
              break;
          }
          const double gap = gradient_gap(approx, exact[tree][i][c], huber.delta);
          if (gap > worst) {
            worst = gap;
            worst_tree = tree;
            worst_node = i;
          }
        }
    BoundReport r = make_report("estimation_error", theoretical, worst, 1e-9);
    r.step = t;
    r.tree = worst_tree;
    r.node = worst_node;
    reports.push_back(std::move(r));
  }
  return reports;
}

}  // namespace fairforest
