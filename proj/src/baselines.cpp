#include "fairforest/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

#include "fairforest/error.hpp"
#include "fairforest/serialize.hpp"

namespace fairforest {

namespace {

// Heap slots (node indices) visited from the root to leaf l, with the branch
// taken at each. Root first.
std::vector<PathStep> heap_path(const TreeShape& shape, std::size_t leaf) {
  std::vector<PathStep> path(static_cast<std::size_t>(shape.height));
  std::size_t slot = shape.node_count() + leaf;
  for (std::size_t depth = path.size(); depth-- > 0;) {
    const std::size_t parent = (slot - 1) / 2;
    path[depth] = PathStep{parent, slot == 2 * parent + 1};
    slot = parent;
  }
  return path;
}

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::string rng_state(const std::mt19937_64& rng) {
  std::ostringstream out;
  out << rng;
  return out.str();
}

std::mt19937_64 rng_from_state(const std::string& state) {
  std::mt19937_64 rng;
  std::istringstream in(state);
  in >> rng;
  if (in.fail()) fail(ErrorKind::kData, "bad rng state in checkpoint");
  return rng;
}

void check_checkpoint_header(const nlohmann::json& j,
                             const LearnerConfig& config) {
  if (field<std::string>(j, "format") != "fairforest-checkpoint")
    fail(ErrorKind::kData, "not a checkpoint document");
  if (j.at("config") != config.to_json())
    fail(ErrorKind::kConfig, "checkpoint was written for a different config");
}

}  // namespace

// Leaf-level estimator

LeafAggregateEstimator::LeafAggregateEstimator(const LearnerConfig& config)
    : shape_(config.shape),
      trees_(config.trees),
      groups_(config.groups),
      huber_(config.huber),
      ema_decay_(config.ema_decay) {
  if (config.notion == FairnessNotion::kNone) huber_.lambda = 0.0;
  const std::size_t width =
      static_cast<std::size_t>(shape_.height) * (shape_.dim + 1);
  cells_.assign(trees_ * shape_.leaf_count() * groups_, NodeAggregate(width));
}

std::vector<double> leaf_path_gradient(const TreeShape& shape,
                                       std::span<const double> nodes,
                                       std::span<const double> x,
                                       std::size_t leaf) {
  const auto path = heap_path(shape, leaf);
  const std::size_t h = path.size();
  std::vector<double> factor(h);
  for (std::size_t k = 0; k < h; ++k) {
    const double n = nodes[path[k].node];
    factor[k] = path[k].left ? n : 1.0 - n;
  }
  // prefix[k] = prod_{j<k} factor[j], suffix[k] = prod_{j>k} factor[j].
  std::vector<double> prefix(h, 1.0);
  std::vector<double> suffix(h, 1.0);
  for (std::size_t k = 1; k < h; ++k) prefix[k] = prefix[k - 1] * factor[k - 1];
  for (std::size_t k = h - 1; k-- > 0;) suffix[k] = suffix[k + 1] * factor[k + 1];

  const std::size_t block = shape.dim + 1;
  std::vector<double> grad(h * block);
  for (std::size_t k = 0; k < h; ++k) {
    const double n = nodes[path[k].node];
    const double slope = n * (1.0 - n) * (path[k].left ? 1.0 : -1.0);
    const double dz = prefix[k] * suffix[k] * slope;
    for (std::size_t q = 0; q < shape.dim; ++q) grad[k * block + q] = dz * x[q];
    grad[k * block + shape.dim] = dz;
  }
  return grad;
}

void LeafAggregateEstimator::observe(const ObliqueForest& forest,
                                     const ForwardPass& pass,
                                     std::span<const double> x, std::size_t,
                                     std::size_t a) {
  if (a >= groups_) fail(ErrorKind::kDomain, "group outside [0, K)");
  const std::size_t leaves = shape_.leaf_count();
  for (std::size_t t = 0; t < forest.tree_count(); ++t)
    for (std::size_t l = 0; l < leaves; ++l) {
      const auto grad = leaf_path_gradient(shape_, pass.trees[t].nodes, x, l);
      cells_[(t * leaves + l) * groups_ + a].add(pass.trees[t].leaves[l], grad,
                                                 0.0, ema_decay_);
    }
}

const NodeAggregate& LeafAggregateEstimator::cell(std::size_t tree,
                                                  std::size_t leaf,
                                                  std::size_t group) const {
  if (tree >= trees_ || leaf >= shape_.leaf_count() || group >= groups_)
    fail(ErrorKind::kDomain, "leaf cell index out of range");
  return cells_[(tree * shape_.leaf_count() + leaf) * groups_ + group];
}

FairnessGradient LeafAggregateEstimator::gradient(
    const ObliqueForest& forest) const {
  FairnessGradient out{ForestGradient::zeros_like(forest), false};
  if (huber_.lambda == 0.0) return out;
  const std::size_t block = shape_.dim + 1;
  for (std::size_t t = 0; t < trees_; ++t) {
    TreeGradient& g = out.gradient.trees[t];
    for (std::size_t l = 0; l < shape_.leaf_count(); ++l) {
      const NodeAggregate& g0 = cell(t, l, 0);
      const NodeAggregate& g1 = cell(t, l, 1);
      if (g0.count == 0 || g1.count == 0) {
        out.cold = true;
        continue;
      }
      const double F = g0.mean_output - g1.mean_output;
      const double coeff = huber_.lambda * huber_grad_coeff(F, huber_.delta);
      const auto path = heap_path(shape_, l);
      for (std::size_t k = 0; k < path.size(); ++k) {
        const std::size_t node = path[k].node;
        for (std::size_t q = 0; q < shape_.dim; ++q)
          g.weights[node * shape_.dim + q] +=
              coeff * (g0.mean_grad_w[k * block + q] -
                       g1.mean_grad_w[k * block + q]);
        g.biases[node] += coeff * (g0.mean_grad_w[k * block + shape_.dim] -
                                   g1.mean_grad_w[k * block + shape_.dim]);
      }
    }
  }
  return out;
}

nlohmann::json LeafAggregateEstimator::to_json() const {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : cells_) cells.push_back(aggregate_json(c));
  return {{"kind", "leaf"}, {"cells", std::move(cells)}};
}

void LeafAggregateEstimator::restore(const nlohmann::json& j) {
  if (field<std::string>(j, "kind") != "leaf")
    fail(ErrorKind::kData, "estimator snapshot is not a leaf snapshot");
  const auto& cells = j.at("cells");
  if (!cells.is_array() || cells.size() != cells_.size())
    fail(ErrorKind::kData, "leaf snapshot has the wrong number of cells");
  const std::size_t width =
      static_cast<std::size_t>(shape_.height) * (shape_.dim + 1);
  std::vector<NodeAggregate> restored;
  for (const auto& c : cells) restored.push_back(aggregate_from(c, width));
  cells_ = std::move(restored);
}

// Reservoir

std::vector<std::vector<std::vector<ConstraintEstimate>>> reservoir_constraints(
    std::span<const HistoryEntry> history, const ObliqueForest& forest,
    FairnessNotion notion, std::size_t groups) {
  const TreeShape s = forest.shape();
  const std::size_t m = s.node_count();
  const std::size_t d = s.dim;
  // Cells: K groups for dp/multi (plus an overall cell for multi), C*K for eo.
  std::size_t cells = groups;
  if (notion == FairnessNotion::kEqualizedOdds) cells = s.classes * groups;
  if (notion == FairnessNotion::kMultiGroup) cells = groups + 1;

  struct Sum {
    std::size_t count = 0;
    double n = 0.0;
    std::vector<double> gw;
    double gb = 0.0;
  };
  std::vector<std::vector<std::vector<ConstraintEstimate>>> out(
      forest.tree_count(), std::vector<std::vector<ConstraintEstimate>>(m));

  for (std::size_t t = 0; t < forest.tree_count(); ++t) {
    std::vector<Sum> sums(m * cells);
    for (auto& sum : sums) sum.gw.assign(d, 0.0);
    for (const HistoryEntry& e : history) {
      if (e.a >= groups) fail(ErrorKind::kDomain, "group outside [0, K)");
      const auto nodes = node_outputs(forest.trees[t], e.x);
      std::vector<std::size_t> targets;
      if (notion == FairnessNotion::kEqualizedOdds) {
        targets.push_back(e.y * groups + e.a);
      } else {
        targets.push_back(e.a);
        if (notion == FairnessNotion::kMultiGroup) targets.push_back(groups);
      }
      for (std::size_t i = 0; i < m; ++i) {
        const double slope = nodes[i] * (1.0 - nodes[i]);
        for (std::size_t cell : targets) {
          Sum& sum = sums[i * cells + cell];
          ++sum.count;
          sum.n += nodes[i];
          for (std::size_t q = 0; q < d; ++q) sum.gw[q] += slope * e.x[q];
          sum.gb += slope;
        }
      }
    }
    auto diff = [&](const Sum& lhs, const Sum& rhs) {
      ConstraintEstimate est;
      est.grad_w.assign(d, 0.0);
      if (lhs.count == 0 || rhs.count == 0) {
        est.cold = true;
        return est;
      }
      const double cl = static_cast<double>(lhs.count);
      const double cr = static_cast<double>(rhs.count);
      est.value = lhs.n / cl - rhs.n / cr;
      for (std::size_t q = 0; q < d; ++q)
        est.grad_w[q] = lhs.gw[q] / cl - rhs.gw[q] / cr;
      est.grad_b = lhs.gb / cl - rhs.gb / cr;
      return est;
    };
    for (std::size_t i = 0; i < m; ++i) {
      const Sum* base = &sums[i * cells];
      auto& constraints = out[t][i];
      switch (notion) {
        case FairnessNotion::kDemographicParity:
        case FairnessNotion::kNone:
          constraints.push_back(diff(base[0], base[1]));
          break;
        case FairnessNotion::kEqualizedOdds:
          for (std::size_t c = 0; c < s.classes; ++c)
            constraints.push_back(diff(base[c * groups], base[c * groups + 1]));
          break;
        case FairnessNotion::kMultiGroup:
          for (std::size_t k = 0; k < groups; ++k)
            constraints.push_back(diff(base[groups], base[k]));
          break;
      }
    }
  }
  return out;
}

FairnessGradient reservoir_fairness_gradient(
    std::span<const HistoryEntry> history, const ObliqueForest& forest,
    const HuberParams& params, FairnessNotion notion, std::size_t groups) {
  FairnessGradient out{ForestGradient::zeros_like(forest), false};
  if (notion == FairnessNotion::kNone || params.lambda == 0.0) return out;
  const TreeShape s = forest.shape();
  const auto constraints = reservoir_constraints(history, forest, notion, groups);
  for (std::size_t t = 0; t < constraints.size(); ++t) {
    TreeGradient& g = out.gradient.trees[t];
    for (std::size_t i = 0; i < constraints[t].size(); ++i)
      for (const ConstraintEstimate& est : constraints[t][i]) {
        if (est.cold) {
          out.cold = true;
          continue;
        }
        const double coeff =
            params.lambda * huber_grad_coeff(est.value, params.delta);
        for (std::size_t q = 0; q < s.dim; ++q)
          g.weights[i * s.dim + q] += coeff * est.grad_w[q];
        g.biases[i] += coeff * est.grad_b;
      }
  }
  return out;
}

double reservoir_fairness_loss(std::span<const HistoryEntry> history,
                               const ObliqueForest& forest,
                               const HuberParams& params,
                               FairnessNotion notion, std::size_t groups) {
  if (notion == FairnessNotion::kNone) return 0.0;
  double loss = 0.0;
  for (const auto& tree : reservoir_constraints(history, forest, notion, groups))
    for (const auto& node : tree)
      for (const ConstraintEstimate& est : node)
        if (!est.cold) loss += huber(est.value, params.delta);
  return params.lambda * loss;
}

ReservoirEstimator::ReservoirEstimator(const LearnerConfig& config)
    : huber_(config.huber),
      notion_(config.notion),
      groups_(config.groups),
      dim_(config.shape.dim) {}

void ReservoirEstimator::observe(const ObliqueForest&, const ForwardPass&,
                                 std::span<const double> x, std::size_t y,
                                 std::size_t a) {
  if (a >= groups_) fail(ErrorKind::kDomain, "group outside [0, K)");
  history_.push_back(HistoryEntry{{x.begin(), x.end()}, y, a});
}

FairnessGradient ReservoirEstimator::gradient(
    const ObliqueForest& forest) const {
  return reservoir_fairness_gradient(history_, forest, huber_, notion_,
                                     groups_);
}

nlohmann::json ReservoirEstimator::to_json() const {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : history_)
    entries.push_back({{"x", e.x}, {"y", e.y}, {"a", e.a}});
  return {{"kind", "reservoir"}, {"history", std::move(entries)}};
}

void ReservoirEstimator::restore(const nlohmann::json& j) {
  if (field<std::string>(j, "kind") != "reservoir")
    fail(ErrorKind::kData, "estimator snapshot is not a reservoir snapshot");
  std::vector<HistoryEntry> restored;
  for (const auto& e : j.at("history")) {
    HistoryEntry entry{field<std::vector<double>>(e, "x"),
                       field<std::size_t>(e, "y"), field<std::size_t>(e, "a")};
    if (entry.x.size() != dim_ || entry.a >= groups_)
      fail(ErrorKind::kData, "reservoir snapshot entry does not fit config");
    restored.push_back(std::move(entry));
  }
  history_ = std::move(restored);
}

// MLP

MlpParams::MlpParams(std::size_t d, std::size_t h, std::size_t c)
    : dim(d),
      hidden(h),
      classes(c),
      w1(d * h, 0.0),
      b1(h, 0.0),
      w2(h * c, 0.0),
      b2(c, 0.0) {}

std::array<std::span<double>, 4> MlpParams::buffers() {
  return {w1, b1, w2, b2};
}
std::array<std::span<const double>, 4> MlpParams::buffers() const {
  return {w1, b1, w2, b2};
}

namespace {

struct MlpActivations {
  std::vector<double> pre;     // hidden pre-activations
  std::vector<double> hidden;  // relu(pre)
  std::vector<double> logits;
};

MlpActivations mlp_activations(const MlpParams& p, std::span<const double> x) {
  if (x.size() != p.dim) fail(ErrorKind::kShape, "mlp input dimension mismatch");
  MlpActivations act;
  act.pre = p.b1;
  for (std::size_t k = 0; k < p.dim; ++k)
    for (std::size_t j = 0; j < p.hidden; ++j)
      act.pre[j] += x[k] * p.w1[k * p.hidden + j];
  act.hidden.resize(p.hidden);
  for (std::size_t j = 0; j < p.hidden; ++j)
    act.hidden[j] = std::max(0.0, act.pre[j]);
  act.logits = p.b2;
  for (std::size_t j = 0; j < p.hidden; ++j)
    for (std::size_t c = 0; c < p.classes; ++c)
      act.logits[c] += act.hidden[j] * p.w2[j * p.classes + c];
  return act;
}

// Flat parameter gradient of sum_c upstream[c] * logits[c].
std::vector<double> mlp_backward(const MlpParams& p, const MlpActivations& act,
                                 std::span<const double> x,
                                 std::span<const double> upstream) {
  std::vector<double> grad(p.size(), 0.0);
  double* gw1 = grad.data();
  double* gb1 = gw1 + p.w1.size();
  double* gw2 = gb1 + p.b1.size();
  double* gb2 = gw2 + p.w2.size();
  for (std::size_t c = 0; c < p.classes; ++c) gb2[c] = upstream[c];
  for (std::size_t j = 0; j < p.hidden; ++j) {
    double dh = 0.0;
    for (std::size_t c = 0; c < p.classes; ++c) {
      gw2[j * p.classes + c] = act.hidden[j] * upstream[c];
      dh += p.w2[j * p.classes + c] * upstream[c];
    }
    const double dz = act.pre[j] > 0.0 ? dh : 0.0;
    gb1[j] = dz;
    for (std::size_t k = 0; k < p.dim; ++k) gw1[k * p.hidden + j] = x[k] * dz;
  }
  return grad;
}

}  // namespace

std::vector<double> mlp_forward(const MlpParams& p, std::span<const double> x) {
  return mlp_activations(p, x).logits;
}

std::vector<double> mlp_task_gradient(const MlpParams& p,
                                      std::span<const double> x,
                                      std::size_t y) {
  if (y >= p.classes) fail(ErrorKind::kDomain, "label outside [0, classes)");
  const auto act = mlp_activations(p, x);
  auto residual = softmax(act.logits);
  residual[y] -= 1.0;
  return mlp_backward(p, act, x, residual);
}

std::pair<double, std::vector<double>> mlp_score_gradient(
    const MlpParams& p, std::span<const double> x) {
  const auto act = mlp_activations(p, x);
  const auto probs = softmax(act.logits);
  double score = 0.0;
  for (std::size_t c = 0; c < probs.size(); ++c)
    score += static_cast<double>(c) * probs[c];
  std::vector<double> upstream(probs.size());
  for (std::size_t c = 0; c < probs.size(); ++c)
    upstream[c] = probs[c] * (static_cast<double>(c) - score);
  return {score, mlp_backward(p, act, x, upstream)};
}

MlpLearner::MlpLearner(const LearnerConfig& config) : config_(config) {
  config_.validate();
  require(config_.mlp_hidden >= 1, ErrorKind::kConfig,
          "mlp hidden width must be >= 1");
  const std::size_t d = config_.shape.dim;
  const std::size_t h = config_.mlp_hidden;
  params_ = MlpParams(d, h, config_.shape.classes);
  std::mt19937_64 rng(config_.seed);
  std::uniform_real_distribution<double> in_dist(
      -1.0 / std::sqrt(static_cast<double>(d)),
      1.0 / std::sqrt(static_cast<double>(d)));
  std::uniform_real_distribution<double> out_dist(
      -1.0 / std::sqrt(static_cast<double>(h)),
      1.0 / std::sqrt(static_cast<double>(h)));
  for (double& w : params_.w1) w = in_dist(rng);
  for (double& w : params_.w2) w = out_dist(rng);
  stats_.assign(config_.groups, NodeAggregate(params_.size()));
  std::vector<std::size_t> sizes;
  for (const auto buf : std::as_const(params_).buffers()) sizes.push_back(buf.size());
  adam_ = AdamState(config_.adam, sizes);
  metrics_ = MetricsTracker(config_.groups);
}

void MlpLearner::observe(std::span<const double> x, std::size_t a) {
  if (a >= stats_.size()) fail(ErrorKind::kDomain, "group outside [0, K)");
  const auto [score, grad] = mlp_score_gradient(params_, x);
  stats_[a].add(score, grad, 0.0, config_.ema_decay);
}

std::pair<std::vector<double>, bool> MlpLearner::fairness_gradient() const {
  std::vector<double> grad(params_.size(), 0.0);
  if (config_.notion == FairnessNotion::kNone || config_.huber.lambda == 0.0)
    return {std::move(grad), false};
  const NodeAggregate& g0 = stats_[0];
  const NodeAggregate& g1 = stats_[1];
  if (g0.count == 0 || g1.count == 0) return {std::move(grad), true};
  const double F = g0.mean_output - g1.mean_output;
  const double coeff =
      config_.huber.lambda * huber_grad_coeff(F, config_.huber.delta);
  for (std::size_t k = 0; k < grad.size(); ++k)
    grad[k] = coeff * (g0.mean_grad_w[k] - g1.mean_grad_w[k]);
  return {std::move(grad), false};
}

StepResult MlpLearner::step(std::span<const double> x, std::size_t y,
                            std::size_t a) {
  validate_step_input(config_, x, y, a);
  const auto logits = mlp_forward(params_, x);
  StepResult result;
  result.prediction = argmax(logits);
  result.soft_score = soft_score(logits);
  metrics_.record(result.prediction, result.soft_score, y, a);

  observe(x, a);
  auto total = mlp_task_gradient(params_, x, y);
  const auto fair = fairness_gradient().first;
  double total_sq = 0.0;
  double fair_sq = 0.0;
  for (std::size_t k = 0; k < total.size(); ++k) {
    total[k] += fair[k];
    if (!std::isfinite(total[k]))
      fail(ErrorKind::kNumerical, "non-finite mlp gradient");
    total_sq += total[k] * total[k];
    fair_sq += fair[k] * fair[k];
  }
  result.grad_norm_total = std::sqrt(total_sq);
  result.grad_norm_fair = std::sqrt(fair_sq);

  std::vector<std::span<double>> params;
  std::vector<std::span<const double>> grads;
  std::size_t offset = 0;
  for (auto buf : params_.buffers()) {
    params.push_back(buf);
    grads.emplace_back(total.data() + offset, buf.size());
    offset += buf.size();
  }
  adam_.apply(params, grads);
  ++steps_;

  result.accuracy = metrics_.accuracy();
  result.dp_hard = metrics_.dp_hard();
  result.dp_soft = metrics_.dp_soft();
  return result;
}

nlohmann::json MlpLearner::checkpoint() const {
  nlohmann::json stats = nlohmann::json::array();
  for (const auto& s : stats_) stats.push_back(aggregate_json(s));
  return {{"format", "fairforest-checkpoint"},
          {"version", 1},
          {"config", config_.to_json()},
          {"steps", steps_},
          {"mlp",
           {{"w1", params_.w1},
            {"b1", params_.b1},
            {"w2", params_.w2},
            {"b2", params_.b2}}},
          {"adam", adam_.to_json()},
          {"fairness", std::move(stats)},
          {"metrics", metrics_.to_json()}};
}

void MlpLearner::restore(const nlohmann::json& j) {
  check_checkpoint_header(j, config_);
  MlpParams p(params_.dim, params_.hidden, params_.classes);
  const auto& mj = j.at("mlp");
  p.w1 = field<std::vector<double>>(mj, "w1");
  p.b1 = field<std::vector<double>>(mj, "b1");
  p.w2 = field<std::vector<double>>(mj, "w2");
  p.b2 = field<std::vector<double>>(mj, "b2");
  if (p.w1.size() != params_.w1.size() || p.b1.size() != params_.b1.size() ||
      p.w2.size() != params_.w2.size() || p.b2.size() != params_.b2.size())
    fail(ErrorKind::kData, "checkpoint mlp parameters have the wrong shape");
  const auto& sj = j.at("fairness");
  if (!sj.is_array() || sj.size() != stats_.size())
    fail(ErrorKind::kData, "checkpoint mlp statistics have the wrong shape");
  std::vector<NodeAggregate> stats;
  for (const auto& s : sj) stats.push_back(aggregate_from(s, p.size()));
  adam_ = AdamState::from_json(j.at("adam"));
  params_ = std::move(p);
  stats_ = std::move(stats);
  metrics_ = MetricsTracker::from_json(j.at("metrics"));
  steps_ = field<std::uint64_t>(j, "steps");
}

// Majority post-processing

std::size_t majority_postprocess(std::size_t prediction, double p,
                                 std::size_t majority_label,
                                 std::mt19937_64& rng) {
  return uniform01(rng) < p ? prediction : majority_label;
}

MajorityLearner::MajorityLearner(const LearnerConfig& config)
    : config_(config),
      inner_(config),
      label_counts_(config.shape.classes, 0),
      rng_(config.seed ^ 0x9e3779b97f4a7c15ULL),
      metrics_(config.groups) {}

std::size_t MajorityLearner::majority_label() const {
  if (config_.majority_source == MajoritySource::kFixed)
    return config_.majority_label;
  const auto top = std::max_element(label_counts_.begin(), label_counts_.end());
  return static_cast<std::size_t>(top - label_counts_.begin());
}

StepResult MajorityLearner::step(std::span<const double> x, std::size_t y,
                                 std::size_t a) {
  validate_step_input(config_, x, y, a);
  const std::size_t majority = majority_label();
  StepResult result = inner_.step(x, y, a);
  const bool keep = uniform01(rng_) < config_.majority_p;
  if (!keep) {
    result.prediction = majority;
    result.soft_score = static_cast<double>(majority);
  }
  metrics_.record(result.prediction, result.soft_score, y, a);
  ++label_counts_[y];
  result.accuracy = metrics_.accuracy();
  result.dp_hard = metrics_.dp_hard();
  result.dp_soft = metrics_.dp_soft();
  return result;
}

nlohmann::json MajorityLearner::checkpoint() const {
  return {{"format", "fairforest-checkpoint"},
          {"version", 1},
          {"config", config_.to_json()},
          {"steps", inner_.steps_taken()},
          {"inner", inner_.checkpoint()},
          {"label_counts", label_counts_},
          {"rng", rng_state(rng_)},
          {"metrics", metrics_.to_json()}};
}

void MajorityLearner::restore(const nlohmann::json& j) {
  check_checkpoint_header(j, config_);
  auto counts = field<std::vector<std::uint64_t>>(j, "label_counts");
  if (counts.size() != label_counts_.size())
    fail(ErrorKind::kData, "checkpoint label counts have the wrong length");
  auto rng = rng_from_state(field<std::string>(j, "rng"));
  inner_.restore(j.at("inner"));
  label_counts_ = std::move(counts);
  rng_ = rng;
  metrics_ = MetricsTracker::from_json(j.at("metrics"));
}

std::unique_ptr<OnlineLearner> make_learner(const LearnerConfig& config) {
  config.validate();
  switch (config.variant) {
    case Variant::kNode:
      return std::make_unique<ForestLearner>(config);
    case Variant::kLeaf:
      return std::make_unique<ForestLearner>(
          config, std::make_unique<LeafAggregateEstimator>(config));
    case Variant::kReservoir:
      return std::make_unique<ForestLearner>(
          config, std::make_unique<ReservoirEstimator>(config));
    case Variant::kMlp:
      return std::make_unique<MlpLearner>(config);
    case Variant::kMajority:
      return std::make_unique<MajorityLearner>(config);
  }
  fail(ErrorKind::kConfig, "unknown learner variant");
}

std::unique_ptr<OnlineLearner> restore_learner(
    const nlohmann::json& checkpoint) {
  if (!checkpoint.is_object() || !checkpoint.contains("config"))
    fail(ErrorKind::kData, "checkpoint has no config");
  auto learner = make_learner(LearnerConfig::from_json(checkpoint.at("config")));
  learner->restore(checkpoint);
  return learner;
}

}  // namespace fairforest
