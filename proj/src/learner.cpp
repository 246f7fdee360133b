#include "fairforest/learner.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "fairforest/error.hpp"
#include "fairforest/serialize.hpp"

namespace fairforest {

void AdamConfig::validate() const {
  require(learning_rate > 0.0 && std::isfinite(learning_rate),
          ErrorKind::kConfig, "learning rate must be positive");
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0,
          ErrorKind::kConfig, "adam betas must lie in [0, 1)");
  require(epsilon > 0.0, ErrorKind::kConfig, "adam epsilon must be positive");
}

AdamState::AdamState(const AdamConfig& config,
                     std::vector<std::size_t> buffer_sizes)
    : config_(config) {
  config_.validate();
  for (std::size_t n : buffer_sizes) {
    first_.emplace_back(n, 0.0);
    second_.emplace_back(n, 0.0);
  }
}

void AdamState::apply(std::span<const std::span<double>> params,
                      std::span<const std::span<const double>> grads) {
  if (params.size() != first_.size() || grads.size() != first_.size())
    fail(ErrorKind::kShape, "adam buffer count mismatch");
  ++step_;
  const double t = static_cast<double>(step_);
  const double correct1 = 1.0 - std::pow(config_.beta1, t);
  const double correct2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t b = 0; b < first_.size(); ++b) {
    auto& m = first_[b];
    auto& v = second_[b];
    const auto p = params[b];
    const auto g = grads[b];
    if (p.size() != m.size() || g.size() != m.size())
      fail(ErrorKind::kShape, "adam buffer size mismatch");
    for (std::size_t k = 0; k < m.size(); ++k) {
      m[k] = config_.beta1 * m[k] + (1.0 - config_.beta1) * g[k];
      v[k] = config_.beta2 * v[k] + (1.0 - config_.beta2) * g[k] * g[k];
      const double m_hat = m[k] / correct1;
      const double v_hat = v[k] / correct2;
      p[k] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) +
                                               config_.epsilon);
    }
  }
}

nlohmann::json AdamState::to_json() const {
  return {{"learning_rate", config_.learning_rate},
          {"beta1", config_.beta1},
          {"beta2", config_.beta2},
          {"epsilon", config_.epsilon},
          {"step", step_},
          {"first", first_},
          {"second", second_}};
}

AdamState AdamState::from_json(const nlohmann::json& j) {
  AdamState s;
  s.config_.learning_rate = field<double>(j, "learning_rate");
  s.config_.beta1 = field<double>(j, "beta1");
  s.config_.beta2 = field<double>(j, "beta2");
  s.config_.epsilon = field<double>(j, "epsilon");
  s.config_.validate();
  s.step_ = field<std::uint64_t>(j, "step");
  s.first_ = field<std::vector<std::vector<double>>>(j, "first");
  s.second_ = field<std::vector<std::vector<double>>>(j, "second");
  if (s.first_.size() != s.second_.size())
    fail(ErrorKind::kData, "adam snapshot moment lists differ in length");
  return s;
}

MetricsTracker::MetricsTracker(std::size_t groups)
    : group_count_(groups, 0),
      group_pred_sum_(groups, 0.0),
      group_soft_sum_(groups, 0.0) {}

void MetricsTracker::record(std::size_t prediction, double soft_score,
                            std::size_t y, std::size_t a) {
  if (a >= group_count_.size())
    fail(ErrorKind::kDomain, "group outside the tracker's range");
  ++total_;
  if (prediction == y) ++correct_;
  ++group_count_[a];
  group_pred_sum_[a] += static_cast<double>(prediction);
  group_soft_sum_[a] += soft_score;
  pred_sum_ += static_cast<double>(prediction);
  soft_sum_ += soft_score;
}

double MetricsTracker::accuracy() const {
  return total_ == 0 ? 0.0
                     : static_cast<double>(correct_) /
                           static_cast<double>(total_);
}

double MetricsTracker::group_rate(std::size_t group) const {
  if (group >= group_count_.size() || group_count_[group] == 0) return 0.0;
  return group_pred_sum_[group] / static_cast<double>(group_count_[group]);
}

std::optional<double> MetricsTracker::dp_of(const std::vector<double>& sums,
                                             double overall) const {
  std::size_t observed = 0;
  for (std::size_t c : group_count_) observed += c > 0 ? 1 : 0;
  if (observed < 2) return std::nullopt;
  auto rate = [&](std::size_t k) {
    return sums[k] / static_cast<double>(group_count_[k]);
  };
  if (group_count_.size() == 2) return std::abs(rate(0) - rate(1));
  const double overall_rate = overall / static_cast<double>(total_);
  double worst = 0.0;
  for (std::size_t k = 0; k < group_count_.size(); ++k)
    if (group_count_[k] > 0)
      worst = std::max(worst, std::abs(overall_rate - rate(k)));
  return worst;
}

std::optional<double> MetricsTracker::dp_hard() const {
  return dp_of(group_pred_sum_, pred_sum_);
}

std::optional<double> MetricsTracker::dp_soft() const {
  return dp_of(group_soft_sum_, soft_sum_);
}

nlohmann::json MetricsTracker::to_json() const {
  return {{"total", total_},
          {"correct", correct_},
          {"group_count", group_count_},
          {"group_pred_sum", group_pred_sum_},
          {"group_soft_sum", group_soft_sum_},
          {"pred_sum", pred_sum_},
          {"soft_sum", soft_sum_}};
}

MetricsTracker MetricsTracker::from_json(const nlohmann::json& j) {
  MetricsTracker m;
  m.total_ = field<std::size_t>(j, "total");
  m.correct_ = field<std::size_t>(j, "correct");
  m.group_count_ = field<std::vector<std::size_t>>(j, "group_count");
  m.group_pred_sum_ = field<std::vector<double>>(j, "group_pred_sum");
  m.group_soft_sum_ = field<std::vector<double>>(j, "group_soft_sum");
  m.pred_sum_ = field<double>(j, "pred_sum");
  m.soft_sum_ = field<double>(j, "soft_sum");
  return m;
}

std::optional<double> dp_metric(const MetricsTracker& tracker) {
  return tracker.dp_hard();
}

const char* to_string(Variant v) {
  switch (v) {
    case Variant::kNode: return "node";
    case Variant::kLeaf: return "leaf";
    case Variant::kReservoir: return "reservoir";
    case Variant::kMlp: return "mlp";
    case Variant::kMajority: return "majority";
  }
  return "node";
}

Variant parse_variant(const std::string& name) {
  if (name == "node") return Variant::kNode;
  if (name == "leaf") return Variant::kLeaf;
  if (name == "reservoir") return Variant::kReservoir;
  if (name == "mlp") return Variant::kMlp;
  if (name == "majority") return Variant::kMajority;
  fail(ErrorKind::kConfig, "unknown baseline '" + name + "'");
}

void LearnerConfig::validate() const {
  shape.validate();
  require(shape.classes >= 2, ErrorKind::kConfig,
          "classification needs at least two classes");
  require(trees >= 1, ErrorKind::kConfig, "tree count must be >= 1");
  huber.validate();
  adam.validate();
  require(groups >= 2, ErrorKind::kConfig, "group count K must be >= 2");
  switch (notion) {
    case FairnessNotion::kDemographicParity:
    case FairnessNotion::kEqualizedOdds:
      require(groups == 2, ErrorKind::kConfig,
              std::string(fairforest::to_string(notion)) +
                  " needs a binary protected attribute (K = 2)");
      break;
    case FairnessNotion::kMultiGroup:
      require(groups > 2, ErrorKind::kConfig, "multi-group needs K > 2");
      break;
    case FairnessNotion::kNone:
      break;
  }
  require(ema_decay >= 0.0 && ema_decay < 1.0, ErrorKind::kConfig,
          "ema decay must be in [0, 1)");
  if (variant == Variant::kLeaf || variant == Variant::kMlp)
    require(notion == FairnessNotion::kDemographicParity ||
                notion == FairnessNotion::kNone,
            ErrorKind::kConfig,
            std::string(fairforest::to_string(variant)) +
                " baseline supports only the dp notion");
  if (variant == Variant::kMlp)
    require(mlp_hidden >= 1, ErrorKind::kConfig,
            "mlp hidden width must be >= 1");
  require(majority_p >= 0.0 && majority_p <= 1.0, ErrorKind::kConfig,
          "majority p must be in [0, 1]");
  require(majority_label < shape.classes, ErrorKind::kConfig,
          "majority label outside [0, classes)");
}

nlohmann::json LearnerConfig::to_json() const {
  return {{"height", shape.height},
          {"dim", shape.dim},
          {"classes", shape.classes},
          {"trees", trees},
          {"lambda", huber.lambda},
          {"delta", huber.delta},
          {"fairness", fairforest::to_string(notion)},
          {"groups", groups},
          {"lr", adam.learning_rate},
          {"beta1", adam.beta1},
          {"beta2", adam.beta2},
          {"epsilon", adam.epsilon},
          {"seed", seed},
          {"ema_decay", ema_decay},
          {"baseline", fairforest::to_string(variant)},
          {"mlp_hidden", mlp_hidden},
          {"majority_p", majority_p},
          {"majority_source",
           majority_source == MajoritySource::kFixed ? "fixed" : "running"},
          {"majority_label", majority_label}};
}

LearnerConfig LearnerConfig::from_json(const nlohmann::json& j) {
  static const std::set<std::string> kKeys = {
      "height", "dim",      "classes",    "trees",      "lambda",
      "delta",  "fairness", "groups",     "lr",         "beta1",
      "beta2",  "epsilon",  "seed",       "ema_decay",  "baseline",
      "mlp_hidden", "majority_p", "majority_source", "majority_label"};
  if (!j.is_object()) fail(ErrorKind::kConfig, "learner config must be an object");
  for (const auto& [key, value] : j.items())
    if (!kKeys.count(key))
      fail(ErrorKind::kConfig, "unknown learner config key '" + key + "'");

  LearnerConfig c;
  try {
    auto get = [&](const char* key, auto& out) {
      if (j.contains(key)) j.at(key).get_to(out);
    };
    get("height", c.shape.height);
    get("dim", c.shape.dim);
    get("classes", c.shape.classes);
    get("trees", c.trees);
    get("lambda", c.huber.lambda);
    get("delta", c.huber.delta);
    if (j.contains("fairness"))
      c.notion = parse_notion(j.at("fairness").get<std::string>());
    get("groups", c.groups);
    get("lr", c.adam.learning_rate);
    get("beta1", c.adam.beta1);
    get("beta2", c.adam.beta2);
    get("epsilon", c.adam.epsilon);
    get("seed", c.seed);
    get("ema_decay", c.ema_decay);
    if (j.contains("baseline"))
      c.variant = parse_variant(j.at("baseline").get<std::string>());
    get("mlp_hidden", c.mlp_hidden);
    get("majority_p", c.majority_p);
    if (j.contains("majority_source")) {
      const auto src = j.at("majority_source").get<std::string>();
      if (src == "fixed") c.majority_source = MajoritySource::kFixed;
      else if (src == "running") c.majority_source = MajoritySource::kRunning;
      else fail(ErrorKind::kConfig, "majority_source must be fixed or running");
    }
    get("majority_label", c.majority_label);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kConfig, std::string("bad learner config: ") + e.what());
  }
  c.validate();
  return c;
}

NodeAggregateEstimator::NodeAggregateEstimator(const LearnerConfig& config)
    : huber_(config.huber),
      store_(StoreLayout{
          config.notion == FairnessNotion::kNone
              ? (config.groups > 2 ? FairnessNotion::kMultiGroup
                                   : FairnessNotion::kDemographicParity)
              : config.notion,
          config.groups, config.shape.classes, config.trees,
          config.shape.node_count(), config.shape.dim, config.ema_decay}) {
  if (config.notion == FairnessNotion::kNone) huber_.lambda = 0.0;
}

void NodeAggregateEstimator::observe(const ObliqueForest& forest,
                                     const ForwardPass& pass,
                                     std::span<const double> x, std::size_t y,
                                     std::size_t a) {
  GroupKey key{a, std::nullopt};
  if (store_.layout().notion == FairnessNotion::kEqualizedOdds)
    key.class_condition = y;
  const std::size_t m = forest.shape().node_count();
  for (std::size_t t = 0; t < forest.tree_count(); ++t)
    for (std::size_t i = 0; i < m; ++i) {
      const double n = pass.trees[t].nodes[i];
      const auto [gw, gb] = node_grad(n, x);
      store_.update(t, i, key, n, gw, gb);
    }
}

FairnessGradient NodeAggregateEstimator::gradient(
    const ObliqueForest& forest) const {
  return fairness_gradient(store_, huber_, forest.shape());
}

void NodeAggregateEstimator::restore(const nlohmann::json& j) {
  AggregateStore restored = AggregateStore::from_json(j);
  const auto& want = store_.layout();
  const auto& got = restored.layout();
  if (got.notion != want.notion || got.groups != want.groups ||
      got.classes != want.classes || got.trees != want.trees ||
      got.nodes != want.nodes || got.dim != want.dim)
    fail(ErrorKind::kData, "aggregate snapshot layout does not match learner");
  store_ = std::move(restored);
}

void validate_step_input(const LearnerConfig& config,
                         std::span<const double> x, std::size_t y,
                         std::size_t a) {
  if (x.size() != config.shape.dim)
    fail(ErrorKind::kShape, "instance has " + std::to_string(x.size()) +
                                " features, learner expects " +
                                std::to_string(config.shape.dim));
  for (double v : x)
    if (!std::isfinite(v))
      fail(ErrorKind::kData, "instance has a non-finite feature");
  if (y >= config.shape.classes)
    fail(ErrorKind::kDomain, "label " + std::to_string(y) + " outside [0, " +
                                 std::to_string(config.shape.classes) + ")");
  if (a >= config.groups)
    fail(ErrorKind::kDomain, "group " + std::to_string(a) + " outside [0, " +
                                 std::to_string(config.groups) + ")");
}

double soft_score(std::span<const double> logits) {
  const auto probs = softmax(logits);
  double score = 0.0;
  for (std::size_t c = 0; c < probs.size(); ++c)
    score += static_cast<double>(c) * probs[c];
  return score;
}

namespace {

std::vector<std::size_t> forest_buffer_sizes(const ObliqueForest& forest) {
  std::vector<std::size_t> sizes;
  for (const auto& tree : forest.trees)
    for (const auto buf : buffers(tree)) sizes.push_back(buf.size());
  return sizes;
}

}  // namespace

ForestLearner::ForestLearner(const LearnerConfig& config)
    : ForestLearner(config, std::make_unique<NodeAggregateEstimator>(config)) {}

ForestLearner::ForestLearner(const LearnerConfig& config,
                             std::unique_ptr<FairnessEstimator> estimator)
    : config_(config), estimator_(std::move(estimator)) {
  config_.validate();
  require(estimator_ != nullptr, ErrorKind::kConfig,
          "forest learner needs a fairness estimator");
  std::mt19937_64 rng(config_.seed);
  forest_ = init_forest(config_.shape, config_.trees, rng);
  adam_ = AdamState(config_.adam, forest_buffer_sizes(forest_));
  metrics_ = MetricsTracker(config_.groups);
}

StepResult ForestLearner::step(std::span<const double> x, std::size_t y,
                               std::size_t a) {
  validate_step_input(config_, x, y, a);

  const ForwardPass pass = forward_pass(forest_, x);
  StepResult result;
  result.prediction = argmax(pass.output);
  result.soft_score = soft_score(pass.output);
  metrics_.record(result.prediction, result.soft_score, y, a);

  estimator_->observe(forest_, pass, x, y, a);
  const ForestGradient task = task_gradient(forest_, pass, x, y);
  const FairnessGradient fair = estimator_->gradient(forest_);
  const ForestGradient total = total_gradient(task, fair.gradient);

  result.grad_norm_total = gradient_norm(total);
  result.grad_norm_fair = gradient_norm(fair.gradient);
  for (const auto& tg : total.trees)
    result.tree_grad_norms.push_back(gradient_norm(tg));

  std::vector<std::span<double>> params;
  std::vector<std::span<const double>> grads;
  for (std::size_t t = 0; t < forest_.tree_count(); ++t) {
    for (auto buf : buffers(forest_.trees[t])) params.push_back(buf);
    for (auto buf : buffers(total.trees[t])) grads.push_back(buf);
  }
  adam_.apply(params, grads);
  ++steps_;

  result.accuracy = metrics_.accuracy();
  result.dp_hard = metrics_.dp_hard();
  result.dp_soft = metrics_.dp_soft();
  return result;
}

nlohmann::json ForestLearner::checkpoint() const {
  return {{"format", "fairforest-checkpoint"},
          {"version", 1},
          {"config", config_.to_json()},
          {"steps", steps_},
          {"forest", to_json(forest_)},
          {"adam", adam_.to_json()},
          {"fairness", estimator_->to_json()},
          {"metrics", metrics_.to_json()}};
}

void ForestLearner::restore(const nlohmann::json& j) {
  if (field<std::string>(j, "format") != "fairforest-checkpoint")
    fail(ErrorKind::kData, "not a checkpoint document");
  if (j.at("config") != config_.to_json())
    fail(ErrorKind::kConfig, "checkpoint was written for a different config");
  ObliqueForest forest = forest_from_json(j.at("forest"));
  if (!(forest.shape() == config_.shape) ||
      forest.tree_count() != config_.trees)
    fail(ErrorKind::kData, "checkpoint forest does not match config");
  AdamState adam = AdamState::from_json(j.at("adam"));
  estimator_->restore(j.at("fairness"));
  forest_ = std::move(forest);
  adam_ = std::move(adam);
  metrics_ = MetricsTracker::from_json(j.at("metrics"));
  steps_ = field<std::uint64_t>(j, "steps");
}

std::uint64_t run_stream(OnlineLearner& learner, InstanceSource& source,
                         const RowSink& sink) {
  std::uint64_t index = 0;
  auto label = [&] { return "step " + std::to_string(learner.steps_taken() + 1) + ": "; };
  while (true) {
    std::optional<Instance> inst;
    try {
      inst = source.next();
    } catch (const Error& e) {
      throw Error(e.kind(), label() + e.what());
    }
    if (!inst) break;
    StepResult r;
    try {
      r = learner.step(inst->x, inst->y, inst->a);
    } catch (const Error& e) {
      throw Error(e.kind(), label() + e.what());
    }
    TrajectoryRow row{learner.steps_taken(), inst->y,      inst->a,
                      r.prediction,          r.accuracy,   r.dp_hard,
                      r.dp_soft,             r.grad_norm_total,
                      r.grad_norm_fair};
    if (sink) sink(row, r);
    ++index;
  }
  return index;
}

std::vector<TrajectoryRow> run_stream(OnlineLearner& learner,
                                      InstanceSource& source) {
  std::vector<TrajectoryRow> rows;
  run_stream(learner, source,
             [&](const TrajectoryRow& row, const StepResult&) {
               rows.push_back(row);
             });
  return rows;
}

}  // namespace fairforest
