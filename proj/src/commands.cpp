#include "fairforest/commands.hpp"

#include <sys/resource.h>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <ostream>

#include "fairforest/baselines.hpp"
#include "fairforest/error.hpp"
#include "fairforest/serialize.hpp"
#include "fairforest/verify.hpp"

namespace fairforest {

namespace {

template <class T>
T opt(const nlohmann::json& j, const char* key, T fallback) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kConfig,
                std::string("bad request field '") + key + "': " + e.what());
  }
}

SyntheticConfig synthetic_from_json(const nlohmann::json& j,
                                    std::uint64_t default_seed) {
  static const char* kKeys[] = {"n",     "dim",  "bias",  "separation",
                                "group_shift", "noise", "seed", "bound"};
  if (!j.is_object()) fail(ErrorKind::kConfig, "synthetic must be an object");
  for (const auto& [key, value] : j.items())
    if (std::find_if(std::begin(kKeys), std::end(kKeys), [&](const char* k) {
          return key == k;
        }) == std::end(kKeys))
      fail(ErrorKind::kConfig, "unknown synthetic key '" + key + "'");
  SyntheticConfig c;
  c.n = opt(j, "n", c.n);
  c.dim = opt(j, "dim", c.dim);
  c.bias = opt(j, "bias", c.bias);
  c.separation = opt(j, "separation", c.separation);
  c.group_shift = opt(j, "group_shift", c.group_shift);
  c.noise = opt(j, "noise", c.noise);
  c.seed = opt(j, "seed", default_seed);
  c.bound = opt(j, "bound", c.bound);
  c.validate();
  return c;
}

LearnerConfig learner_from_request(const nlohmann::json& request) {
  if (!request.is_object()) fail(ErrorKind::kConfig, "request must be an object");
  return LearnerConfig::from_json(
      request.contains("learner") ? request.at("learner")
                                  : nlohmann::json::object());
}

std::filesystem::path output_dir(const nlohmann::json& request) {
  const auto out = opt<std::string>(request, "out", "");
  if (out.empty()) fail(ErrorKind::kConfig, "request has no output directory");
  std::error_code ec;
  std::filesystem::create_directories(out, ec);
  if (ec) fail(ErrorKind::kIo, "cannot create '" + out + "': " + ec.message());
  return out;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::kIo, "cannot write '" + path.string() + "'");
  return out;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  auto out = open_output(path);
  out << j.dump(2) << '\n';
  if (!out) fail(ErrorKind::kIo, "write to '" + path.string() + "' failed");
}

nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::string optional_cell(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string();
}

struct Execution {
  std::unique_ptr<OnlineLearner> learner;
  RunOutcome outcome;
  double last_grad_total = 0.0;
  double last_grad_fair = 0.0;
};

using StepSink = std::function<void(const OnlineLearner&, const TrajectoryRow&,
                                    const StepResult&)>;

Execution execute(const nlohmann::json& request, const StepSink& sink,
                  bool progress) {
  Execution ex;
  LearnerConfig config = learner_from_request(request);
  auto source = open_source(request, config);
  const auto resume = opt<std::string>(request, "resume", "");
  if (!resume.empty()) {
    std::ifstream in(resume);
    if (!in) fail(ErrorKind::kIo, "cannot open checkpoint '" + resume + "'");
    nlohmann::json checkpoint;
    try {
      checkpoint = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::kData, "bad checkpoint '" + resume + "': " + e.what());
    }
    ex.learner = restore_learner(checkpoint);
    if (ex.learner->config().to_json() != config.to_json())
      fail(ErrorKind::kConfig, "checkpoint config differs from the request");
    for (std::uint64_t k = 0; k < ex.learner->steps_taken(); ++k)
      if (!source->next())
        fail(ErrorKind::kData, "stream is shorter than the checkpointed run");
  } else {
    ex.learner = make_learner(config);
  }
  OnlineLearner& learner = *ex.learner;
  run_stream(learner, *source,
             [&](const TrajectoryRow& row, const StepResult& r) {
               ex.last_grad_total = r.grad_norm_total;
               ex.last_grad_fair = r.grad_norm_fair;
               if (sink) sink(learner, row, r);
               if (progress && row.step % 1000 == 0) {
                 std::cerr << "step " << row.step << " accuracy "
                           << row.running_accuracy;
                 if (row.dp_hard) std::cerr << " dp " << *row.dp_hard;
                 std::cerr << '\n';
               }
             });
  ex.outcome.config = learner.config();
  ex.outcome.steps = learner.steps_taken();
  ex.outcome.accuracy = learner.metrics().accuracy();
  ex.outcome.dp_hard = learner.metrics().dp_hard();
  ex.outcome.dp_soft = learner.metrics().dp_soft();
  if (ex.outcome.steps == 0) fail(ErrorKind::kData, "stream is empty");
  return ex;
}

}  // namespace

std::unique_ptr<InstanceSource> open_source(const nlohmann::json& request,
                                            LearnerConfig& config) {
  const bool has_data = request.contains("data");
  const bool has_synth = request.contains("synthetic");
  if (has_data == has_synth)
    fail(ErrorKind::kConfig, "request needs exactly one of data or synthetic");
  const double bound = opt(request, "bound", 0.0);
  require(bound >= 0.0 && std::isfinite(bound), ErrorKind::kConfig,
          "bound must be >= 0");

  std::unique_ptr<InstanceSource> source;
  if (has_synth) {
    SyntheticConfig sc = synthetic_from_json(request.at("synthetic"), config.seed);
    if (bound > 0.0) sc.bound = bound;
    config.shape.dim = sc.dim;
    require(config.shape.classes == 2 && config.groups == 2, ErrorKind::kConfig,
            "the synthetic stream has binary labels and groups");
    source = std::make_unique<SyntheticStream>(sc);
  } else {
    const auto& d = request.at("data");
    DatasetSchema schema;
    schema.features = opt(d, "features", schema.features);
    schema.label = opt(d, "label", schema.label);
    schema.group = opt(d, "group", schema.group);
    schema.classes = config.shape.classes;
    schema.groups = config.groups;
    const auto norm = opt<std::string>(d, "normalize", "none");
    if (norm == "online") schema.normalization = Normalization::kOnline;
    else if (norm != "none")
      fail(ErrorKind::kConfig, "normalize must be none or online");
    const auto path = opt<std::string>(d, "path", "");
    if (path.empty()) fail(ErrorKind::kConfig, "data source has no path");
    auto reader = std::make_unique<CsvStreamReader>(path, schema);
    config.shape.dim = reader->dim();
    if (bound > 0.0) {
      CsvStreamReader pass(path, schema);
      const double top = max_norm(pass);
      source = std::make_unique<ScaledSource>(std::move(reader),
                                              top > 0.0 ? bound / top : 1.0);
    } else {
      source = std::move(reader);
    }
  }
  config.validate();
  return source;
}

void write_trajectory_header(std::ostream& out) {
  out << "step,y,a,pred,running_accuracy,dp_hard,dp_soft,grad_norm_total,"
         "grad_norm_fair\n";
}

void write_trajectory_row(std::ostream& out, const TrajectoryRow& row) {
  out << row.step << ',' << row.y << ',' << row.a << ',' << row.prediction
      << ',' << format_double(row.running_accuracy) << ','
      << optional_cell(row.dp_hard) << ',' << optional_cell(row.dp_soft) << ','
      << format_double(row.grad_norm_total) << ','
      << format_double(row.grad_norm_fair) << '\n';
}

RunOutcome run_learner(const nlohmann::json& request, const RowSink& sink,
                       bool progress) {
  StepSink wrapped;
  if (sink)
    wrapped = [&](const OnlineLearner&, const TrajectoryRow& row,
                  const StepResult& r) { sink(row, r); };
  return execute(request, wrapped, progress).outcome;
}

nlohmann::json cmd_run(const nlohmann::json& request) {
  const auto start = std::chrono::steady_clock::now();
  const auto dir = output_dir(request);
  const auto every = opt<std::uint64_t>(request, "checkpoint_every", 0);
  const bool progress = opt(request, "progress", false);

  auto csv = open_output(dir / "trajectory.csv");
  write_trajectory_header(csv);
  Execution ex = execute(
      request,
      [&](const OnlineLearner& learner, const TrajectoryRow& row,
          const StepResult&) {
        write_trajectory_row(csv, row);
        if (every > 0 && row.step % every == 0)
          write_json(dir / "checkpoint.json", learner.checkpoint());
      },
      progress);
  csv.flush();
  if (!csv) fail(ErrorKind::kIo, "write to trajectory.csv failed");
  write_json(dir / "checkpoint.json", ex.learner->checkpoint());

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  nlohmann::json echo = request;
  echo["learner"] = ex.outcome.config.to_json();
  nlohmann::json summary = {
      {"steps", ex.outcome.steps},
      {"final",
       {{"accuracy", ex.outcome.accuracy},
        {"dp_hard", optional_json(ex.outcome.dp_hard)},
        {"dp_soft", optional_json(ex.outcome.dp_soft)},
        {"grad_norm_total", ex.last_grad_total},
        {"grad_norm_fair", ex.last_grad_fair}}},
      {"config", std::move(echo)},
      {"wall_time_seconds", wall},
      {"peak_memory_bytes", peak_memory_bytes()}};
  write_json(dir / "summary.json", summary);
  return summary;
}

nlohmann::json cmd_sweep(const nlohmann::json& request) {
  const auto lambdas = opt<std::vector<double>>(request, "lambdas", {});
  if (lambdas.empty()) fail(ErrorKind::kConfig, "sweep needs at least one lambda");
  const auto dir = output_dir(request);
  auto csv = open_output(dir / "sweep.csv");
  csv << "lambda,final_accuracy,final_dp_hard,final_dp_soft\n";
  csv.flush();

  nlohmann::json rows = nlohmann::json::array();
  for (double lambda : lambdas) {
    nlohmann::json sub = request;
    sub.erase("lambdas");
    if (!sub.contains("learner")) sub["learner"] = nlohmann::json::object();
    sub["learner"]["lambda"] = lambda;
    const RunOutcome r = run_learner(sub, {}, opt(request, "progress", false));
    csv << format_double(lambda) << ',' << format_double(r.accuracy) << ','
        << optional_cell(r.dp_hard) << ',' << optional_cell(r.dp_soft) << '\n';
    csv.flush();
    rows.push_back({{"lambda", lambda},
                    {"final_accuracy", r.accuracy},
                    {"final_dp_hard", optional_json(r.dp_hard)},
                    {"final_dp_soft", optional_json(r.dp_soft)}});
  }
  if (!csv) fail(ErrorKind::kIo, "write to sweep.csv failed");
  return {{"rows", std::move(rows)}};
}

nlohmann::json cmd_gradcheck(const nlohmann::json& request) {
  GradcheckConfig c;
  c.trials = opt(request, "trials", c.trials);
  c.seed = opt(request, "seed", c.seed);
  c.corrupt = opt(request, "corrupt", c.corrupt);
  const GradcheckReport report = gradcheck(c);
  nlohmann::json j = report.to_json();
  j["seed"] = c.seed;
  const auto out = opt<std::string>(request, "out", "");
  if (!out.empty()) write_json(out, j);
  return j;
}

nlohmann::json cmd_synth(const nlohmann::json& request) {
  nlohmann::json fields = request;
  const auto out = opt<std::string>(request, "out", "");
  if (out.empty()) fail(ErrorKind::kConfig, "synth needs an output file");
  fields.erase("out");
  const SyntheticConfig sc = synthetic_from_json(fields, 7);
  SyntheticStream stream(sc);
  auto csv = open_output(out);
  for (std::size_t k = 0; k < sc.dim; ++k) csv << 'x' << k << ',';
  csv << "y,a\n";
  std::size_t rows = 0;
  std::size_t agree = 0;
  std::size_t positive = 0;
  while (auto inst = stream.next()) {
    for (double v : inst->x) csv << format_double(v) << ',';
    csv << inst->y << ',' << inst->a << '\n';
    ++rows;
    agree += inst->y == inst->a ? 1 : 0;
    positive += inst->y;
  }
  csv.flush();
  if (!csv) fail(ErrorKind::kIo, "write to '" + out + "' failed");
  return {{"rows", rows},
          {"path", out},
          {"p_y_equals_a", static_cast<double>(agree) / static_cast<double>(rows)},
          {"positive_rate",
           static_cast<double>(positive) / static_cast<double>(rows)}};
}

nlohmann::json cmd_audit(const nlohmann::json& request) {
  LearnerConfig config = learner_from_request(request);
  require(config.variant == Variant::kNode, ErrorKind::kConfig,
          "audit runs the node-level learner");
  require(config.notion != FairnessNotion::kNone, ErrorKind::kConfig,
          "audit needs a fairness notion");
  auto source = open_source(request, config);
  const auto steps = opt<std::size_t>(request, "steps", 500);
  require(steps >= 1, ErrorKind::kConfig, "audit steps must be >= 1");
  const auto dir = output_dir(request);

  ForestLearner learner(config);
  const auto trace = record_trace(learner, *source, steps);
  const auto reports = audit_estimation_error(trace, config.huber, config.notion,
                                              config.groups,
                                              opt(request, "bound", 0.0));
  double worst = 0.0;
  bool pass = true;
  for (const auto& r : reports) {
    worst = std::max(worst, r.observed);
    pass = pass && r.pass;
  }

  nlohmann::json result = {
      {"estimation_error",
       {{"theoretical", reports.front().theoretical},
        {"max_observed", worst},
        {"pass", pass},
        {"reports", to_json(std::span<const BoundReport>(reports))}}}};

  std::vector<Instance> g0;
  std::vector<Instance> g1;
  for (const auto& step : trace)
    (step.instance.a == 0 ? g0 : g1).push_back(step.instance);
  const std::size_t k = std::min({g0.size(), g1.size(), std::size_t{1000}});
  if (config.groups == 2 && k > 0) {
    std::vector<Instance> balanced(g0.begin(), g0.begin() + k);
    balanced.insert(balanced.end(), g1.begin(), g1.begin() + k);
    const BoundReport dp = check_dp_bound(learner.forest(), balanced);
    result["dp_bound"] = to_json(dp);
    pass = pass && dp.pass;
  }
  result["pass"] = pass;
  write_json(dir / "audit.json", result);
  return result;
}

std::size_t peak_memory_bytes() {
  rusage usage{};
  if (getrusage(RUSAGE_SELF, &usage) != 0) return 0;
  return static_cast<std::size_t>(usage.ru_maxrss) * 1024;
}

}  // namespace fairforest
