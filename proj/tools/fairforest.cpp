// Command-line front end. Builds a JSON request from flags and hands it to
// the C API. Exit codes: 0 ok, 1 data or I/O error, 2 configuration error,
// 3 numerical failure (including a failed gradient check or bound audit).

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fairforest/c_api.h"

namespace {

using nlohmann::json;

struct LearnerFlags {
  int height = 0;
  std::size_t trees = 0;
  std::size_t classes = 0;
  std::size_t groups = 0;
  double lambda = 0.0;
  double delta = 0.0;
  double lr = 0.0;
  double ema_decay = 0.0;
  std::string fairness;
  std::string baseline;
  std::uint64_t seed = 0;
  std::size_t mlp_hidden = 0;
  double majority_p = 0.0;
  std::string majority_source;
  std::size_t majority_label = 0;
  std::vector<CLI::Option*> options;
};

struct SourceFlags {
  std::string data;
  bool synthetic = false;
  std::string label;
  std::string group;
  std::vector<std::string> features;
  std::string normalize;
  std::size_t n = 0;
  std::size_t dim = 0;
  double bias = 0.0;
  double separation = 0.0;
  double group_shift = 0.0;
  double noise = 0.0;
  double bound = 0.0;
  std::vector<CLI::Option*> options;
};

CLI::Option* track(std::vector<CLI::Option*>& list, CLI::Option* opt) {
  list.push_back(opt);
  return opt;
}

void add_learner_flags(CLI::App& app, LearnerFlags& f) {
  auto& l = f.options;
  track(l, app.add_option("--height", f.height, "tree height (default 4)"));
  track(l, app.add_option("--trees", f.trees, "trees in the forest (default 3)"));
  track(l, app.add_option("--classes", f.classes, "task classes (default 2)"));
  track(l, app.add_option("--groups", f.groups, "protected groups K (default 2)"));
  track(l, app.add_option("--lambda", f.lambda, "fairness weight (default 0)"));
  track(l, app.add_option("--delta", f.delta, "Huber delta (default 0.01)"));
  track(l, app.add_option("--lr", f.lr, "Adam learning rate (default 2e-3)"));
  track(l, app.add_option("--ema-decay", f.ema_decay,
                               "aggregate decay, 0 = cumulative mean"));
  track(l, app.add_option("--fairness", f.fairness, "none|dp|eo|multi")
                    ->check(CLI::IsMember({"none", "dp", "eo", "multi",
                                           "equalized_odds", "multigroup"})));
  track(l, app.add_option("--baseline", f.baseline,
                               "node|leaf|reservoir|mlp|majority")
                    ->check(CLI::IsMember(
                        {"node", "leaf", "reservoir", "mlp", "majority"})));
  track(l, app.add_option("--seed", f.seed, "seed for model and synthetic data"));
  track(l, app.add_option("--mlp-hidden", f.mlp_hidden, "MLP hidden width"));
  track(l, app.add_option("--majority-p", f.majority_p,
                               "probability of keeping the model prediction"));
  track(l, app.add_option("--majority-source", f.majority_source, "running|fixed")
                    ->check(CLI::IsMember({"running", "fixed"})));
  track(l, app.add_option("--majority-label", f.majority_label,
                               "label used with --majority-source fixed"));
}

void add_source_flags(CLI::App& app, SourceFlags& f) {
  auto& l = f.options;
  auto* data = app.add_option("--data", f.data, "CSV stream (header row first)");
  auto* synth = app.add_flag("--synthetic", f.synthetic, "use the synthetic biased stream");
  data->excludes(synth);
  track(l, app.add_option("--label", f.label, "label column (default y)"));
  track(l, app.add_option("--group", f.group, "group column (default a)"));
  track(l, app.add_option("--features", f.features, "feature columns")
                    ->delimiter(','));
  track(l, app.add_option("--normalize", f.normalize, "none|online")
                    ->check(CLI::IsMember({"none", "online"})));
  track(l, app.add_option("--n", f.n, "synthetic stream length"));
  track(l, app.add_option("--dim", f.dim, "synthetic feature count"));
  track(l, app.add_option("--bias", f.bias, "synthetic label/group correlation"));
  track(l, app.add_option("--separation", f.separation, "synthetic label shift"));
  track(l, app.add_option("--group-shift", f.group_shift, "synthetic group shift"));
  track(l, app.add_option("--noise", f.noise, "synthetic label noise"));
  track(l, app.add_option("--bound", f.bound,
                               "rescale inputs so the max norm equals this"));
}

bool given(const CLI::Option* opt) { return opt->count() > 0; }

json learner_json(const LearnerFlags& f) {
  json j = json::object();
  auto set = [&](const char* flag, const char* key, const auto& value) {
    for (const CLI::Option* o : f.options)
      if (o->get_name() == flag && given(o)) j[key] = value;
  };
  set("--height", "height", f.height);
  set("--trees", "trees", f.trees);
  set("--classes", "classes", f.classes);
  set("--groups", "groups", f.groups);
  set("--lambda", "lambda", f.lambda);
  set("--delta", "delta", f.delta);
  set("--lr", "lr", f.lr);
  set("--ema-decay", "ema_decay", f.ema_decay);
  set("--fairness", "fairness", f.fairness);
  set("--baseline", "baseline", f.baseline);
  set("--seed", "seed", f.seed);
  set("--mlp-hidden", "mlp_hidden", f.mlp_hidden);
  set("--majority-p", "majority_p", f.majority_p);
  set("--majority-source", "majority_source", f.majority_source);
  set("--majority-label", "majority_label", f.majority_label);
  return j;
}

json source_json(const SourceFlags& f, json& request) {
  auto flag = [&](const char* name) {
    for (const CLI::Option* o : f.options)
      if (o->get_name() == name) return given(o);
    return false;
  };
  if (flag("--bound")) request["bound"] = f.bound;
  if (!f.data.empty()) {
    json d = {{"path", f.data}};
    if (flag("--label")) d["label"] = f.label;
    if (flag("--group")) d["group"] = f.group;
    if (flag("--features")) d["features"] = f.features;
    if (flag("--normalize")) d["normalize"] = f.normalize;
    request["data"] = d;
  } else if (f.synthetic) {
    json s = json::object();
    if (flag("--n")) s["n"] = f.n;
    if (flag("--dim")) s["dim"] = f.dim;
    if (flag("--bias")) s["bias"] = f.bias;
    if (flag("--separation")) s["separation"] = f.separation;
    if (flag("--group-shift")) s["group_shift"] = f.group_shift;
    if (flag("--noise")) s["noise"] = f.noise;
    request["synthetic"] = s;
  }
  return request;
}

// CLI11 only reads config files on the root app, so subcommands load theirs
// here. Keys name long flags without the dashes.
void apply_config_file(CLI::App& sub, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CLI::FileError::Missing(path);
  for (const CLI::ConfigItem& item : CLI::ConfigINI().from_config(in)) {
    CLI::Option* opt = sub.get_option_no_throw("--" + item.name);
    if (!opt || item.name == "config")
      throw CLI::ConfigError::Extras("unknown config key " + item.name);
    if (opt->count() > 0) continue;
    for (const std::string& v : item.inputs) opt->add_result(v);
    opt->run_callback();
  }
}

int exit_code(ff_status status) {
  switch (status) {
    case FF_OK: return 0;
    case FF_ERR_DATA: return 1;
    case FF_ERR_CONFIG: return 2;
    case FF_ERR_NUMERICAL: return 3;
    case FF_ERR_IO: return 1;
    case FF_ERR_INTERNAL: return 4;
  }
  return 4;
}

int finish(ff_status status, char* result, bool print_result) {
  if (result && print_result) std::cout << json::parse(result).dump(2) << '\n';
  ff_string_free(result);
  if (status != FF_OK) std::cerr << "fairforest: " << ff_last_error() << '\n';
  return exit_code(status);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fair online learning with soft oblique decision forests"};
  app.require_subcommand(1);

  LearnerFlags learner;
  SourceFlags source;
  std::string out;
  std::uint64_t checkpoint_every = 0;
  std::string resume;
  bool quiet = false;

  auto* run = app.add_subcommand("run", "stream a dataset through a learner");
  add_learner_flags(*run, learner);
  add_source_flags(*run, source);
  run->add_option("--out", out, "output directory")->required();
  run->add_option("--checkpoint-every", checkpoint_every,
                  "write checkpoint.json every K steps");
  run->add_option("--resume", resume, "continue from a checkpoint file");
  run->add_flag("--quiet", quiet, "no progress on stderr");

  LearnerFlags sweep_learner;
  SourceFlags sweep_source;
  std::vector<double> lambdas;
  auto* sweep = app.add_subcommand("sweep", "final metrics for several lambdas");
  add_learner_flags(*sweep, sweep_learner);
  add_source_flags(*sweep, sweep_source);
  sweep->add_option("--lambdas", lambdas, "comma-separated lambda values")
      ->delimiter(',')
      ->required();
  sweep->add_option("--out", out, "output directory")->required();

  std::size_t trials = 100;
  std::uint64_t gc_seed = 0;
  bool corrupt = false;
  std::string gc_out;
  auto* gc = app.add_subcommand("gradcheck", "analytic vs finite-difference gradients");
  gc->add_option("--trials", trials, "random configurations")->check(CLI::PositiveNumber);
  gc->add_option("--seed", gc_seed, "seed");
  gc->add_option("--out", gc_out, "write the report here instead of stdout");
  gc->add_flag("--corrupt-gradient", corrupt)->group("");

  std::size_t syn_n = 5000;
  double syn_bias = 0.6;
  std::uint64_t syn_seed = 7;
  std::string syn_out;
  SourceFlags syn_extra;
  auto* synth = app.add_subcommand("synth", "write a synthetic biased stream as CSV");
  synth->add_option("--n", syn_n, "rows");
  synth->add_option("--bias", syn_bias, "label/group correlation");
  synth->add_option("--seed", syn_seed, "seed");
  auto* syn_dim = synth->add_option("--dim", syn_extra.dim, "features");
  auto* syn_sep = synth->add_option("--separation", syn_extra.separation, "label shift");
  auto* syn_gs = synth->add_option("--group-shift", syn_extra.group_shift, "group shift");
  auto* syn_noise = synth->add_option("--noise", syn_extra.noise, "label noise");
  auto* syn_bound = synth->add_option("--bound", syn_extra.bound, "max input norm");
  synth->add_option("--out", syn_out, "output CSV")->required();

  LearnerFlags audit_learner;
  SourceFlags audit_source;
  std::size_t audit_steps = 500;
  auto* audit = app.add_subcommand("audit", "estimation-error and DP bound checks");
  add_learner_flags(*audit, audit_learner);
  add_source_flags(*audit, audit_source);
  audit->add_option("--steps", audit_steps, "trace length");
  audit->add_option("--out", out, "output directory")->required();

  std::string config_file;
  for (CLI::App* sub : {run, sweep, gc, synth, audit})
    sub->add_option("--config", config_file,
                    "key=value file with flag values; command-line flags win");

  try {
    app.parse(argc, argv);
    if (!config_file.empty())
      for (CLI::App* sub : app.get_subcommands()) apply_config_file(*sub, config_file);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  char* result = nullptr;
  if (*run) {
    if (source.data.empty() && !source.synthetic) {
      std::cerr << "fairforest: run needs --data PATH or --synthetic\n";
      return 2;
    }
    json request = {{"learner", learner_json(learner)}, {"out", out},
                    {"checkpoint_every", checkpoint_every}, {"progress", !quiet}};
    if (!resume.empty()) request["resume"] = resume;
    source_json(source, request);
    return finish(ff_run(request.dump().c_str(), &result), result, false);
  }
  if (*sweep) {
    if (sweep_source.data.empty() && !sweep_source.synthetic) {
      std::cerr << "fairforest: sweep needs --data PATH or --synthetic\n";
      return 2;
    }
    json request = {{"learner", learner_json(sweep_learner)}, {"out", out},
                    {"lambdas", lambdas}};
    source_json(sweep_source, request);
    return finish(ff_sweep(request.dump().c_str(), &result), result, false);
  }
  if (*gc) {
    json request = {{"trials", trials}, {"seed", gc_seed}, {"corrupt", corrupt}};
    if (!gc_out.empty()) request["out"] = gc_out;
    return finish(ff_gradcheck(request.dump().c_str(), &result), result,
                  gc_out.empty());
  }
  if (*synth) {
    json request = {{"n", syn_n}, {"bias", syn_bias}, {"seed", syn_seed},
                    {"out", syn_out}};
    if (given(syn_dim)) request["dim"] = syn_extra.dim;
    if (given(syn_sep)) request["separation"] = syn_extra.separation;
    if (given(syn_gs)) request["group_shift"] = syn_extra.group_shift;
    if (given(syn_noise)) request["noise"] = syn_extra.noise;
    if (given(syn_bound)) request["bound"] = syn_extra.bound;
    return finish(ff_synth(request.dump().c_str(), &result), result, false);
  }
  if (*audit) {
    if (audit_source.data.empty() && !audit_source.synthetic) {
      std::cerr << "fairforest: audit needs --data PATH or --synthetic\n";
      return 2;
    }
    json request = {{"learner", learner_json(audit_learner)}, {"out", out},
                    {"steps", audit_steps}};
    source_json(audit_source, request);
    return finish(ff_audit(request.dump().c_str(), &result), result, false);
  }
  return 2;
}
