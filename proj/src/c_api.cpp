#include "fairforest/c_api.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <memory>
#include <new>
#include <string>

#include <json.hpp>

#include "fairforest/baselines.hpp"
#include "fairforest/commands.hpp"
#include "fairforest/error.hpp"

struct ff_learner {
  std::unique_ptr<fairforest::OnlineLearner> impl;
};

namespace {

thread_local std::string g_last_error;

ff_status status_of(fairforest::ErrorKind kind) {
  using fairforest::ErrorKind;
  switch (kind) {
    case ErrorKind::kConfig:
    case ErrorKind::kPrecondition:
      return FF_ERR_CONFIG;
    case ErrorKind::kShape:
    case ErrorKind::kDomain:
    case ErrorKind::kData:
      return FF_ERR_DATA;
    case ErrorKind::kNumerical:
      return FF_ERR_NUMERICAL;
    case ErrorKind::kIo:
      return FF_ERR_IO;
  }
  return FF_ERR_INTERNAL;
}

template <class F>
ff_status guarded(F&& body) {
  try {
    g_last_error.clear();
    return body();
  } catch (const fairforest::Error& e) {
    g_last_error = std::string(fairforest::to_string(e.kind())) + " error: " +
                   e.what();
    return status_of(e.kind());
  } catch (const nlohmann::json::parse_error& e) {
    g_last_error = std::string("config error: invalid JSON: ") + e.what();
    return FF_ERR_CONFIG;
  } catch (const std::bad_alloc&) {
    g_last_error = "internal error: out of memory";
    return FF_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = std::string("internal error: ") + e.what();
    return FF_ERR_INTERNAL;
  }
}

ff_status bad_argument(const char* what) {
  g_last_error = std::string("internal error: ") + what;
  return FF_ERR_INTERNAL;
}

char* copy_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

nlohmann::json parse(const char* text) {
  return nlohmann::json::parse(text);
}

using Command = nlohmann::json (*)(const nlohmann::json&);

ff_status run_command(Command command, const char* request, char** result_out,
                      bool check_pass) {
  if (!request) return bad_argument("request is null");
  return guarded([&] {
    const nlohmann::json result = command(parse(request));
    if (result_out) *result_out = copy_string(result.dump());
    if (check_pass && result.contains("pass") && !result.at("pass").get<bool>()) {
      g_last_error = "numerical error: check failed";
      return FF_ERR_NUMERICAL;
    }
    return FF_OK;
  });
}

}  // namespace

extern "C" {

const char* ff_version(void) { return "0.1.0"; }

const char* ff_last_error(void) { return g_last_error.c_str(); }

void ff_string_free(char* s) { std::free(s); }

ff_status ff_learner_create(const char* config_json, ff_learner** out) {
  if (!config_json || !out) return bad_argument("null argument");
  *out = nullptr;
  return guarded([&] {
    auto config = fairforest::LearnerConfig::from_json(parse(config_json));
    *out = new ff_learner{fairforest::make_learner(config)};
    return FF_OK;
  });
}

void ff_learner_destroy(ff_learner* learner) { delete learner; }

ff_status ff_learner_step(ff_learner* learner, const double* x, size_t dim,
                          size_t y, size_t a, ff_step_result* out) {
  if (!learner || (!x && dim > 0)) return bad_argument("null argument");
  return guarded([&] {
    const auto r = learner->impl->step({x, dim}, y, a);
    if (out) {
      out->prediction = r.prediction;
      out->soft_score = r.soft_score;
      out->accuracy = r.accuracy;
      out->has_dp = r.dp_hard.has_value() ? 1 : 0;
      out->dp_hard = r.dp_hard.value_or(0.0);
      out->dp_soft = r.dp_soft.value_or(0.0);
      out->grad_norm_total = r.grad_norm_total;
      out->grad_norm_fair = r.grad_norm_fair;
    }
    return FF_OK;
  });
}

ff_status ff_learner_checkpoint(const ff_learner* learner, char** json_out) {
  if (!learner || !json_out) return bad_argument("null argument");
  return guarded([&] {
    *json_out = copy_string(learner->impl->checkpoint().dump());
    return FF_OK;
  });
}

ff_status ff_learner_restore(const char* checkpoint_json, ff_learner** out) {
  if (!checkpoint_json || !out) return bad_argument("null argument");
  *out = nullptr;
  return guarded([&] {
    *out = new ff_learner{fairforest::restore_learner(parse(checkpoint_json))};
    return FF_OK;
  });
}

ff_status ff_run(const char* request_json, char** result_out) {
  return run_command(&fairforest::cmd_run, request_json, result_out, false);
}

ff_status ff_sweep(const char* request_json, char** result_out) {
  return run_command(&fairforest::cmd_sweep, request_json, result_out, false);
}

ff_status ff_gradcheck(const char* request_json, char** result_out) {
  return run_command(&fairforest::cmd_gradcheck, request_json, result_out, true);
}

ff_status ff_synth(const char* request_json, char** result_out) {
  return run_command(&fairforest::cmd_synth, request_json, result_out, false);
}

ff_status ff_audit(const char* request_json, char** result_out) {
  return run_command(&fairforest::cmd_audit, request_json, result_out, true);
}

}  // extern "C"
