#ifndef FAIRFOREST_C_API_H
#define FAIRFOREST_C_API_H

/* C interface to the fairforest library. Every call returns an ff_status;
 * on failure ff_last_error() describes the problem (thread-local, valid until
 * the next call on the same thread). Strings returned through char** are
 * owned by the caller and released with ff_string_free. */

#include <stddef.h>

#if defined(_WIN32)
#  if defined(FAIRFOREST_BUILD)
#    define FF_API __declspec(dllexport)
#  else
#    define FF_API __declspec(dllimport)
#  endif
#else
#  define FF_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ff_status {
  FF_OK = 0,
  FF_ERR_DATA = 1,      /* malformed input, out-of-range label/group, shape */
  FF_ERR_CONFIG = 2,    /* invalid configuration or request */
  FF_ERR_NUMERICAL = 3, /* non-finite values, failed gradient check or bound */
  FF_ERR_IO = 4,        /* file could not be opened or written */
  FF_ERR_INTERNAL = 5   /* unexpected exception or bad argument pointer */
} ff_status;

typedef struct ff_learner ff_learner;

typedef struct ff_step_result {
  size_t prediction;
  double soft_score;
  double accuracy;
  int has_dp; /* 0 until both groups have been seen */
  double dp_hard;
  double dp_soft;
  double grad_norm_total;
  double grad_norm_fair;
} ff_step_result;

FF_API const char* ff_version(void);
FF_API const char* ff_last_error(void);
FF_API void ff_string_free(char* s);

/* Learner handles. config_json is a LearnerConfig object (keys height, dim,
 * classes, trees, lambda, delta, fairness, groups, lr, seed, baseline, ...);
 * missing keys take their defaults. */
FF_API ff_status ff_learner_create(const char* config_json, ff_learner** out);
FF_API void ff_learner_destroy(ff_learner* learner);
FF_API ff_status ff_learner_step(ff_learner* learner, const double* x,
                                 size_t dim, size_t y, size_t a,
                                 ff_step_result* out);
FF_API ff_status ff_learner_checkpoint(const ff_learner* learner,
                                       char** json_out);
FF_API ff_status ff_learner_restore(const char* checkpoint_json,
                                    ff_learner** out);

/* Commands. Each takes a JSON request and, when result_out is non-null,
 * returns a JSON result. ff_gradcheck and ff_audit return FF_ERR_NUMERICAL
 * (with the result still set) when the check fails. */
FF_API ff_status ff_run(const char* request_json, char** result_out);
FF_API ff_status ff_sweep(const char* request_json, char** result_out);
FF_API ff_status ff_gradcheck(const char* request_json, char** result_out);
FF_API ff_status ff_synth(const char* request_json, char** result_out);
FF_API ff_status ff_audit(const char* request_json, char** result_out);

#ifdef __cplusplus
}
#endif

#endif /* FAIRFOREST_C_API_H */
