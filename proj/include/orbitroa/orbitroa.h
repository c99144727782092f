#ifndef ORBITROA_H
#define ORBITROA_H

/* C interface to the orbitroa library. Handles are opaque; every call that
 * can fail returns a status code and leaves a message for
 * orbitroa_last_error() on the calling thread. Strings returned through
 * char** out-parameters are owned by the caller (orbitroa_string_free). */

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define ORBITROA_API __declspec(dllexport)
#else
#define ORBITROA_API __attribute__((visibility("default")))
#endif

typedef enum {
  ORBITROA_OK = 0,
  ORBITROA_ERR_NUMERICAL = 1,
  ORBITROA_INFEASIBLE = 2, /* a valid "no": unstable, infeasible, failed validation */
  ORBITROA_ERR_INVALID = 3,
  ORBITROA_ERR_IO = 4,
  ORBITROA_ERR_PARSE = 5
} orbitroa_status;

typedef struct orbitroa_config orbitroa_config;
typedef struct orbitroa_model orbitroa_model;
typedef struct orbitroa_certificate orbitroa_certificate;

ORBITROA_API const char* orbitroa_version(void);
/* Message of the last failing call on this thread ("" if none). */
ORBITROA_API const char* orbitroa_last_error(void);
ORBITROA_API void orbitroa_string_free(char* s);

/* Run configuration: option names follow the CLI flags without dashes
 * ("model", "orbit", "z", "taus", "vdeg", "deltas", "seed", "out", ...). */
ORBITROA_API orbitroa_config* orbitroa_config_new(void);
ORBITROA_API void orbitroa_config_free(orbitroa_config* cfg);
ORBITROA_API orbitroa_status orbitroa_config_set(orbitroa_config* cfg, const char* key,
                                                 const char* value);

/* Runs one command (orbit, translin, seed, verify, stabilize, optimize_z,
 * simulate, validate, pipeline). On OK and INFEASIBLE answers *summary (if
 * non-null) receives the human-readable report. */
ORBITROA_API orbitroa_status orbitroa_run(const char* command, const orbitroa_config* cfg,
                                          char** summary);

ORBITROA_API orbitroa_status orbitroa_model_load(const char* path, orbitroa_model** out);
ORBITROA_API void orbitroa_model_free(orbitroa_model* model);
ORBITROA_API int orbitroa_model_states(const orbitroa_model* model);
ORBITROA_API int orbitroa_model_inputs(const orbitroa_model* model);
ORBITROA_API int orbitroa_model_phases(const orbitroa_model* model);

ORBITROA_API orbitroa_status orbitroa_certificate_load(const char* path,
                                                       orbitroa_certificate** out);
ORBITROA_API void orbitroa_certificate_free(orbitroa_certificate* cert);
ORBITROA_API double orbitroa_certificate_radius(const orbitroa_certificate* cert);
ORBITROA_API int orbitroa_certificate_taus(const orbitroa_certificate* cert);
/* 1 when every sampled condition passed, 0 otherwise. */
ORBITROA_API int orbitroa_certificate_valid(const orbitroa_certificate* cert);
ORBITROA_API orbitroa_status orbitroa_certificate_summary(const orbitroa_certificate* cert,
                                                          char** summary);

#ifdef __cplusplus
}
#endif

#endif
