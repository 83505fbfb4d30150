#ifndef BBM_BBM_H
#define BBM_BBM_H

/* C interface to the branching Brownian motion toolkit.
 *
 * All functions return bbm_status unless stated otherwise; on any failure
 * bbm_last_error() carries a message for the calling thread. Strings
 * returned through char** are heap-allocated and must be released with
 * bbm_string_free(); handles with their matching *_free(). Every run is
 * deterministic given (config, seed). */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define BBM_API __declspec(dllexport)
#else
#define BBM_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum bbm_status {
    BBM_OK = 0,
    BBM_E_PARSE = 1,    /* malformed JSON */
    BBM_E_VALIDATE = 2, /* schema or parameter violation */
    BBM_E_RUNTIME = 3,  /* numerical or internal failure */
    BBM_E_IO = 4,       /* file system failure */
    BBM_E_ARG = 5       /* null handle / bad argument */
} bbm_status;

typedef enum bbm_run_mode {
    BBM_RUN_SPECTRAL = 0, /* eigenvalue routes only */
    BBM_RUN_SIMULATE = 1, /* particle ensemble + rate checks */
    BBM_RUN_FK = 2,       /* weighted expectations, dirac1d only */
    BBM_RUN_PDE = 3,      /* wave front / tail checks, d=1 only */
    BBM_RUN_REPORT = 4,   /* spectral + simulate + duality */
    BBM_RUN_SELFTEST = 5  /* fast internal consistency suite */
} bbm_run_mode;

typedef struct bbm_config bbm_config;
typedef struct bbm_report bbm_report;

/* ABI version of this header/library pair. */
BBM_API int bbm_abi_version(void);

/* Message describing the most recent failure on this thread; never NULL.
 * The pointer stays valid until the next bbm_* call on the same thread. */
BBM_API const char* bbm_last_error(void);

BBM_API bbm_status bbm_config_from_json(const char* json_text, bbm_config** out);
BBM_API bbm_status bbm_config_from_file(const char* path, bbm_config** out);
BBM_API bbm_status bbm_config_set_seed(bbm_config* cfg, uint64_t seed);
BBM_API bbm_status bbm_config_set_replicas(bbm_config* cfg, int replicas);
BBM_API bbm_status bbm_config_set_out_dir(bbm_config* cfg, const char* dir);
/* Canonical JSON with every default materialized. */
BBM_API bbm_status bbm_config_to_json(const bbm_config* cfg, char** out);
BBM_API size_t bbm_config_warning_count(const bbm_config* cfg);
/* NULL when the index is out of range. */
BBM_API const char* bbm_config_warning(const bbm_config* cfg, size_t index);
BBM_API void bbm_config_free(bbm_config* cfg);

/* Runs the requested mode and, when the config names an output directory,
 * emits report.json plus the mode's CSV/tabular files into it. */
BBM_API bbm_status bbm_run(const bbm_config* cfg, bbm_run_mode mode, bbm_report** out);

BBM_API bbm_status bbm_report_to_json(const bbm_report* rep, char** out);
/* 1 when every non-informational criterion passed, else 0. */
BBM_API int bbm_report_pass(const bbm_report* rep);
BBM_API size_t bbm_report_criteria_count(const bbm_report* rep);
/* One-line "[PASS] id: ..." rendering; NULL when out of range. */
BBM_API bbm_status bbm_report_criterion_line(const bbm_report* rep, size_t index, char** out);
BBM_API void bbm_report_free(bbm_report* rep);

BBM_API void bbm_string_free(char* s);

#ifdef __cplusplus
}
#endif

#endif /* BBM_BBM_H */
