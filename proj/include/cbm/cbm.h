/* C interface to the composite behavioral model library. Every call returns a
 * status; on failure cbm_last_error() describes it (per thread). Strings
 * handed out through char** are owned by the caller and released with
 * cbm_string_free. */
#ifndef CBM_CBM_H
#define CBM_CBM_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define CBM_API __declspec(dllexport)
#else
#define CBM_API __attribute__((visibility("default")))
#endif

typedef enum cbm_status {
  CBM_OK = 0,
  CBM_ERR_CONFIG = 1,
  CBM_ERR_RUNTIME = 2,
  CBM_ERR_INVALID_ARGUMENT = 3,
  CBM_ERR_INPUT = 4,
  CBM_ERR_IO = 5,
  CBM_ERR_MISMATCH = 6
} cbm_status;

typedef struct cbm_config cbm_config;
typedef struct cbm_corpus cbm_corpus;
typedef struct cbm_model cbm_model;

CBM_API const char* cbm_version(void);
CBM_API const char* cbm_last_error(void);
CBM_API void cbm_string_free(char* s);

/* Configuration: defaults, then a key=value (or report.json) file, then
 * single keys; later calls win. */
CBM_API cbm_status cbm_config_new(cbm_config** out);
CBM_API void cbm_config_free(cbm_config* config);
CBM_API cbm_status cbm_config_set(cbm_config* config, const char* key, const char* value);
CBM_API cbm_status cbm_config_load(cbm_config* config, const char* path);
/* Applies CBM_SEED when set. */
CBM_API cbm_status cbm_config_apply_env(cbm_config* config);
CBM_API cbm_status cbm_config_validate(const cbm_config* config);
CBM_API cbm_status cbm_config_text(const cbm_config* config, char** out);

/* Writes records.tsv, ties.tsv, venues.tsv and truth.cbm into out_dir. */
CBM_API cbm_status cbm_synth(const cbm_config* config, const char* out_dir, size_t* behaviors);

/* Runs the configured experiment and writes its report directory. summary may be NULL. */
CBM_API cbm_status cbm_run(const cbm_config* config, const char* out_dir, char** summary);

/* Loads the configured records (or synthesizes a corpus when none is set). */
CBM_API cbm_status cbm_corpus_load(const cbm_config* config, cbm_corpus** out);
CBM_API void cbm_corpus_free(cbm_corpus* corpus);
CBM_API size_t cbm_corpus_size(const cbm_corpus* corpus);
CBM_API cbm_status cbm_corpus_stats(const cbm_corpus* corpus, char** out);

CBM_API cbm_status cbm_model_load(const char* path, cbm_model** out);
CBM_API void cbm_model_free(cbm_model* model);
/* 16 hex digits identifying the model's user, venue and word tables. */
CBM_API cbm_status cbm_model_hash(const cbm_model* model, char** out);
/* Log-likelihood of one behavior by ids; words may be NULL when count is 0. */
CBM_API cbm_status cbm_model_log_likelihood(const cbm_model* model, int user, int venue, const int* words,
                                            size_t count, double* out);

/* Scores a records file into a tab-separated scores file. expected_hash may be
 * NULL; otherwise a mismatch fails with CBM_ERR_MISMATCH before scoring. rows
 * and row_errors may be NULL. */
CBM_API cbm_status cbm_score(const cbm_model* model, const cbm_config* config, const char* records,
                             const char* out_path, int latency, const char* expected_hash, size_t* rows,
                             size_t* row_errors);

#ifdef __cplusplus
}
#endif

#endif
