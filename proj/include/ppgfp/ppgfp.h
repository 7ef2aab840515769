/* C interface of the PPG + fingerprint authentication library.
 *
 * Every function returns a ppgfp_status. On failure the message of the most
 * recent error on the calling thread is available from ppgfp_last_error()
 * until the next failing call on that thread. Handles are opaque and owned by
 * the caller; free them with the matching *_free function. Paths are UTF-8.
 */
#ifndef PPGFP_H
#define PPGFP_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define PPGFP_API __declspec(dllexport)
#else
#define PPGFP_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ppgfp_status {
  PPGFP_OK = 0,
  PPGFP_ERR_INPUT = 1,     /* malformed caller data */
  PPGFP_ERR_CONFIG = 2,    /* invalid parameter value or unknown key */
  PPGFP_ERR_DIMENSION = 3, /* shape mismatch */
  PPGFP_ERR_QUALITY = 4,   /* signal or image quality too poor */
  PPGFP_ERR_NUMERIC = 5,   /* non-finite value or degenerate normalization */
  PPGFP_ERR_DATA = 6,      /* dataset-level problem */
  PPGFP_ERR_METRIC = 7,    /* metric undefined for the scores */
  PPGFP_ERR_IO = 8,        /* file system or format failure */
  PPGFP_ERR_CONTRACT = 9,  /* internal precondition violated */
  PPGFP_ERR_USAGE = 10,    /* missing or misplaced run inputs */
  PPGFP_ERR_INTERNAL = 11  /* unexpected failure, e.g. out of memory */
} ppgfp_status;

/* Process exit code for a status: 0 ok, 1 usage or config, 2 data, quality
 * or other failure, 3 numeric guard. */
PPGFP_API int ppgfp_exit_code(ppgfp_status status);
PPGFP_API const char* ppgfp_status_name(ppgfp_status status);
PPGFP_API const char* ppgfp_last_error(void);
PPGFP_API const char* ppgfp_version(void);

/* ---- configuration ------------------------------------------------------ */

typedef struct ppgfp_config ppgfp_config;

/* Desk preset defaults. */
PPGFP_API ppgfp_status ppgfp_config_new(ppgfp_config** out);
/* key=value file; starts from the desk preset. */
PPGFP_API ppgfp_status ppgfp_config_load(const char* path, ppgfp_config** out);
PPGFP_API ppgfp_status ppgfp_config_set(ppgfp_config* cfg, const char* key, const char* value);
/* Copies the value of `key` into buf (NUL-terminated) when it fits; *needed
 * receives the required size including the terminator. */
PPGFP_API ppgfp_status ppgfp_config_get(const ppgfp_config* cfg, const char* key, char* buf, size_t cap,
                                        size_t* needed);
PPGFP_API ppgfp_status ppgfp_config_validate(const ppgfp_config* cfg);
PPGFP_API void ppgfp_config_free(ppgfp_config* cfg);

/* ---- pipeline stages ----------------------------------------------------
 * Each stage writes run_manifest.txt and run_config.txt into its output
 * directory. A target_user below 0 selects every user in the dataset. */

PPGFP_API ppgfp_status ppgfp_synth(const ppgfp_config* cfg, const char* out_dir);

typedef struct ppgfp_preprocess_summary {
  size_t recordings;
  size_t failed;
  size_t samples;
} ppgfp_preprocess_summary;

/* Fails with PPGFP_ERR_DATA only when every recording fails; the summary is
 * filled whenever the tree was processed. */
PPGFP_API ppgfp_status ppgfp_preprocess(const ppgfp_config* cfg, const char* in_dir, const char* out_dir,
                                        ppgfp_preprocess_summary* summary);
PPGFP_API ppgfp_status ppgfp_train(const ppgfp_config* cfg, const char* data_dir, int64_t target_user,
                                   const char* out_dir);

typedef struct ppgfp_user_metrics {
  size_t user;
  double acc;
  double eer;
  double threshold;
  double moment_cos;   /* NaN for single-modality models */
  double impostor_cos; /* NaN for single-modality models */
  size_t genuine;
  size_t impostor;
} ppgfp_user_metrics;

/* Writes up to `cap` rows into `rows` (may be NULL when cap is 0) and the
 * number of evaluated users into *count. */
PPGFP_API ppgfp_status ppgfp_evaluate(const ppgfp_config* cfg, const char* data_dir, const char* model_dir,
                                      int64_t target_user, const char* out_dir, ppgfp_user_metrics* rows,
                                      size_t cap, size_t* count);
PPGFP_API ppgfp_status ppgfp_ablate(const ppgfp_config* cfg, const char* data_dir, int64_t target_user,
                                    const char* out_dir);

/* Objective gradcheck on the tiny model; out_dir may be NULL. */
PPGFP_API ppgfp_status ppgfp_gradcheck(const ppgfp_config* cfg, const char* out_dir, double* max_rel_error,
                                       size_t* checked);

/* ---- models ------------------------------------------------------------- */

typedef struct ppgfp_model ppgfp_model;

/* Loads the checkpoint of `user` from a train output directory. */
PPGFP_API ppgfp_status ppgfp_model_load(const char* model_dir, size_t user, ppgfp_model** out);
PPGFP_API size_t ppgfp_model_beat_length(const ppgfp_model* model);
PPGFP_API size_t ppgfp_model_fingerprint_length(const ppgfp_model* model);
/* Genuine-pair probability of one beat and one fingerprint. Single-modality
 * models ignore the absent input, which may then be NULL. */
PPGFP_API ppgfp_status ppgfp_model_score(ppgfp_model* model, const double* beat, size_t beat_len,
                                         const double* fingerprint, size_t fingerprint_len, double* score);
PPGFP_API void ppgfp_model_free(ppgfp_model* model);

#ifdef __cplusplus
}
#endif

#endif /* PPGFP_H */
