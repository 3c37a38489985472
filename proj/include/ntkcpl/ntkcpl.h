/* NTKCPL active-learning engine: C API.
 *
 * Every entry point returns ntkcpl_status; on failure the thread-local
 * message from ntkcpl_last_error() describes the problem. Objects are
 * opaque handles freed with their matching *_free function.
 */

#ifndef NTKCPL_H
#define NTKCPL_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ntkcpl_status {
  NTKCPL_OK = 0,
  NTKCPL_ERROR = 1,         /* unexpected failure */
  NTKCPL_CONFIG_ERROR = 2,  /* bad configuration or arguments */
  NTKCPL_DATA_ERROR = 3,    /* unreadable or invalid data files */
  NTKCPL_NUMERIC_ERROR = 4, /* numerical-rank failure */
} ntkcpl_status;

typedef struct ntkcpl_features ntkcpl_features;
typedef struct ntkcpl_session ntkcpl_session;

const char* ntkcpl_version(void);

/* Message for the most recent failure on this thread. */
const char* ntkcpl_last_error(void);

/* ---- feature pools ----------------------------------------------------
 * format is "binary" (FEATv1) or "csv". */
ntkcpl_status ntkcpl_features_load(const char* path, const char* format,
                                   ntkcpl_features** out);
ntkcpl_status ntkcpl_features_save(const ntkcpl_features* features,
                                   const char* path, const char* format);
ntkcpl_status ntkcpl_features_info(const ntkcpl_features* features,
                                   uint32_t* n, uint32_t* dim,
                                   uint32_t* num_classes, int* has_labels);
void ntkcpl_features_free(ntkcpl_features* features);

/* Synthetic Gaussian-mixture pool. params_json fields (all optional):
 * n, dim, classes, sigma, radius, center_seed, sample_seed. */
ntkcpl_status ntkcpl_features_synth(const char* params_json,
                                    ntkcpl_features** out);

/* ---- active-learning sessions -----------------------------------------
 * config_json mirrors the experiment config's strategy/train/ntk sections
 * plus candidate_size, initial_budget, c_max and seed; pass NULL or ""
 * for defaults. The feature pool must carry oracle labels. */
ntkcpl_status ntkcpl_session_create(const ntkcpl_features* features,
                                    const char* config_json,
                                    ntkcpl_session** out);

/* Marks samples as labeled, reading their labels from the oracle. */
ntkcpl_status ntkcpl_session_label(ntkcpl_session* session,
                                   const int64_t* ids, size_t count);

/* Runs one selection round; writes up to `budget` distinct unlabeled
 * sample ids into out_ids (capacity budget) and sets *out_count. */
ntkcpl_status ntkcpl_session_select(ntkcpl_session* session, size_t budget,
                                    int64_t* out_ids, size_t* out_count);

/* Per-round diagnostic document (error decomposition, coverage pair,
 * argmax agreement rate) as JSON; free with ntkcpl_string_free. */
ntkcpl_status ntkcpl_session_diagnose(ntkcpl_session* session,
                                      char** json_out);

/* Binary dump of the current round's empirical NTK gram matrix. */
ntkcpl_status ntkcpl_session_dump_gram(ntkcpl_session* session,
                                       const char* path);

/* CSV dump of the current round's clustering-pseudo-labels plus the
 * per-cluster purity report. */
ntkcpl_status ntkcpl_session_dump_cpl(ntkcpl_session* session,
                                      const char* csv_path,
                                      const char* purity_path);
void ntkcpl_session_free(ntkcpl_session* session);

/* ---- batch experiment harness ----------------------------------------- */

/* Runs a full experiment config (JSON text); writes metrics.csv plus the
 * report files into output_dir (overrides the config's output_dir). */
ntkcpl_status ntkcpl_run_experiment(const char* config_json,
                                    const char* output_dir);

/* Aggregates one or more records CSV files into report files. */
ntkcpl_status ntkcpl_report(const char* const* records_csv_paths,
                            size_t count, const char* output_dir);

void ntkcpl_string_free(char* s);

#ifdef __cplusplus
}
#endif

#endif /* NTKCPL_H */
