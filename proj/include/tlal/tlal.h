/* C interface to the active-learning experiment library.
 *
 * All functions return a tlal_status; on failure the thread-local message
 * from tlal_last_error() describes the cause. Handles are opaque and must
 * be released with their close function.
 */
#ifndef TLAL_H
#define TLAL_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum {
  TLAL_OK = 0,
  TLAL_E_CONFIGURATION = 1,
  TLAL_E_INGESTION = 2,
  TLAL_E_STRUCTURAL = 3,
  TLAL_E_SAMPLING = 4,
  TLAL_E_STRATIFICATION = 5,
  TLAL_E_DOMAIN = 6,
  TLAL_E_ARITY = 7,
  TLAL_E_NUMERICAL = 8,
  TLAL_E_CONSISTENCY = 9,
  TLAL_E_SHAPE = 10,
  TLAL_E_RESOURCE = 11,
  TLAL_E_STATISTICS = 12,
  TLAL_E_IO = 13,
  TLAL_E_REPORT = 14,
  TLAL_E_INTERNAL = 15
} tlal_status;

const char* tlal_version(void);

/* Message for the most recent failure on this thread; empty on success. */
const char* tlal_last_error(void);

/* ---- math primitives ---- */

/* Shannon entropy (natural log) of a binary distribution (p0, p1). */
tlal_status tlal_entropy(const double p[2], double* out);

/* KL divergence D(p||q); q entries are clamped below at 1e-12. */
tlal_status tlal_kl_divergence(const double p[2], const double q[2], double* out);

/* Committee disagreement score from 3 member distributions, laid out as
 * probs = {m0p0, m0p1, m1p0, m1p1, m2p0, m2p1}. Any output pointer may be
 * NULL to skip that component. */
tlal_status tlal_uncertainty_score(const double probs[6], double* entropy_sum,
                                   double* kl_sum, double* score);

/* Mann-Whitney AUC over scores with binary labels (ties count 1/2). */
tlal_status tlal_auc(const double* scores, const int* labels, size_t n, double* out);

/* Mean with normal-approximation 95% CI (n >= 2). */
tlal_status tlal_aggregate(const double* values, size_t n, double* mean, double* ci_low,
                           double* ci_high);

/* ---- experiment orchestration ---- */

typedef struct tlal_experiment tlal_experiment;

tlal_status tlal_experiment_open(const char* config_json, tlal_experiment** out);
tlal_status tlal_experiment_open_file(const char* config_path, tlal_experiment** out);

/* Override a scalar config field before running. Supported keys:
 * "seed" (decimal integer), "output_dir", "runs" (decimal integer),
 * "allow_fetch" ("0" | "1"). */
tlal_status tlal_experiment_override(tlal_experiment* exp, const char* key,
                                     const char* value);

/* Canonical JSON snapshot of the handle's config; owned by the handle. */
const char* tlal_experiment_config(tlal_experiment* exp);

/* Run one stage: synth | ingest | split | build | committee | score | rank |
 * select | train | evaluate | sweep. Stages read their prerequisites from
 * the config's output directory. */
tlal_status tlal_experiment_run_stage(tlal_experiment* exp, const char* stage);

/* Full workflow; writes manifest.json into the output directory. */
tlal_status tlal_experiment_run(tlal_experiment* exp);

/* Emit report kinds (comma-separated: distribution,comparison,sweep,range,
 * tables); NULL or "" emits every kind whose inputs exist. */
tlal_status tlal_experiment_report(tlal_experiment* exp, const char* kinds_csv);

void tlal_experiment_close(tlal_experiment* exp);

/* Re-run a recorded experiment and compare selections (bit-exact) and AUC
 * values (1e-6). Output pointers may be NULL. */
tlal_status tlal_replay(const char* manifest_path, const char* out_dir,
                        int* selections_identical, double* max_auc_delta, int* ok);

#ifdef __cplusplus
}
#endif

#endif /* TLAL_H */
