/* C interface to the conjoint simulation and effect-estimation library.
 *
 * Every function returns a dipce_status; DIPCE_OK means success. On any
 * failure the thread-local message from dipce_last_error() describes what
 * went wrong. Out-parameters are written only on DIPCE_OK. Handles are
 * opaque and must be released with the matching *_free function; strings
 * returned through char** out-parameters must be released with
 * dipce_string_free.
 */
#ifndef DIPCE_H
#define DIPCE_H

#if defined(_WIN32)
#define DIPCE_API
#else
#define DIPCE_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dipce_status {
  DIPCE_OK = 0,
  DIPCE_ERR_INVALID_ARGUMENT = 1,
  DIPCE_ERR_INVALID_SPEC = 2,
  DIPCE_ERR_CONFIG_INVALID = 3,
  DIPCE_ERR_PARSE = 4,
  DIPCE_ERR_IO = 5,
  DIPCE_ERR_SCHEMA_MISMATCH = 6,
  DIPCE_ERR_SHAPE_MISMATCH = 7,
  DIPCE_ERR_DEGENERATE_DATA = 8,
  DIPCE_ERR_EMPTY_SUBSET = 9,
  DIPCE_ERR_INSUFFICIENT_BOOTSTRAP = 10,
  DIPCE_ERR_MISSING_INTERACTION = 11,
  DIPCE_ERR_RANK_DEFICIENT = 12,
  DIPCE_ERR_COVERAGE_MISMATCH = 13,
  DIPCE_ERR_LENGTH_MISMATCH = 14,
  DIPCE_ERR_EMPTY_INPUT = 15,
  DIPCE_ERR_INSUFFICIENT_REPLICATIONS = 16,
  DIPCE_ERR_MISSING_AGGREGATE = 17,
  DIPCE_ERR_NUMERIC = 18,
  DIPCE_ERR_NULL_POINTER = 19,
  DIPCE_ERR_UNKNOWN = 20
} dipce_status;

/* Library semantic version, e.g. "0.1.0". Static storage; do not free. */
DIPCE_API const char* dipce_version(void);

/* Message for the most recent failure on this thread ("" if none). The
 * pointer stays valid until the next failing call on the same thread. */
DIPCE_API const char* dipce_last_error(void);

DIPCE_API void dipce_string_free(char* s);

/* ---------- datasets ---------- */

typedef struct dipce_dataset dipce_dataset;

/* spec_json: {"attribute_levels": [...], "context_levels": n,
 *             "n_respondents": n, "tasks_per_respondent": n,
 *             "measurement_error_threshold": p, "coef_low": x,
 *             "coef_high": x, "coef_exclusion_halfwidth": x,
 *             "sparsity_main": s, "sparsity_interaction": s, "seed": n}
 * Draws the ground-truth coefficients and simulates every choice task. */
DIPCE_API dipce_status dipce_simulate(const char* spec_json, dipce_dataset** out);

DIPCE_API dipce_status dipce_dataset_load(const char* tasks_csv_path,
                                const char* truth_json_path,
                                dipce_dataset** out);
/* Truth-only load (no tasks); enough for scoring persisted estimates. */
DIPCE_API dipce_status dipce_truth_load(const char* truth_json_path, dipce_dataset** out);
DIPCE_API dipce_status dipce_dataset_save(const dipce_dataset* ds,
                                const char* tasks_csv_path,
                                const char* truth_json_path);
DIPCE_API dipce_status dipce_dataset_task_count(const dipce_dataset* ds, long* out);
DIPCE_API void dipce_dataset_free(dipce_dataset* ds);

/* ---------- running one method ---------- */

typedef struct dipce_estimates dipce_estimates;

/* method: "dipce", "dipce-per-profile-ablation", "lm", "lm-bon" or "lm-bh".
 * options_json (NULL for defaults): {"seed": n, "holdout_fraction": f,
 *   "alpha": a, "bootstrap": {"n_bootstrap": n, "ci_level": f,
 *   "variant": "P"|"N", "center_offset": f}, "mlp": {"hidden_dims": [...],
 *   "dropout_rates": [...], "learning_rate": f, "batch_size": n,
 *   "max_epochs": n, "patience": n, "validation_fraction": f,
 *   "bn_momentum": f, "bn_epsilon": f}}.
 * out_report_json (optional): accuracies, confusion and fit diagnostics. */
DIPCE_API dipce_status dipce_run_method(const dipce_dataset* ds, const char* method,
                              const char* options_json,
                              dipce_estimates** out_estimates,
                              char** out_report_json);

/* ---------- estimates ---------- */

typedef struct dipce_effect {
  int kind;          /* 0 = main, 1 = interaction */
  int attribute;
  int level;
  int context_level; /* -1 for mains */
  double point;
  double ci_low;
  double ci_high;
  int classification; /* -1, 0, +1 */
} dipce_effect;

DIPCE_API dipce_status dipce_estimates_count(const dipce_estimates* est, long* out);
DIPCE_API dipce_status dipce_estimates_get(const dipce_estimates* est, long index,
                                 dipce_effect* out);
/* truth (optional): adds a truth_class column taken from that dataset. */
DIPCE_API dipce_status dipce_estimates_save(const dipce_estimates* est,
                                  const char* csv_path,
                                  const dipce_dataset* truth);
DIPCE_API dipce_status dipce_estimates_load(const char* csv_path, dipce_estimates** out);
DIPCE_API void dipce_estimates_free(dipce_estimates* est);

/* ---------- scoring ---------- */

typedef enum dipce_effect_scope {
  DIPCE_SCOPE_MAIN = 0,
  DIPCE_SCOPE_INTERACTION = 1,
  DIPCE_SCOPE_ALL = 2
} dipce_effect_scope;

typedef struct dipce_confusion {
  long tp;
  long fp;
  long fn;
  long tn;
  double fpr;          /* valid only when fpr_defined */
  double fnr;          /* valid only when fnr_defined */
  double sign_accuracy;
  int fpr_defined;
  int fnr_defined;
} dipce_confusion;

/* Estimates must cover the truth's effect slots for the scope exactly. */
DIPCE_API dipce_status dipce_score(const dipce_estimates* est, const dipce_dataset* truth,
                         dipce_effect_scope scope, dipce_confusion* out);

/* ---------- experiment grid ---------- */

/* config_json: the grid config document (see configs/ for the schema).
 * output_dir: overrides the config's output_dir when non-NULL.
 * jobs: overrides the config's worker count when > 0.
 * resume: non-zero skips cells already completed under the same config.
 * out_cells_failed (optional): cells that errored and were skipped.
 * out_summary_json (optional): totals, fingerprint and aggregate path. */
DIPCE_API dipce_status dipce_run_grid(const char* config_json, const char* output_dir,
                            int jobs, int resume, long* out_cells_failed,
                            char** out_summary_json);

/* Writes fig1.json / fig3.json / fig4.json next to the aggregated metrics. */
DIPCE_API dipce_status dipce_emit_figures(const char* config_json, const char* output_dir);

#ifdef __cplusplus
}
#endif

#endif /* DIPCE_H */
