#ifndef PROBEFORGE_PROBEFORGE_H
#define PROBEFORGE_PROBEFORGE_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define PF_API __declspec(dllexport)
#else
#define PF_API __attribute__((visibility("default")))
#endif

typedef enum pf_status {
  PF_OK = 0,
  PF_ERR_ARGUMENT = 1, /* bad parameter or usage */
  PF_ERR_DATA = 2,     /* missing/corrupt/invalid input, incompatible inputs, write failure */
  PF_ERR_INTERNAL = 3
} pf_status;

typedef struct pf_bundle pf_bundle;
typedef struct pf_probe pf_probe;

/* Message of the last failed call on this thread; "" if none. Owned by the library. */
PF_API const char* pf_last_error(void);
/* Frees strings returned through char** out-parameters. */
PF_API void pf_string_free(char* s);
PF_API const char* pf_version(void);

/* ---- datasets ---- */

typedef struct pf_bundle_info {
  size_t n_samples;
  size_t hidden_dim;
  size_t n_layers;
  int task_type;  /* 0 multiple_choice, 1 short_form */
  int label_kind; /* 0 exact_match, 1 rouge_l */
  int has_labels; /* labels.f32 present or labels computed */
} pf_bundle_info;

PF_API pf_status pf_bundle_load(const char* dir, pf_bundle** out);
PF_API void pf_bundle_free(pf_bundle* b);
PF_API pf_status pf_bundle_get_info(const pf_bundle* b, pf_bundle_info* out);
/* Layer indices; n must be >= n_layers. */
PF_API pf_status pf_bundle_layers(const pf_bundle* b, int* out, size_t n);
/* Name, task type, sample count, dims, layers on one line. */
PF_API pf_status pf_bundle_summary(const pf_bundle* b, char** out);
/* Recomputes labels from the answers (exact match or Rouge-L) and attaches them. */
PF_API pf_status pf_bundle_compute_labels(pf_bundle* b);
/* Copies the attached labels, computing them first if absent; n must equal n_samples. */
PF_API pf_status pf_bundle_labels(pf_bundle* b, double* out, size_t n);
PF_API pf_status pf_bundle_write_labels(const pf_bundle* b, const char* file);

/* ---- features ---- */

typedef struct pf_assembly {
  const char* mode; /* "one_layer", "selected", "multi_layer" */
  int layer;
  const int* layers; /* multi_layer only */
  size_t n_layers;
  size_t k;
  int include_agnostic;
} pf_assembly;

typedef struct pf_split_spec {
  uint64_t seed;
  double train_fraction;
} pf_split_spec;

/* 0 train rows, 1 test rows, 2 all rows */
enum { PF_ROWS_TRAIN = 0, PF_ROWS_TEST = 1, PF_ROWS_ALL = 2 };

PF_API void pf_assembly_default(pf_assembly* a);
PF_API void pf_split_default(pf_split_spec* s);

/* Assembled matrix as CSV (sample_id, feature_0.., label). Selection is fitted on the train split. */
PF_API pf_status pf_features_csv(pf_bundle* b, const pf_assembly* a, const pf_split_spec* s,
                                 int rows, char** out);
/* Top-k |Pearson r| columns of one layer against the train-split labels, as selection text. */
PF_API pf_status pf_selection_text(pf_bundle* b, int layer, size_t k, const pf_split_spec* s,
                                   char** out);

/* ---- probes ---- */

typedef struct pf_forest_params {
  size_t n_trees;
  size_t min_samples_leaf;
  size_t max_depth; /* 0 = unlimited */
  int max_features_all; /* 0 sqrt(p), 1 all */
  uint64_t seed;
} pf_forest_params;

typedef struct pf_eval {
  double acc;
  double auroc;
  double ece;
  size_t n;
} pf_eval;

PF_API void pf_forest_params_default(pf_forest_params* p);

/* Trains on the concatenated train splits of the given bundles. */
PF_API pf_status pf_probe_train(pf_bundle* const* bundles, size_t n_bundles, const pf_assembly* a,
                                const pf_forest_params* p, const pf_split_spec* s, size_t jobs,
                                pf_probe** out);
PF_API pf_status pf_probe_save(const pf_probe* p, const char* file);
PF_API pf_status pf_probe_load(const char* file, pf_probe** out);
PF_API void pf_probe_free(pf_probe* p);
PF_API pf_status pf_probe_summary(const pf_probe* p, char** out);
PF_API pf_status pf_probe_evaluate(const pf_probe* p, pf_bundle* b, const pf_split_spec* s, int rows,
                                   double threshold, size_t bins, size_t jobs, pf_eval* out);
/* sample_id,score,label per row. */
PF_API pf_status pf_probe_scores_csv(const pf_probe* p, pf_bundle* b, const pf_split_spec* s,
                                     int rows, size_t jobs, char** out);
/* Mean |SHAP| table over the selected rows; max_rows 0 = no limit. */
PF_API pf_status pf_probe_shap_csv(const pf_probe* p, pf_bundle* b, const pf_split_spec* s, int rows,
                                   size_t max_rows, size_t jobs, char** out);

/* ---- analysis ---- */

/* Two-component PCA of one layer over all samples of the bundles. explained may be NULL. */
PF_API pf_status pf_pca_csv(pf_bundle* const* bundles, size_t n_bundles, int layer, char** out,
                            double explained[2]);

typedef struct pf_synth_params {
  size_t n_tasks;
  size_t n_per_task;
  size_t hidden_dim;
  const int* layers;
  size_t n_layers;
  int task_type; /* 0 multiple_choice, 1 short_form */
  double beta;
  double gamma;
  double noise;
  uint64_t seed;
  const char* prefix;
} pf_synth_params;

PF_API void pf_synth_default(pf_synth_params* p);
/* Writes <out_dir>/<prefix><t> for every task. */
PF_API pf_status pf_synth_generate(const pf_synth_params* p, const char* out_dir);

/* ---- experiments ---- */

/* Values that replace the plan's when the matching has_ flag is set. */
typedef struct pf_plan_overrides {
  int has_seed;
  uint64_t seed;
  int has_threshold;
  double threshold;
  int has_bins;
  size_t bins;
  int has_trees;
  size_t trees;
  int has_k;
  size_t k;
} pf_plan_overrides;

/* Runs a plan file and writes the report. out_dir NULL uses the plan's output_dir.
   summary (may be NULL) receives a one-line count of results and errors. */
PF_API pf_status pf_run_plan_file(const char* plan_file, const char* out_dir,
                                  const pf_plan_overrides* overrides, size_t jobs, char** summary);
/* Re-checks a written report; returns the summary table. */
PF_API pf_status pf_report_check(const char* out_dir, char** out);

#ifdef __cplusplus
}
#endif

#endif
