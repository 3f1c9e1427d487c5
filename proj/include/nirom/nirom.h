#ifndef NIROM_NIROM_H
#define NIROM_NIROM_H

#include <stddef.h>
#include <stdint.h>

#if defined(NIROM_BUILDING_LIBRARY)
#define NIROM_API __attribute__((visibility("default")))
#else
#define NIROM_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Every call returns a status; on failure nirom_last_error() holds a message
 * for the calling thread. Strings returned through char** are owned by the
 * caller and released with nirom_string_free(). */
typedef enum nirom_status {
  NIROM_OK = 0,
  NIROM_E_IO = 1,
  NIROM_E_CORRUPT_HEADER = 2,
  NIROM_E_DIMENSION_MISMATCH = 3,
  NIROM_E_NON_MONOTONE_TIMES = 4,
  NIROM_E_NON_FINITE = 5,
  NIROM_E_EMPTY_SET = 6,
  NIROM_E_INVALID_ARGUMENT = 7,
  NIROM_E_DEGENERATE = 8,
  NIROM_E_OUT_OF_RANGE = 9,
  NIROM_E_SINGULAR = 10,
  NIROM_E_NOT_CONVERGED = 11,
  NIROM_E_STEP_UNDERFLOW = 12,
  NIROM_E_MAX_STEPS = 13,
  NIROM_E_STALE_CACHE = 14,
  NIROM_E_INCOMPATIBLE = 15,
  NIROM_E_DIVERGED = 16,
  NIROM_E_CONFIG = 17,
  NIROM_E_INTERNAL = 18
} nirom_status;

typedef struct nirom_snapshots nirom_snapshots;
typedef struct nirom_pod nirom_pod;
typedef struct nirom_ae nirom_ae;
typedef struct nirom_node nirom_node;
typedef struct nirom_rbf nirom_rbf;
typedef struct nirom_dmd nirom_dmd;

NIROM_API const char* nirom_version(void);
NIROM_API const char* nirom_status_name(nirom_status status);
NIROM_API const char* nirom_last_error(void);
/* Stage of the last failed pipeline call ("" when not a pipeline error). */
NIROM_API const char* nirom_last_error_stage(void);
NIROM_API void nirom_string_free(char* text);

/* Kind of a stored artifact: "snapshots", "latent", "basis", "autoencoder",
 * "node", "rbf", "dmd" or "prediction". */
NIROM_API nirom_status nirom_artifact_kind(const char* path, char** kind);

/* ---- snapshot sets (also used for latent trajectories) ---- */

/* `data` is rows x cols, column-major. `fields_json` may be NULL or a JSON
 * array of {"name","offset","length"}. */
NIROM_API nirom_status nirom_snapshots_create(const double* data, size_t rows, size_t cols, const double* times,
                                              const char* fields_json, nirom_snapshots** out);
NIROM_API nirom_status nirom_snapshots_load(const char* path, nirom_snapshots** out);
NIROM_API nirom_status nirom_snapshots_save(const nirom_snapshots* set, const char* path);
/* Generator spec as JSON; `truth_json` (nullable) receives the known structure. */
NIROM_API nirom_status nirom_snapshots_generate(const char* spec_json, nirom_snapshots** out, char** truth_json);
/* Same generator sampled at arbitrary times. */
NIROM_API nirom_status nirom_snapshots_generate_at(const char* spec_json, const double* times, size_t count,
                                                   nirom_snapshots** out);
NIROM_API size_t nirom_snapshots_rows(const nirom_snapshots* set);
NIROM_API size_t nirom_snapshots_cols(const nirom_snapshots* set);
NIROM_API nirom_status nirom_snapshots_copy_data(const nirom_snapshots* set, double* out, size_t capacity);
NIROM_API nirom_status nirom_snapshots_copy_times(const nirom_snapshots* set, double* out, size_t capacity);
/* {"rows","cols","fields":[...],"mesh_id"} */
NIROM_API nirom_status nirom_snapshots_info(const nirom_snapshots* set, char** json);
/* Columns with start <= t <= end. */
NIROM_API nirom_status nirom_snapshots_window(const nirom_snapshots* set, double start, double end,
                                              nirom_snapshots** out);
/* Rows of one named field, as a single-field set. */
NIROM_API nirom_status nirom_snapshots_field(const nirom_snapshots* set, const char* name, nirom_snapshots** out);
/* Min-max scaling onto `interval` ("[0,1]" or "[-1,1]"); the fitted
 * parameters come back as JSON for nirom_snapshots_unscale(). */
NIROM_API nirom_status nirom_snapshots_scale(const nirom_snapshots* set, const char* interval, int per_row,
                                             nirom_snapshots** out, char** params_json);
NIROM_API nirom_status nirom_snapshots_unscale(const nirom_snapshots* set, const char* params_json,
                                               nirom_snapshots** out);
NIROM_API void nirom_snapshots_free(nirom_snapshots* set);

/* ---- POD ---- */

/* options: {"energy": tau} or {"modes": m}, plus "per_field" and "center". */
NIROM_API nirom_status nirom_pod_compute(const nirom_snapshots* set, const char* options_json, nirom_pod** out);
NIROM_API nirom_status nirom_pod_load(const char* path, nirom_pod** out);
NIROM_API nirom_status nirom_pod_save(const nirom_pod* pod, const char* path);
NIROM_API size_t nirom_pod_modes(const nirom_pod* pod);
/* Singular values of the first block; `count` receives the full length. */
NIROM_API nirom_status nirom_pod_sigma(const nirom_pod* pod, double* out, size_t capacity, size_t* count);
NIROM_API nirom_status nirom_pod_project(const nirom_pod* pod, const nirom_snapshots* set, nirom_snapshots** latent);
NIROM_API nirom_status nirom_pod_reconstruct(const nirom_pod* pod, const nirom_snapshots* latent,
                                             nirom_snapshots** out);
NIROM_API void nirom_pod_free(nirom_pod* pod);

/* ---- autoencoder ---- */

NIROM_API nirom_status nirom_ae_create(const char* spec_json, uint64_t seed, nirom_ae** out);
/* `history_csv` and `final_loss` are nullable. */
NIROM_API nirom_status nirom_ae_train(nirom_ae* ae, const nirom_snapshots* data, const char* train_json,
                                      char** history_csv, double* final_loss);
NIROM_API nirom_status nirom_ae_encode(const nirom_ae* ae, const nirom_snapshots* data, nirom_snapshots** latent);
NIROM_API nirom_status nirom_ae_decode(const nirom_ae* ae, const nirom_snapshots* latent, nirom_snapshots** out);
NIROM_API nirom_status nirom_ae_load(const char* path, nirom_ae** out);
NIROM_API nirom_status nirom_ae_save(const nirom_ae* ae, const char* path);
NIROM_API void nirom_ae_free(nirom_ae* ae);

/* ---- neural ODE ---- */

NIROM_API nirom_status nirom_node_create(const char* architecture_json, size_t latent_dim, const char* solver_json,
                                         uint64_t seed, nirom_node** out);
/* Fits the time normalization (and latent scaling when train_json has
 * "latent_scaling": true) to `latent`, then trains. */
NIROM_API nirom_status nirom_node_train(nirom_node* node, const nirom_snapshots* latent, const char* train_json,
                                        char** history_csv, double* final_loss);
/* Latent state `z0` at physical time t_start, solved to every entry of
 * `times`. `solver_json` may be NULL to use the model's solver. */
NIROM_API nirom_status nirom_node_predict(const nirom_node* node, const double* z0, size_t dim, double t_start,
                                          const double* times, size_t count, const char* solver_json,
                                          nirom_snapshots** out);
NIROM_API nirom_status nirom_node_load(const char* path, nirom_node** out);
NIROM_API nirom_status nirom_node_save(const nirom_node* node, const char* path);
NIROM_API void nirom_node_free(nirom_node* node);

/* ---- RBF ---- */

/* config: {"kernel","shape","lambda"} (all optional). */
NIROM_API nirom_status nirom_rbf_fit(const nirom_snapshots* latent, const char* config_json, nirom_rbf** out);
NIROM_API nirom_status nirom_rbf_predict(const nirom_rbf* rbf, const double* z0, size_t dim, double t_start,
                                         size_t steps, size_t substeps, nirom_snapshots** out);
/* Training time step the model was fitted on. */
NIROM_API double nirom_rbf_step(const nirom_rbf* rbf);
NIROM_API nirom_status nirom_rbf_load(const char* path, nirom_rbf** out);
NIROM_API nirom_status nirom_rbf_save(const nirom_rbf* rbf, const char* path);
NIROM_API void nirom_rbf_free(nirom_rbf* rbf);

/* ---- DMD ---- */

NIROM_API nirom_status nirom_dmd_fit(const nirom_snapshots* set, size_t rank, nirom_dmd** out);
NIROM_API nirom_status nirom_dmd_predict(const nirom_dmd* dmd, const double* times, size_t count,
                                         nirom_snapshots** out);
NIROM_API nirom_status nirom_dmd_spectrum_csv(const nirom_dmd* dmd, char** csv);
NIROM_API nirom_status nirom_dmd_load(const char* path, nirom_dmd** out);
NIROM_API nirom_status nirom_dmd_save(const nirom_dmd* dmd, const char* path);
NIROM_API void nirom_dmd_free(nirom_dmd* dmd);

/* ---- metrics ---- */

/* Error CSV (time,field,rmse,rel_err) and, when nullable `mse` is given, the
 * entrywise mean square error. */
NIROM_API nirom_status nirom_evaluate(const nirom_snapshots* truth, const nirom_snapshots* prediction, char** csv,
                                     double* mse);

/* ---- pipeline ---- */

/* Runs a pipeline config; `summary_json` (nullable) receives the summary. */
NIROM_API nirom_status nirom_run_file(const char* config_path, char** summary_json);
NIROM_API nirom_status nirom_run_json(const char* config_json, const char* base_dir, char** summary_json);
/* Runs the configs on up to `workers` threads (0: NIROM_THREADS or all
 * cores) and returns the merged error CSV. */
NIROM_API nirom_status nirom_compare_files(const char* const* config_paths, size_t count, unsigned workers,
                                           char** csv);

#ifdef __cplusplus
}
#endif

#endif
