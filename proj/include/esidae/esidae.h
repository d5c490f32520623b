/* esidae - electromagnetic source imaging workbench.
 *
 * C interface to the esidae shared library. All objects are opaque handles
 * created and destroyed by the library; every fallible call returns an
 * esi_status and leaves a human-readable message in esi_last_error()
 * (thread-local). Matrices are dense row-major float64.
 */

#ifndef ESIDAE_H
#define ESIDAE_H

#include <stdint.h>

#if defined(_WIN32)
#define ESIDAE_API __declspec(dllexport)
#else
#define ESIDAE_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum esi_status {
  ESI_OK = 0,
  ESI_ERR_INVALID_ARGUMENT,
  ESI_ERR_IO,
  ESI_ERR_FORMAT,
  ESI_ERR_SHAPE,
  ESI_ERR_MESH_DISCONNECTED,
  ESI_ERR_DEGENERATE_ELEMENT,
  ESI_ERR_AREA_UNREACHABLE,
  ESI_ERR_SINGULAR_GEOMETRY,
  ESI_ERR_INVALID_LEADFIELD,
  ESI_ERR_ZERO_SIGNAL,
  ESI_ERR_RANK_DEFICIENT,
  ESI_ERR_PLACEMENT_FAILURE,
  ESI_ERR_BATCH_TOO_SMALL,
  ESI_ERR_NON_FINITE_GRADIENT,
  ESI_ERR_ARCHITECTURE,
  ESI_ERR_DIVERGENCE,
  ESI_ERR_NUMERICAL_FAILURE,
  ESI_ERR_UNDEFINED_METRIC,
  ESI_ERR_DEGENERATE_INPUT,
  ESI_ERR_ZERO_REFERENCE,
  ESI_ERR_ZERO_ESTIMATE,
  ESI_ERR_NO_DETECTION,
  ESI_ERR_CONFIG,
  ESI_ERR_EMPTY_REPORT,
  ESI_ERR_UNKNOWN
} esi_status;

typedef struct esi_mesh esi_mesh;
typedef struct esi_leadfield esi_leadfield;
typedef struct esi_matrix esi_matrix;
typedef struct esi_network esi_network;

/* Name of a status code, e.g. "ShapeError". */
ESIDAE_API const char* esi_status_name(esi_status status);
/* Message from the most recent failing call on this thread ("" if none). */
ESIDAE_API const char* esi_last_error(void);
ESIDAE_API const char* esi_version(void);

/* ---- mesh ---------------------------------------------------------- */

/* Plain-text mesh format: "V E" header, V lines "x y z", E lines "i j k". */
ESIDAE_API esi_status esi_mesh_load(const char* path, esi_mesh** out);
/* kind: "tetra" | "octa" | "icosa"; elements = base_faces * 4^subdivisions. */
ESIDAE_API esi_status esi_mesh_generate(const char* kind, int subdivisions, double radius_cm,
                                        esi_mesh** out);
ESIDAE_API esi_status esi_mesh_save(const esi_mesh* mesh, const char* path);
ESIDAE_API void esi_mesh_free(esi_mesh* mesh);
ESIDAE_API esi_status esi_mesh_info(const esi_mesh* mesh, uint32_t* vertex_count,
                                    uint32_t* element_count, double* total_area_cm2);
/* Grows a connected patch from seed until target_area_cm2 is reached.
 * Writes up to capacity element indices; element_count receives the patch
 * size and area_cm2 the grown area. */
ESIDAE_API esi_status esi_mesh_grow_patch(const esi_mesh* mesh, uint32_t seed,
                                          double target_area_cm2, uint32_t* elements,
                                          uint32_t capacity, uint32_t* element_count,
                                          double* area_cm2);

/* ---- matrices ------------------------------------------------------ */

ESIDAE_API esi_status esi_matrix_create(uint32_t rows, uint32_t cols, const double* row_major,
                                        esi_matrix** out);
ESIDAE_API esi_status esi_matrix_dims(const esi_matrix* m, uint32_t* rows, uint32_t* cols);
/* Copies row-major data into caller storage of rows*cols doubles. */
ESIDAE_API esi_status esi_matrix_copy_data(const esi_matrix* m, double* out);
ESIDAE_API void esi_matrix_free(esi_matrix* m);
/* "ESIR" recording files (magic, u32 rows, u32 cols, float64 payload). */
ESIDAE_API esi_status esi_matrix_load_recording(const char* path, esi_matrix** out);
ESIDAE_API esi_status esi_matrix_save_recording(const esi_matrix* m, const char* path);

/* ---- forward model ------------------------------------------------- */

/* electrodes_xyz: 3 doubles per electrode. */
ESIDAE_API esi_status esi_leadfield_synth(const esi_mesh* mesh, const double* electrodes_xyz,
                                          uint32_t electrode_count, esi_leadfield** out);
/* "ESIL" files (magic, u32 version, u32 Nc, u32 Ns, float64 payload). */
ESIDAE_API esi_status esi_leadfield_load(const char* path, esi_leadfield** out);
ESIDAE_API esi_status esi_leadfield_save(const esi_leadfield* lf, const char* path);
ESIDAE_API esi_status esi_leadfield_dims(const esi_leadfield* lf, uint32_t* channels,
                                         uint32_t* sources);
ESIDAE_API void esi_leadfield_free(esi_leadfield* lf);

/* X = L * S */
ESIDAE_API esi_status esi_forward_project(const esi_leadfield* lf, const esi_matrix* s,
                                          esi_matrix** x_out);
/* X + white Gaussian noise rescaled to the exact Frobenius SNR. */
ESIDAE_API esi_status esi_add_noise(const esi_matrix* x, double snr_db, uint64_t seed,
                                    esi_matrix** out);

/* ---- classical solvers --------------------------------------------- */

ESIDAE_API esi_status esi_solve_wmne(const esi_leadfield* lf, const esi_matrix* x, double lambda,
                                     esi_matrix** s_out);
ESIDAE_API esi_status esi_solve_loreta(const esi_leadfield* lf, const esi_mesh* mesh,
                                       const esi_matrix* x, double lambda, esi_matrix** s_out);
ESIDAE_API esi_status esi_solve_focuss(const esi_leadfield* lf, const esi_matrix* x, double lambda,
                                       uint32_t max_iter, double tol, esi_matrix** s_out,
                                       uint32_t* iterations, int* converged);

/* ---- trained network ------------------------------------------------ */

/* "ESIW" checkpoint files. */
ESIDAE_API esi_status esi_network_load(const char* path, esi_network** out);
ESIDAE_API void esi_network_free(esi_network* net);
ESIDAE_API esi_status esi_network_dims(const esi_network* net, uint32_t* channels,
                                       uint32_t* sources, uint32_t* time_samples);
/* S* = decoder(encoder(X)), noise block bypassed, BN in inference mode. */
ESIDAE_API esi_status esi_network_estimate(const esi_network* net, const esi_matrix* x,
                                           esi_matrix** s_out);
/* X_re = L * S* using the network's fixed forward block. */
ESIDAE_API esi_status esi_network_denoise(const esi_network* net, const esi_matrix* x_noisy,
                                          esi_matrix** x_out);

/* ---- metrics -------------------------------------------------------- */

ESIDAE_API esi_status esi_metric_auc(const double* scores, const int32_t* labels, uint32_t count,
                                     double* out);
ESIDAE_API esi_status esi_metric_rmse_rel(const esi_matrix* truth, const esi_matrix* estimate,
                                          double* out);
ESIDAE_API esi_status esi_metric_otsu_threshold(const double* scores, uint32_t count, double* out);

/* ---- config-driven commands (the CLI surface) ----------------------- */

/* Writes an "ESID" dataset per the [problem]/[synthesis] config sections.
 * out_path overrides synthesis.out when non-NULL. */
ESIDAE_API esi_status esi_cmd_synth(const char* config_path, const char* out_path);
/* Trains per the [training] section; writes the checkpoint to out_path and
 * an epoch history CSV beside it. resume_path (optional) continues from an
 * existing checkpoint. */
ESIDAE_API esi_status esi_cmd_train(const char* config_path, const char* dataset_path,
                                    const char* out_path, const char* resume_path);
/* Reads an ESIR recording, writes the source estimate (ESIR container,
 * Ns x T) plus per-time activation maps beside it. */
ESIDAE_API esi_status esi_cmd_estimate(const char* checkpoint_path, const char* input_path,
                                       const char* out_path);
/* scenario: "snr" | "extent" | "pattern" | "correlation". Writes the detail
 * CSV to out_path plus .summary.csv / .timing.csv siblings. */
ESIDAE_API esi_status esi_cmd_bench(const char* config_path, const char* scenario,
                                    const char* out_path);
/* Summarizes a detail CSV into per-metric tables (and SVG plots when
 * emit_plots != 0). history_paths: optional comma-separated training
 * history CSVs for the timing table; may be NULL. */
ESIDAE_API esi_status esi_cmd_report(const char* report_path, const char* out_dir, int emit_plots,
                                     const char* history_paths);

#ifdef __cplusplus
}
#endif

#endif /* ESIDAE_H */
