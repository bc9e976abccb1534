#ifndef QKFMAG_QKFMAG_H
#define QKFMAG_QKFMAG_H

/* C interface to the qkfmag library. Every call that can fail returns a
 * qkf_status; the message for the most recent failure on the calling thread
 * is available from qkf_last_error(). Handles are opaque and owned by the
 * caller once returned; release them with the matching _free function. */

#include <stddef.h>
#include <stdint.h>

#if defined(QKFMAG_BUILDING_LIBRARY)
#define QKF_API __attribute__((visibility("default")))
#else
#define QKF_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum qkf_status {
  QKF_OK = 0,
  QKF_ERR_INVALID_ARGUMENT = 1, /* null handle, bad enum name, bad index */
  QKF_ERR_CONFIG = 2,           /* config syntax or field error */
  QKF_ERR_PARAM = 3,            /* physical parameter invariant violated */
  QKF_ERR_NUMERIC = 4,          /* numerical invariant lost */
  QKF_ERR_IO = 5,
  QKF_ERR_INTERNAL = 6
} qkf_status;

typedef struct qkf_config qkf_config;
typedef struct qkf_report qkf_report;
typedef struct qkf_trajectory qkf_trajectory;

/* Units: s, G, G^2, s^-1; gamma angular (rad s^-1 G^-1). */
typedef struct qkf_physical_params {
  double j_total;
  double gamma;
  double b_true;
  double meas_strength;
  double efficiency;
  double prior_b_variance; /* ignored when prior_infinite != 0 */
  int prior_infinite;
  double t_total;
} qkf_physical_params;

QKF_API const char* qkf_version(void);
QKF_API const char* qkf_status_name(qkf_status status);
/* Never null; empty when the last call on this thread succeeded. */
QKF_API const char* qkf_last_error(void);

/* --- configuration ---------------------------------------------------- */

QKF_API qkf_status qkf_config_parse(const char* json_text, qkf_config** out);
QKF_API qkf_status qkf_config_load(const char* path, qkf_config** out);
QKF_API void qkf_config_free(qkf_config* cfg);

QKF_API qkf_status qkf_config_set_seed(qkf_config* cfg, uint64_t seed);
/* Applies to both the ensemble and the scaling study. */
QKF_API qkf_status qkf_config_set_n_traj(qkf_config* cfg, uint64_t n_traj);
/* "angular" or "cycles" */
QKF_API qkf_status qkf_config_set_gamma_convention(qkf_config* cfg, const char* name);
/* 0 selects the hardware concurrency. */
QKF_API qkf_status qkf_config_set_threads(qkf_config* cfg, unsigned threads);
QKF_API qkf_status qkf_config_params(const qkf_config* cfg, qkf_physical_params* out);
/* Pointer stays valid until the config is modified or freed. */
QKF_API const char* qkf_config_resolved_json(const qkf_config* cfg);

/* --- commands ---------------------------------------------------------- */

/* command: "simulate", "ensemble", "scaling" or "oracle-check". A run whose
 * checks fail still returns QKF_OK; inspect qkf_report_passed. */
QKF_API qkf_status qkf_run(const qkf_config* cfg, const char* command, const char* out_dir,
                           qkf_report** out);
QKF_API int qkf_report_passed(const qkf_report* report);
QKF_API size_t qkf_report_check_count(const qkf_report* report);
QKF_API const char* qkf_report_check_name(const qkf_report* report, size_t i);
QKF_API int qkf_report_check_passed(const qkf_report* report, size_t i);
QKF_API const char* qkf_report_check_detail(const qkf_report* report, size_t i);
QKF_API size_t qkf_report_file_count(const qkf_report* report);
QKF_API const char* qkf_report_file(const qkf_report* report, size_t i);
QKF_API const char* qkf_report_summary_json(const qkf_report* report);
QKF_API void qkf_report_free(qkf_report* report);

/* --- numerics ----------------------------------------------------------- */

QKF_API qkf_status qkf_validate_params(const qkf_physical_params* p);
QKF_API qkf_status qkf_conditional_variance(const qkf_physical_params* p, double t, double* out);
/* Closed-form infinite-prior threshold, G. */
QKF_API qkf_status qkf_riccati_analytic(const qkf_physical_params* p, double t, double* out);
/* Riccati V22 (G^2) at t from the configured prior, by numerical integration. */
QKF_API qkf_status qkf_riccati_v22(const qkf_physical_params* p, double t, double* out);
QKF_API qkf_status qkf_detection_threshold_asymptotic(const qkf_physical_params* p, double t,
                                                      double* out);
QKF_API qkf_status qkf_shotnoise_limit(const qkf_physical_params* p, double t, double* out);

/* --- single trajectories ---------------------------------------------- */

/* dt_max <= 0 selects 1e-3 / M. zero_noise != 0 forces every dW to 0. */
QKF_API qkf_status qkf_simulate(const qkf_physical_params* p, double dt_max, uint64_t seed,
                                uint64_t stream, int zero_noise, qkf_trajectory** out);
/* Number of grid points (steps + 1). */
QKF_API size_t qkf_trajectory_size(const qkf_trajectory* traj);
QKF_API qkf_status qkf_trajectory_state(const qkf_trajectory* traj, size_t i, double* t,
                                        double* mean_jz, double* var_jz);
/* Record increment over step i, i < size - 1. */
QKF_API qkf_status qkf_trajectory_record(const qkf_trajectory* traj, size_t i, double* d_xi,
                                         double* y);
/* Filter field estimate and variance after consuming steps [0, i). */
QKF_API qkf_status qkf_trajectory_estimate(const qkf_trajectory* traj, size_t i, double* b_tilde,
                                           double* b_variance);
QKF_API void qkf_trajectory_free(qkf_trajectory* traj);

#ifdef __cplusplus
}
#endif

#endif
