/*
 * cdrop C interface.
 *
 * Every entry point returns a cdrop_status. On failure the message of the
 * most recent error on the calling thread is available from
 * cdrop_last_error(); it stays valid until the next failing call on that
 * thread. Handles are opaque and must be released with the matching
 * *_close function. A handle may be used by one thread at a time.
 */
#ifndef CDROP_CDROP_H
#define CDROP_CDROP_H

#include <stddef.h>
#include <stdint.h>

#if defined(CDROP_BUILDING_LIBRARY)
#define CDROP_API __attribute__((visibility("default")))
#else
#define CDROP_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum cdrop_status {
  CDROP_OK = 0,
  CDROP_ERR_INVALID_ARGUMENT = 1,
  CDROP_ERR_CONFIG = 2,
  CDROP_ERR_NO_SOLUTION = 3,
  CDROP_ERR_NON_CONVERGENCE = 4,
  CDROP_ERR_CHECKPOINT_MISMATCH = 5,
  CDROP_ERR_IO = 6,
  CDROP_ERR_WRONG_MODE = 7,
  CDROP_ERR_RUNTIME = 8
} cdrop_status;

typedef enum cdrop_dropout_kind {
  CDROP_DROPOUT_NONE = 0,
  CDROP_DROPOUT_CONTINUUM = 1,
  CDROP_DROPOUT_NAIVE_DRIFT = 2
} cdrop_dropout_kind;

CDROP_API const char* cdrop_version(void);
CDROP_API const char* cdrop_last_error(void);
CDROP_API const char* cdrop_status_name(cdrop_status status);

/* ---- renewal-process calculus ------------------------------------------ */

typedef struct cdrop_rates_report {
  double lambda1;
  double lambda2;
  double p_residual; /* dropout_rate(lambda, T) - p */
  double m_residual; /* expected_renewals(lambda, T) - m */
} cdrop_rates_report;

/* Exact solve, or the large-T asymptotic formulas when approximate != 0. */
CDROP_API cdrop_status cdrop_solve_rates(double p, double m, double T, int approximate,
                                         cdrop_rates_report* out);

CDROP_API cdrop_status cdrop_availability(double lambda1, double lambda2, double t, double* out);
CDROP_API cdrop_status cdrop_dropout_rate(double lambda1, double lambda2, double T, double* out);
CDROP_API cdrop_status cdrop_expected_renewals(double lambda1, double lambda2, double t,
                                               double* out);

typedef struct cdrop_mc_estimate {
  double value;
  double std_error;
  uint64_t n_samples;
} cdrop_mc_estimate;

/* Brute-force estimates; trajectory i uses the stream derived from (seed, i). */
CDROP_API cdrop_status cdrop_mc_availability(double lambda1, double lambda2, double T,
                                             uint64_t n_samples, uint64_t seed,
                                             cdrop_mc_estimate* out);
CDROP_API cdrop_status cdrop_mc_renewals(double lambda1, double lambda2, double T,
                                         uint64_t n_samples, uint64_t seed,
                                         cdrop_mc_estimate* out);

/* ---- experiments -------------------------------------------------------- */

typedef struct cdrop_experiment cdrop_experiment;

typedef struct cdrop_experiment_info {
  size_t d_x;
  size_t d_z;
  size_t n_classes;
  cdrop_dropout_kind dropout;
  int has_rates;
  double lambda1;
  double lambda2;
  uint64_t train_seed;
  char config_hash[17];
} cdrop_experiment_info;

typedef struct cdrop_metrics {
  double accuracy;
  double mean_loss;
  size_t count;
} cdrop_metrics;

typedef struct cdrop_epoch_record {
  size_t epoch;
  double train_loss;
  double val_loss;
  double val_accuracy;
  double wall_ms;
} cdrop_epoch_record;

typedef void (*cdrop_epoch_callback)(const cdrop_epoch_record* record, void* user);

typedef struct cdrop_sweep_row {
  size_t n_mc;
  double mean_accuracy;
  double std_accuracy;
  double median_accuracy;
} cdrop_sweep_row;

/* Loads a JSON experiment document from a file or from memory. */
CDROP_API cdrop_status cdrop_experiment_open(const char* config_path, cdrop_experiment** out);
CDROP_API cdrop_status cdrop_experiment_open_json(const char* config_json, cdrop_experiment** out);
CDROP_API void cdrop_experiment_close(cdrop_experiment* exp);

CDROP_API cdrop_status cdrop_experiment_info_get(const cdrop_experiment* exp,
                                                 cdrop_experiment_info* out);
CDROP_API size_t cdrop_experiment_warning_count(const cdrop_experiment* exp);
CDROP_API const char* cdrop_experiment_warning(const cdrop_experiment* exp, size_t index);

/* Trains, writes checkpoint/history/summary under the output directory and
 * reports test-split metrics. `on_epoch` may be NULL. */
CDROP_API cdrop_status cdrop_experiment_train(cdrop_experiment* exp, cdrop_epoch_callback on_epoch,
                                              void* user, cdrop_metrics* test_out);
CDROP_API cdrop_status cdrop_experiment_load_checkpoint(cdrop_experiment* exp,
                                                        const char* descriptor_path);
CDROP_API cdrop_status cdrop_experiment_evaluate(cdrop_experiment* exp, uint64_t seed,
                                                 cdrop_metrics* out);
CDROP_API cdrop_status cdrop_experiment_calibrate(cdrop_experiment* exp, uint64_t seed,
                                                  double* ece_out, cdrop_metrics* test_out);
/* rows_out must hold `count` entries. */
CDROP_API cdrop_status cdrop_experiment_mc_sweep(cdrop_experiment* exp, const size_t* n_mc_values,
                                                 size_t count, cdrop_sweep_row* rows_out);
/* x holds d_x raw features; probs_out receives n_classes probabilities. */
CDROP_API cdrop_status cdrop_experiment_predict(const cdrop_experiment* exp, const double* x,
                                                size_t d_x, uint64_t seed, double* probs_out,
                                                size_t n_classes);
/* Path of a file inside the experiment's output directory. The returned
 * string is owned by the handle and valid until the next call on it. */
CDROP_API const char* cdrop_experiment_output_path(cdrop_experiment* exp, const char* name);

/* Comparative study (None / NaiveDrift / Continuum). options_json may be
 * NULL for defaults; see README for keys. Writes comparison_*.csv files to
 * the experiment output directory. */
CDROP_API cdrop_status cdrop_compare(const char* config_path, const char* options_json);

/* Writes a synthetic dataset described by a generator document to CSV. */
CDROP_API cdrop_status cdrop_generate_data(const char* generator_json, const char* out_csv_path);

#ifdef __cplusplus
}
#endif

#endif /* CDROP_CDROP_H */
