/* C API of the celu training library.
 *
 * The core is C++; this surface exposes it behind opaque handles and error
 * codes so the CLI and other language bindings can link a stable ABI.
 * Conventions:
 *   - every fallible call returns celu_status; CELU_OK is 0
 *   - strings returned by getters are owned by the handle and stay valid
 *     until the next call on that handle (or celu_last_error() for the
 *     handle-free helpers)
 *   - handles are created with *_new and released with *_free
 */
#ifndef CELU_CELU_H
#define CELU_CELU_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum celu_status {
  CELU_OK = 0,
  CELU_ERR_CONFIG = 1,
  CELU_ERR_SHAPE = 2,
  CELU_ERR_DATA = 3,
  CELU_ERR_PARSE = 4,
  CELU_ERR_RANGE = 5,
  CELU_ERR_LOGIC = 6,
  CELU_ERR_NUMERIC = 7,
  CELU_ERR_METRIC = 8,
  CELU_ERR_PROTOCOL = 9,
  CELU_ERR_SIZE = 10,
  CELU_ERR_CHANNEL_CLOSED = 11,
  CELU_ERR_IO = 12,
  CELU_ERR_INVALID_ARG = 13,
  CELU_ERR_INTERNAL = 14
} celu_status;

const char* celu_version(void);
const char* celu_status_name(celu_status status);

/* Message for the most recent failure of a handle-free function, owned by
 * thread-local storage. */
const char* celu_last_error(void);

/* ---- training runs ----------------------------------------------------- */

typedef struct celu_run celu_run; /* opaque */

celu_run* celu_run_new(void);
void celu_run_free(celu_run* run);

/* Sets one option (same keys as config files: algo, batch_size, local_steps,
 * workset, xi, lr, epochs, seed, dz, data, transport, mode, ...). */
celu_status celu_run_set(celu_run* run, const char* key, const char* value);

/* Loads key=value lines from a config file into the run's options. */
celu_status celu_run_load_config(celu_run* run, const char* path);

/* Executes one training run with the options set so far. */
celu_status celu_run_execute(celu_run* run);

/* Message for the most recent failure on this handle. */
const char* celu_run_last_error(const celu_run* run);

/* Number of metric records the executed run produced; -1 before execute. */
long celu_run_metric_count(const celu_run* run);

/* The full metrics CSV of the executed run. */
const char* celu_run_metrics_csv(celu_run* run);

/* One-line human-readable summary of the executed run. */
const char* celu_run_summary(celu_run* run);

/* Round count of the first metric record meeting the configured target,
 * -1 when no target was set or it was never reached. */
long celu_run_rounds_to_target(const celu_run* run);

/* ---- experiments -------------------------------------------------------- */

/* Runs the (algorithm, R, W, xi, seed) grid described by the config file and
 * writes per-run CSVs plus summary.csv into its `out` directory. */
celu_status celu_experiment_execute(const char* config_path);

/* ---- diagnostics probes -------------------------------------------------- */

/* Convergence-factor calculator:
 * lipschitz^2 * ln(2*dim/delta) / batch * (1 + 1/workset) + sigma^2 * (2 - rho). */
celu_status celu_probe_delta(double lipschitz, double sigma, long dim,
                             double delta, long batch, long workset, double rho,
                             double* out_value);

/* Monte-Carlo check of the gradient-error decomposition on a synthetic
 * dataset; options use the same keys as training (data, batch_size, workset,
 * trials, stale_scale, seed). Outputs may be NULL when not wanted. */
celu_status celu_probe_variance(const celu_run* options, double* out_term_sampling,
                                double* out_term_staleness, double* out_lhs,
                                long* out_violations);

/* Short diagnostic training run; reports the 5th-percentile cosine between
 * estimated and true gradients over all local steps. A run without local
 * steps reports no estimate and returns CELU_ERR_METRIC. */
celu_status celu_probe_rho(const celu_run* options, double* out_rho);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* CELU_CELU_H */
