#ifndef LUMPCIRC_H
#define LUMPCIRC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Number of entries in a state vector.
 */
#define LC_STATE_LEN 12

/**
 * Status codes; values 0 to 7 match the CLI exit codes.
 */
typedef enum LcStatus {
  LC_STATUS_OK = 0,
  LC_STATUS_VERIFY_FAILED = 1,
  /**
   * Null pointer, bad UTF-8 or out-of-range index.
   */
  LC_STATUS_INVALID_ARGUMENT = 2,
  LC_STATUS_CONFIG = 3,
  LC_STATUS_INTEGRATION = 4,
  LC_STATUS_COUPLING = 5,
  LC_STATUS_IO = 6,
  LC_STATUS_ANALYSIS = 7,
  LC_STATUS_PANIC = 8,
} LcStatus;

/**
 * Parsed run configuration.
 */
typedef struct LcConfig LcConfig;

/**
 * Completed simulation together with the configuration that produced it.
 */
typedef struct LcRun LcRun;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread. Valid until the next call.
 */
const char *lc_last_error(void);

/**
 * # Safety
 * `s` must come from this library or be null.
 */
void lc_string_free(char *s);

/**
 * # Safety
 * `out` must be writable.
 */
enum LcStatus lc_config_default(struct LcConfig **out);

/**
 * Parses configuration text.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be writable.
 */
enum LcStatus lc_config_parse(const char *text, struct LcConfig **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum LcStatus lc_config_load(const char *path, struct LcConfig **out);

/**
 * Overrides the number of simulated and analyzed beats.
 *
 * # Safety
 * `cfg` must be a live handle.
 */
enum LcStatus lc_config_set_beats(struct LcConfig *cfg, size_t beats, size_t analyze_beats);

/**
 * Sets the output directory used by `lc_run_write`.
 *
 * # Safety
 * `cfg` must be a live handle; `dir` a NUL-terminated string.
 */
enum LcStatus lc_config_set_output_dir(struct LcConfig *cfg, const char *dir);

/**
 * # Safety
 * `cfg` must come from `lc_config_*` or be null.
 */
void lc_config_free(struct LcConfig *cfg);

/**
 * Runs the configured model (monolithic or coupled).
 *
 * # Safety
 * `cfg` must be a live handle; `out` must be writable.
 */
enum LcStatus lc_simulate(const struct LcConfig *cfg, struct LcRun **out);

/**
 * # Safety
 * `run` must be a live handle.
 */
size_t lc_run_sample_count(const struct LcRun *run);

/**
 * Copies sample `index`: its time into `t` and the state into `state[0..LC_STATE_LEN]`.
 *
 * # Safety
 * `run` must be a live handle; `t` writable; `state` must hold `LC_STATE_LEN` doubles.
 */
enum LcStatus lc_run_sample(const struct LcRun *run, size_t index, double *t, double *state);

/**
 * Energy report as JSON.
 *
 * # Safety
 * `run` must be a live handle; `out` writable.
 */
enum LcStatus lc_run_report_json(const struct LcRun *run, char **out);

/**
 * Writes the time series and report into the configured output directory.
 *
 * # Safety
 * `run` must be a live handle.
 */
enum LcStatus lc_run_write(const struct LcRun *run);

/**
 * # Safety
 * `run` must come from `lc_simulate` or be null.
 */
void lc_run_free(struct LcRun *run);

/**
 * Runs the audit suite. Returns `LC_STATUS_VERIFY_FAILED` if any check fails.
 * `checks_json` may be null; otherwise it receives the check list as JSON.
 *
 * # Safety
 * `cfg` must be a live handle; `checks_json` null or writable.
 */
enum LcStatus lc_verify(const struct LcConfig *cfg, char **checks_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LUMPCIRC_H */
