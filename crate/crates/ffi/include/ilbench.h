#ifndef ILBENCH_H
#define ILBENCH_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum IlbStatus {
  ILB_STATUS_OK = 0,
  ILB_STATUS_NULL_POINTER = 1,
  ILB_STATUS_INVALID_UTF8 = 2,
  ILB_STATUS_CONFIG = 3,
  ILB_STATUS_INPUT = 4,
  ILB_STATUS_EMPTY_MODEL = 5,
  ILB_STATUS_REALIZABILITY = 6,
  ILB_STATUS_SIZE = 7,
  ILB_STATUS_VALIDATION = 8,
  ILB_STATUS_IO = 9,
  ILB_STATUS_JSON = 10,
  ILB_STATUS_PANIC = 11,
} IlbStatus;

typedef struct IlbExperiment IlbExperiment;

/**
 * An MDP, optionally with its expert policy.
 */
typedef struct IlbMdp IlbMdp;

typedef struct IlbPolicy IlbPolicy;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread; empty if none.
 * The pointer stays valid until the next failing call on this thread.
 */
const char *ilb_last_error(void);

const char *ilb_version(void);

/**
 * Builds a cliff MDP from a preset name (`figure2` or `theorem`).
 *
 * # Safety
 * `preset` must be a NUL-terminated string and `out` a valid pointer.
 */
enum IlbStatus ilb_mdp_cliff(const char *preset, struct IlbMdp **out);

/**
 * Parses an MDP bundle (`{"mdp": ..., "expert": ...}`) from JSON text.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum IlbStatus ilb_mdp_from_json(const char *json, struct IlbMdp **out);

/**
 * # Safety
 * `mdp` must be a live handle; the output pointers may be null.
 */
enum IlbStatus ilb_mdp_dims(const struct IlbMdp *mdp,
                            size_t *num_states,
                            size_t *num_actions,
                            size_t *horizon);

/**
 * Copies the bundled expert policy into a new policy handle.
 *
 * # Safety
 * `mdp` must be a live handle and `out` a valid pointer.
 */
enum IlbStatus ilb_mdp_expert(const struct IlbMdp *mdp, struct IlbPolicy **out);

/**
 * # Safety
 * `mdp` must come from this library and not be used afterwards.
 */
void ilb_mdp_free(struct IlbMdp *mdp);

/**
 * Parses a policy tagged by `"kind"` from JSON text.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum IlbStatus ilb_policy_from_json(const char *json, struct IlbPolicy **out);

/**
 * # Safety
 * `policy` must come from this library and not be used afterwards.
 */
void ilb_policy_free(struct IlbPolicy *policy);

/**
 * Exact expected return of `policy` in `mdp`.
 *
 * # Safety
 * Both handles must be live and `out` a valid pointer.
 */
enum IlbStatus ilb_exact_return(const struct IlbMdp *mdp,
                                const struct IlbPolicy *policy,
                                double *out);

/**
 * Runs an experiment from JSON config text on `threads` workers (0 = all cores).
 *
 * # Safety
 * `config_json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum IlbStatus ilb_experiment_run(const char *config_json,
                                  size_t threads,
                                  struct IlbExperiment **out);

/**
 * `results.csv` contents; release with [`ilb_string_free`].
 *
 * # Safety
 * `exp` must be a live handle.
 */
char *ilb_experiment_results_csv(const struct IlbExperiment *exp);

/**
 * `ledger.csv` contents; release with [`ilb_string_free`].
 *
 * # Safety
 * `exp` must be a live handle.
 */
char *ilb_experiment_ledger_csv(const struct IlbExperiment *exp);

/**
 * Writes CSV, config and SVG outputs into `dir`.
 *
 * # Safety
 * `exp` must be a live handle and `dir` a NUL-terminated string.
 */
enum IlbStatus ilb_experiment_write(const struct IlbExperiment *exp, const char *dir);

/**
 * # Safety
 * `exp` must come from this library and not be used afterwards.
 */
void ilb_experiment_free(struct IlbExperiment *exp);

/**
 * # Safety
 * `s` must be a string returned by this library and not be used afterwards.
 */
void ilb_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ILBENCH_H */
