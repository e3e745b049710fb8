#ifndef POSN_H
#define POSN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PosnProtocol {
  POSN_PROTOCOL_POSN = 0,
  POSN_PROTOCOL_POB = 1,
  POSN_PROTOCOL_POR = 2,
} PosnProtocol;

/**
 * Result codes.
 */
typedef enum PosnStatus {
  POSN_STATUS_OK = 0,
  POSN_STATUS_NULL_ARGUMENT = 1,
  POSN_STATUS_INVALID_UTF8 = 2,
  POSN_STATUS_PARSE_ERROR = 3,
  POSN_STATUS_INVALID_SCENARIO = 4,
  POSN_STATUS_IO_ERROR = 5,
  POSN_STATUS_INVALID_ARGUMENT = 6,
  POSN_STATUS_PANIC = 7,
} PosnStatus;

/**
 * Scenario handle: config, load, faults and protocol.
 */
typedef struct PosnConfig PosnConfig;

/**
 * Completed run handle.
 */
typedef struct PosnRun PosnRun;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failure on this thread, or null. Valid until the
 * next call into this library on the same thread.
 */
const char *posn_last_error_message(void);

/**
 * Default scenario: four honest validators, PoSN, 100 tx/s for 10 s.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum PosnStatus posn_config_default(struct PosnConfig **out);

/**
 * Parses a TOML scenario.
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `out` a valid pointer.
 */
enum PosnStatus posn_config_from_toml(const char *toml, struct PosnConfig **out);

/**
 * # Safety
 * `cfg` must come from this library.
 */
enum PosnStatus posn_config_set_seed(struct PosnConfig *cfg, uint64_t seed);

/**
 * # Safety
 * `cfg` must come from this library.
 */
enum PosnStatus posn_config_set_protocol(struct PosnConfig *cfg, enum PosnProtocol protocol);

/**
 * # Safety
 * `cfg` must come from this library or be null; it is invalid afterwards.
 */
void posn_config_free(struct PosnConfig *cfg);

/**
 * Runs the scenario to completion.
 *
 * # Safety
 * `cfg` must come from this library and `out` must be a valid pointer.
 */
enum PosnStatus posn_run(const struct PosnConfig *cfg, struct PosnRun **out);

/**
 * Summary statistics as a JSON string; release with [`posn_string_free`].
 *
 * # Safety
 * `run` must come from this library and `out` must be a valid pointer.
 */
enum PosnStatus posn_run_summary_json(const struct PosnRun *run, char **out);

/**
 * Writes the run's CSV and JSON exports into `dir`.
 *
 * # Safety
 * `run` must come from this library and `dir` must be a NUL-terminated
 * string.
 */
enum PosnStatus posn_run_export(const struct PosnRun *run, const char *dir);

/**
 * Number of safety or accounting violations detected; 0 for a clean run
 * and `u64::MAX` for a null handle.
 *
 * # Safety
 * `run` must come from this library or be null.
 */
uint64_t posn_run_violation_count(const struct PosnRun *run);

/**
 * Number of finalized slots; 0 for a null handle.
 *
 * # Safety
 * `run` must come from this library or be null.
 */
uint64_t posn_run_finalized_slots(const struct PosnRun *run);

/**
 * # Safety
 * `run` must come from this library or be null; it is invalid afterwards.
 */
void posn_run_free(struct PosnRun *run);

/**
 * # Safety
 * `s` must be a string returned by this library or null.
 */
void posn_string_free(char *s);

/**
 * Votes needed to finalize among `n` validators.
 */
size_t posn_quorum_threshold(size_t n);

/**
 * Shannon entropy in bits of `counts[0..len]`.
 *
 * # Safety
 * `counts` must point to `len` values (or be null with `len == 0`) and
 * `out` must be a valid pointer.
 */
enum PosnStatus posn_leader_entropy(const uint64_t *counts, size_t len, double *out);

/**
 * One LIF micro-step from potential `*v`; updates `*v` and sets `*spiked`.
 *
 * # Safety
 * `v` and `spiked` must be valid pointers.
 */
enum PosnStatus posn_lif_step(double *v,
                              double current,
                              double lambda,
                              double dt,
                              double theta,
                              double v_reset,
                              bool *spiked);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* POSN_H */
