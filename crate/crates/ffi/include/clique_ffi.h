#ifndef CLIQUE_FFI_H
#define CLIQUE_FFI_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CliqueIdScheme {
  CLIQUE_ID_SCHEME_DENSE = 0,
  CLIQUE_ID_SCHEME_SPARSE_RANDOM = 1,
} CliqueIdScheme;

typedef enum CliqueStatus {
  CLIQUE_STATUS_OK = 0,
  CLIQUE_STATUS_NULL_POINTER = 1,
  CLIQUE_STATUS_INVALID_ARGUMENT = 2,
  CLIQUE_STATUS_PARSE = 3,
  CLIQUE_STATUS_FALSE_IDENTIFIER = 4,
  CLIQUE_STATUS_INVALID_STATE = 5,
  CLIQUE_STATUS_EVENT = 6,
  CLIQUE_STATUS_IO = 7,
  CLIQUE_STATUS_PANIC = 8,
} CliqueStatus;

typedef enum CliqueStopWhen {
  CLIQUE_STOP_WHEN_LEGAL = 0,
  CLIQUE_STOP_WHEN_VALID = 1,
  CLIQUE_STOP_WHEN_ONE_HEAP = 2,
  CLIQUE_STOP_WHEN_NEVER = 3,
} CliqueStopWhen;

// Opaque simulation handle.
typedef struct CliqueSim CliqueSim;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Generates an initial state. `kind` uses the CLI syntax, e.g. `"line"` or
// `"heap-forest:3"`.
//
// # Safety
// `kind` must be a NUL-terminated string and `out` a valid pointer.
enum CliqueStatus clique_sim_new(const char *kind,
                                 uintptr_t n,
                                 uint64_t seed,
                                 enum CliqueIdScheme id_scheme,
                                 struct CliqueSim **out);

// Loads a state document.
//
// # Safety
// `json` must be a NUL-terminated string and `out` a valid pointer.
enum CliqueStatus clique_sim_load_json(const char *json, struct CliqueSim **out);

// # Safety
// `sim` must come from this library and not be used afterwards. Null is a no-op.
void clique_sim_free(struct CliqueSim *sim);

// Zero for canonical inbox order, otherwise the shuffle seed.
//
// # Safety
// `sim` must be a live handle.
enum CliqueStatus clique_sim_set_fuzz_seed(struct CliqueSim *sim, uint64_t seed);

// Executes `rounds` synchronous rounds.
//
// # Safety
// `sim` must be a live handle.
enum CliqueStatus clique_sim_step(struct CliqueSim *sim, uint64_t rounds);

// Steps until `stop_when` holds or `max_rounds` have run. `out_converged`
// is set to whether the predicate was reached; either out pointer may be null.
//
// # Safety
// `sim` must be a live handle; non-null out pointers must be valid.
enum CliqueStatus clique_sim_run(struct CliqueSim *sim,
                                 uint64_t max_rounds,
                                 enum CliqueStopWhen stop_when,
                                 uint64_t *out_round,
                                 bool *out_converged);

// # Safety
// `sim` must be a live handle and `out` valid.
enum CliqueStatus clique_sim_is_legal(const struct CliqueSim *sim, bool *out);

// # Safety
// `sim` must be a live handle and `out` valid.
enum CliqueStatus clique_sim_is_valid(const struct CliqueSim *sim, bool *out);

// # Safety
// `sim` must be a live handle and `out` valid.
enum CliqueStatus clique_sim_num_heaps(const struct CliqueSim *sim, uintptr_t *out);

// # Safety
// `sim` must be a live handle and `out` valid.
enum CliqueStatus clique_sim_round(const struct CliqueSim *sim, uint64_t *out);

// # Safety
// `sim` must be a live handle and `out` valid.
enum CliqueStatus clique_sim_num_nodes(const struct CliqueSim *sim, uintptr_t *out);

// Adds `new_id` knowing only `contact`, effective immediately.
//
// # Safety
// `sim` must be a live handle.
enum CliqueStatus clique_sim_join(struct CliqueSim *sim, uint64_t new_id, uint64_t contact);

// Removes `id` and purges every reference to it.
//
// # Safety
// `sim` must be a live handle.
enum CliqueStatus clique_sim_leave(struct CliqueSim *sim, uint64_t id);

// Serializes the state as a JSON document. Free with `clique_string_free`.
//
// # Safety
// `sim` must be a live handle and `out` valid.
enum CliqueStatus clique_sim_dump_json(const struct CliqueSim *sim, char **out);

// # Safety
// `s` must come from this library and not be used afterwards. Null is a no-op.
void clique_string_free(char *s);

// Message of the last failure on this thread, or null. Valid until the
// next failing call on the same thread.
const char *clique_last_error_message(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CLIQUE_FFI_H */
