#ifndef CNC_ADVISOR_H
#define CNC_ADVISOR_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CncStatus {
  CNC_STATUS_OK = 0,
  CNC_STATUS_NULL_ARGUMENT = 1,
  CNC_STATUS_INVALID_UTF8 = 2,
  CNC_STATUS_CONFIG = 3,
  CNC_STATUS_LOAD = 4,
  CNC_STATUS_TURN = 5,
  CNC_STATUS_INVALID_ARGUMENT = 6,
  CNC_STATUS_NO_TURN = 7,
  CNC_STATUS_PANIC = 8,
} CncStatus;

// Opaque to C.
typedef struct CncSession CncSession;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Create a session. `config_toml` may be NULL for defaults.
//
// # Safety
// `config_toml` is NULL or a valid C string; `out` is a valid pointer.
enum CncStatus cnc_session_new(const char *config_toml, struct CncSession **out);

// # Safety
// `session` is NULL or a handle from `cnc_session_new` not yet freed.
void cnc_session_free(struct CncSession *session);

// Load a data file (inspection CSV, pathing CSV) or a knowledge store.
//
// # Safety
// `session` is a live handle; `path` is a valid C string.
enum CncStatus cnc_session_load(struct CncSession *session, const char *path);

// Run one query. On success `*out_json` holds the structured turn response.
//
// # Safety
// `session` is a live handle; `query` is a valid C string; `out_json` is a
// valid pointer.
enum CncStatus cnc_session_turn(struct CncSession *session, const char *query, char **out_json);

// Record a human decision on the latest turn. `decision` is 0 approve,
// 1 override, 2 reject. `note` may be NULL.
//
// # Safety
// `session` is a live handle; `note` is NULL or a valid C string.
enum CncStatus cnc_session_decide(struct CncSession *session, uint32_t decision, const char *note);

// Number of audit events recorded so far, or 0 for a NULL handle.
//
// # Safety
// `session` is NULL or a live handle.
uintptr_t cnc_session_audit_len(const struct CncSession *session);

// The audit trail as newline-delimited JSON.
//
// # Safety
// `session` is a live handle; `out` is a valid pointer.
enum CncStatus cnc_session_audit(const struct CncSession *session, char **out);

// Message for the last failed call on this handle, or NULL. Owned by the
// handle.
//
// # Safety
// `session` is NULL or a live handle.
const char *cnc_session_last_error(const struct CncSession *session);

// # Safety
// `s` is NULL or a string returned by this library, not yet freed.
void cnc_string_free(char *s);

// Tool-frame compensation for a pair deviation `delta` (mm) at tilt
// `theta_deg`: length along the axis, radius across it.
//
// # Safety
// `out_length` and `out_radius` are valid pointers.
enum CncStatus cnc_pair_tool_comp(uint32_t pair_index,
                                  double delta,
                                  double theta_deg,
                                  double *out_length,
                                  double *out_radius);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CNC_ADVISOR_H */
