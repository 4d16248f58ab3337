#ifndef LEGALBOT_H
#define LEGALBOT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call. Zero is success.
typedef enum LbStatus {
  LB_STATUS_OK = 0,
  LB_STATUS_NULL_ARGUMENT = 1,
  LB_STATUS_INVALID_UTF8 = 2,
  LB_STATUS_IO = 3,
  LB_STATUS_CONFIG = 4,
  LB_STATUS_ENGINE = 5,
  LB_STATUS_PANIC = 6,
} LbStatus;

// Loaded engine. Shared by any number of sessions; safe to use from several threads.
typedef struct LbEngine LbEngine;

// One conversation. Not thread safe: use a session from one thread at a time.
typedef struct LbSession LbSession;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Loads a manifest (JSON) and a response table (CSV) from disk.
//
// # Safety
// Paths must be NUL-terminated strings; `out` must be writable.
enum LbStatus lb_engine_load(const char *manifest_path,
                             const char *responses_path,
                             struct LbEngine **out);

// Same as [`lb_engine_load`] but from the file contents.
//
// # Safety
// Inputs must be NUL-terminated strings; `out` must be writable.
enum LbStatus lb_engine_from_strings(const char *manifest_json,
                                     const char *responses_csv,
                                     struct LbEngine **out);

// Releases an engine. Sessions opened on it stay usable.
//
// # Safety
// `engine` must come from this library and not be freed twice. Null is ignored.
void lb_engine_free(struct LbEngine *engine);

// Resolves an utterance through the bot tree without touching any session.
// Writes `{"bot","intent","confidence","fallback"}`.
//
// # Safety
// `engine` must be live; `text` NUL-terminated; `out_json` writable.
enum LbStatus lb_classify(const struct LbEngine *engine, const char *text, char **out_json);

// Opens a fresh session on `engine`.
//
// # Safety
// `engine` must be live; `out` writable.
enum LbStatus lb_session_new(const struct LbEngine *engine, struct LbSession **out);

// # Safety
// `session` must come from this library and not be freed twice. Null is ignored.
void lb_session_free(struct LbSession *session);

// Plays one user turn. Writes the reply in the same shape as the HTTP API
// with the trace attached: `{"messages","buttons"?,"end_of_flow","trace"}`.
//
// # Safety
// `session` must be live and not used concurrently; `text` NUL-terminated;
// `out_json` writable.
enum LbStatus lb_session_send(struct LbSession *session, const char *text, char **out_json);

// Writes the full session state as JSON.
//
// # Safety
// `session` must be live; `out_json` writable.
enum LbStatus lb_session_state(const struct LbSession *session, char **out_json);

// Splits a long reply into chat-sized messages. Writes a JSON array of strings.
//
// # Safety
// `text` NUL-terminated; `out_json` writable.
enum LbStatus lb_split_response(const char *text, char **out_json);

// # Safety
// `s` must come from this library and not be freed twice. Null is ignored.
void lb_string_free(char *s);

// Message for the last failed call on this thread, or null after a success.
// The pointer stays valid until the next call on the same thread.
const char *lb_last_error(void);

// Library version, static storage.
const char *lb_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LEGALBOT_H */
