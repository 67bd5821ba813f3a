#ifndef SPOT_H
#define SPOT_H

/* Generated by the spot-ffi build script; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible function in this ABI.
typedef enum SpotStatus {
  // Success.
  SPOT_OK = 0,
  // A pointer was NULL, a length was zero, or an argument was malformed.
  SPOT_ERR_INVALID_ARGUMENT = 1,
  // The model or vocabulary file could not be read or parsed.
  SPOT_ERR_MODEL_FILE = 2,
  // The backend rejected the request (token out of range, bad geometry).
  SPOT_ERR_BACKEND = 3,
  // An output buffer was too small; the required size was written to the
  // corresponding length out-param.
  SPOT_ERR_BUFFER_TOO_SMALL = 4,
  // A Rust panic was caught at the boundary; state may be stale but the
  // process is intact.
  SPOT_ERR_INTERNAL = 5,
} SpotStatus;

// Opaque model handle. Create with [`spot_model_load`] or
// [`spot_model_train`], destroy with [`spot_model_free`].
typedef struct spot_model spot_model;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message describing the most recent failure on this thread, as a
// NUL-terminated UTF-8 string. Valid until the next failing call on the
// same thread. Never NULL; empty before any failure.
const char *spot_last_error(void);

// Load a persisted model (`.spotngm` plus its vocabulary sidecar) into a
// fresh handle written to `*out`.
//
// # Safety
// `model_path` and `vocab_path` must be valid NUL-terminated strings and
// `out` a valid pointer.
enum SpotStatus spot_model_load(const char *model_path,
                                const char *vocab_path,
                                struct spot_model **out);

// Train an in-memory model from one UTF-8 corpus string (default
// hyperparameters) and write the handle to `*out`. Intended for tests and
// small embedders; production models should be trained once and persisted.
//
// # Safety
// `corpus` and `model_id` must be valid NUL-terminated strings and `out` a
// valid pointer.
enum SpotStatus spot_model_train(const char *corpus, const char *model_id, struct spot_model **out);

// Destroy a handle. NULL is a no-op. The handle must not be used afterward.
//
// # Safety
// `model` must be NULL or a pointer returned by a constructor of this
// library that has not been freed yet.
void spot_model_free(struct spot_model *model);

// Vocabulary size of the model; 0 if `model` is NULL.
//
// # Safety
// `model` must be NULL or a live handle.
uint32_t spot_model_vocab_size(const struct spot_model *model);

// Aggregate originality score of `tokens[context_len..]` conditioned on the
// full prefix: mean per-token score (rank divided by vocabulary size) times
// 10. Written to `*out_score`. Requires `context_len < len`.
//
// # Safety
// `tokens` must point to `len` readable u32s; `out_score` must be valid.
enum SpotStatus spot_score(const struct spot_model *model,
                           const uint32_t *tokens,
                           size_t len,
                           size_t context_len,
                           double *out_score);

// Per-position ranks of `tokens[context_len..]` (teacher-forced). Exactly
// `len - context_len` values are written to `out_ranks`, which must have
// that capacity.
//
// # Safety
// `tokens` must point to `len` readable u32s, `out_ranks` to
// `len - context_len` writable u32s.
enum SpotStatus spot_ranks(const struct spot_model *model,
                           const uint32_t *tokens,
                           size_t len,
                           size_t context_len,
                           uint32_t *out_ranks);

// Score and classify in one step: `*out_is_human` becomes 1 when the
// aggregate score strictly exceeds `rho`, else 0. The score itself is also
// written to `*out_score` when that pointer is non-NULL.
//
// # Safety
// Pointer contract as in [`spot_score`]; `out_is_human` must be valid.
enum SpotStatus spot_detect(const struct spot_model *model,
                            const uint32_t *tokens,
                            size_t len,
                            size_t context_len,
                            double rho,
                            int32_t *out_is_human,
                            double *out_score);

// Greedy-generate `s` tokens after `context` (lowest-id argmax ties) into
// `out_tokens`, which must hold `s` values.
//
// # Safety
// `context` must point to `context_len` readable u32s (may be NULL when
// `context_len` is 0); `out_tokens` to `s` writable u32s.
enum SpotStatus spot_generate(const struct spot_model *model,
                              const uint32_t *context,
                              size_t context_len,
                              size_t s,
                              uint32_t *out_tokens);

// Tokenize UTF-8 `text` with the model's own tokenizer. Writes at most
// `capacity` ids to `out_tokens` and always stores the full token count in
// `*out_len`; returns `SPOT_ERR_BUFFER_TOO_SMALL` when it did not fit.
//
// # Safety
// `text` must be a valid NUL-terminated string; `out_tokens` must point to
// `capacity` writable u32s (may be NULL when `capacity` is 0); `out_len`
// must be valid.
enum SpotStatus spot_encode(const struct spot_model *model,
                            const char *text,
                            uint32_t *out_tokens,
                            size_t capacity,
                            size_t *out_len);

// Decode token ids back to text. Writes at most `capacity` bytes (no NUL
// terminator) to `out_text` and always stores the full byte length in
// `*out_len`; returns `SPOT_ERR_BUFFER_TOO_SMALL` when it did not fit.
//
// # Safety
// `tokens` must point to `len` readable u32s; `out_text` must point to
// `capacity` writable bytes (may be NULL when `capacity` is 0); `out_len`
// must be valid.
enum SpotStatus spot_decode(const struct spot_model *model,
                            const uint32_t *tokens,
                            size_t len,
                            uint8_t *out_text,
                            size_t capacity,
                            size_t *out_len);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* SPOT_H */
