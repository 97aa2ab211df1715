#ifndef BANDFORMER_H
#define BANDFORMER_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum BfStatus {
  BF_STATUS_OK = 0,
  BF_STATUS_NULL_POINTER = 1,
  BF_STATUS_INVALID_ARGUMENT = 2,
  BF_STATUS_IO = 3,
  BF_STATUS_FORMAT = 4,
  BF_STATUS_CAPACITY = 5,
  BF_STATUS_VOCABULARY = 6,
  BF_STATUS_PANIC = 7,
} BfStatus;

/**
 * Opaque model handle.
 */
typedef struct BfModel BfModel;

/**
 * Token ids owned by the library; free with [`bf_tokens_free`].
 */
typedef struct BfTokenBuffer {
  uint32_t *data;
  size_t len;
} BfTokenBuffer;

/**
 * Bytes owned by the library; free with [`bf_bytes_free`].
 */
typedef struct BfByteBuffer {
  uint8_t *data;
  size_t len;
} BfByteBuffer;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null after a
 * success. Valid until the next call into the library on this thread.
 */
const char *bf_last_error_message(void);

/**
 * Loads a checkpoint file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum BfStatus bf_model_load(const char *path, struct BfModel **out);

/**
 * Loads a checkpoint from memory.
 *
 * # Safety
 * `bytes` must be valid for `len` reads and `out` a valid pointer.
 */
enum BfStatus bf_model_from_bytes(const uint8_t *bytes, size_t len, struct BfModel **out);

/**
 * Releases a model; null is ignored.
 *
 * # Safety
 * `model` must come from a load function and not be used afterwards.
 */
void bf_model_free(struct BfModel *model);

/**
 * # Safety
 * `model` must be a live handle.
 */
size_t bf_model_vocab_size(const struct BfModel *model);

/**
 * Longest accepted sequence, or 0 when unbounded (recurrent models).
 *
 * # Safety
 * `model` must be a live handle.
 */
size_t bf_model_max_len(const struct BfModel *model);

/**
 * Writes next-token logits for every position, `n * vocab_size` floats,
 * row-major.
 *
 * # Safety
 * `tokens` must be valid for `n` reads and `logits` for `logits_len` writes.
 */
enum BfStatus bf_model_forward(const struct BfModel *model,
                               const uint32_t *tokens,
                               size_t n,
                               float *logits,
                               size_t logits_len);

/**
 * Samples until `target_length` tokens. An empty primer starts from BOS.
 * `greedy != 0` takes the argmax and ignores `temperature` and `seed`.
 *
 * # Safety
 * `primer` must be valid for `primer_len` reads and `out` a valid pointer.
 */
enum BfStatus bf_generate(const struct BfModel *model,
                          const uint32_t *primer,
                          size_t primer_len,
                          size_t target_length,
                          double temperature,
                          uint64_t seed,
                          int greedy,
                          struct BfTokenBuffer *out);

/**
 * Parses a Standard MIDI File and encodes it as event tokens (BOS first).
 *
 * # Safety
 * `midi` must be valid for `len` reads and `out` a valid pointer.
 */
enum BfStatus bf_midi_to_tokens(const uint8_t *midi, size_t len, struct BfTokenBuffer *out);

/**
 * Decodes event tokens and writes them as a format-0 MIDI file.
 *
 * # Safety
 * `tokens` must be valid for `n` reads and `out` a valid pointer.
 */
enum BfStatus bf_tokens_to_midi(const uint32_t *tokens, size_t n, struct BfByteBuffer *out);

/**
 * # Safety
 * `buffer` must come from this library and be freed once.
 */
void bf_tokens_free(struct BfTokenBuffer buffer);

/**
 * # Safety
 * `buffer` must come from this library and be freed once.
 */
void bf_bytes_free(struct BfByteBuffer buffer);

/**
 * Sliding-window attention over `[heads, n, head_dim]` inputs. `window`
 * is the full window (each position sees `window / 2` per side).
 *
 * # Safety
 * `q`, `k`, `v` must be valid for `heads * n * head_dim` reads and `out`
 * for as many writes.
 */
enum BfStatus bf_sliding_window_attention(const float *q,
                                          const float *k,
                                          const float *v,
                                          size_t heads,
                                          size_t n,
                                          size_t head_dim,
                                          size_t window,
                                          size_t dilation,
                                          int causal,
                                          float *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BANDFORMER_H */
