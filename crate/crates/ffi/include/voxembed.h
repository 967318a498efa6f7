#ifndef VOXEMBED_H
#define VOXEMBED_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes.
typedef enum VxStatus {
  VX_STATUS_OK = 0,
  VX_STATUS_NULL_POINTER = 1,
  VX_STATUS_INVALID_ARGUMENT = 2,
  VX_STATUS_IO = 3,
  VX_STATUS_CHECKPOINT = 4,
  VX_STATUS_DIMENSION = 5,
  VX_STATUS_INSUFFICIENT_INPUT = 6,
  VX_STATUS_DEGENERATE = 7,
  VX_STATUS_INTERNAL = 99,
} VxStatus;

// A loaded embedding model.
typedef struct VxModel VxModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *vx_version(void);

// Copies the calling thread's last error message into `buf` (truncated,
// always NUL-terminated) and returns the full message length, or 0 if the
// last call succeeded.
//
// # Safety
// `buf` must be null or valid for `len` writes.
size_t vx_last_error(char *buf, size_t len);

// Loads a checkpoint. On success `*out` owns a new handle.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be valid for one write.
enum VxStatus vx_model_load(const char *path, struct VxModel **out);

// Releases a handle. Null is ignored.
//
// # Safety
// `model` must be null or a handle from [`vx_model_load`] not yet freed.
void vx_model_free(struct VxModel *model);

// Embedding dimension, or 0 for a null handle.
//
// # Safety
// `model` must be null or a live handle.
size_t vx_model_embed_dim(const struct VxModel *model);

// Fewest feature frames the model accepts, or 0 for a null handle.
//
// # Safety
// `model` must be null or a live handle.
size_t vx_model_min_frames(const struct VxModel *model);

// Log-mel input dimension, or 0 for a null handle.
//
// # Safety
// `model` must be null or a live handle.
size_t vx_model_feature_dim(const struct VxModel *model);

// Embeds a row-major `frames x dim` matrix of normalized log-mel features
// into `out[0..out_len]`; `out_len` must equal the embedding dimension.
//
// # Safety
// `feats` must be valid for `frames * dim` reads and `out` for `out_len` writes.
enum VxStatus vx_model_embed_features(const struct VxModel *model,
                                      const float *feats,
                                      size_t frames,
                                      size_t dim,
                                      float *out,
                                      size_t out_len);

// Runs the default frontend (log-mel, energy VAD, CMVN) on mono samples in
// `[-1, 1]` and embeds the result.
//
// # Safety
// `samples` must be valid for `n` reads and `out` for `out_len` writes.
enum VxStatus vx_model_embed_audio(const struct VxModel *model,
                                   const float *samples,
                                   size_t n,
                                   uint32_t sample_rate,
                                   float *out,
                                   size_t out_len);

// Cosine similarity of two unit-norm vectors of length `dim`.
//
// # Safety
// `a` and `b` must be valid for `dim` reads, `out` for one write.
enum VxStatus vx_cosine(const float *a, const float *b, size_t dim, double *out);

// Equal error rate in percent and its threshold. `labels[i]` is 1 for a
// target trial and 0 for a nontarget.
//
// # Safety
// `scores` and `labels` must be valid for `n` reads; `eer` and `threshold`
// for one write each (`threshold` may be null).
enum VxStatus vx_eer(const double *scores,
                     const uint8_t *labels,
                     size_t n,
                     double *eer,
                     double *threshold);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VOXEMBED_H */
