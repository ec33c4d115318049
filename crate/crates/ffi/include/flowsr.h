#ifndef FLOWSR_H
#define FLOWSR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum FlowsrStatus {
  FLOWSR_STATUS_OK = 0,
  FLOWSR_STATUS_NULL_POINTER = 1,
  FLOWSR_STATUS_INVALID_ARGUMENT = 2,
  FLOWSR_STATUS_GRID_MISMATCH = 3,
  FLOWSR_STATUS_ALIASING = 4,
  FLOWSR_STATUS_IO = 5,
  FLOWSR_STATUS_PARSE = 6,
  FLOWSR_STATUS_RUNTIME = 7,
  FLOWSR_STATUS_PANIC = 8,
} FlowsrStatus;

/**
 * Volume selector for `flowsr_dataset_copy_volume`.
 */
typedef enum FlowsrVolume {
  FLOWSR_VOLUME_MAGNITUDE = 0,
  FLOWSR_VOLUME_U = 1,
  FLOWSR_VOLUME_V = 2,
  FLOWSR_VOLUME_W = 3,
} FlowsrVolume;

typedef enum FlowsrKernel {
  FLOWSR_KERNEL_IDEAL = 0,
  /**
   * FWHM equal to the decimation rate on each axis.
   */
  FLOWSR_KERNEL_GAUSSIAN = 1,
  FLOWSR_KERNEL_IDENTITY = 2,
} FlowsrKernel;

typedef enum FlowsrPrior {
  FLOWSR_PRIOR_TRILINEAR = 0,
  FLOWSR_PRIOR_ZERO_FILL = 1,
} FlowsrPrior;

typedef enum FlowsrInterp {
  FLOWSR_INTERP_TRILINEAR = 0,
  FLOWSR_INTERP_TRICUBIC = 1,
} FlowsrInterp;

/**
 * Opaque multi-frame velocity dataset.
 */
typedef struct FlowsrDataset FlowsrDataset;

/**
 * Frame-averaged metrics from `flowsr_evaluate`. Baseline fields are NaN when no baseline was given.
 */
typedef struct FlowsrSummary {
  double psnr_db_sr;
  double mre_percent_sr;
  double psnr_db_baseline;
  double mre_percent_baseline;
} FlowsrSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. Valid until the next call on this thread.
 */
const char *flowsr_last_error(void);

/**
 * Reads a volume file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum FlowsrStatus flowsr_dataset_load(const char *path, struct FlowsrDataset **out);

/**
 * Writes a volume file atomically.
 *
 * # Safety
 * `ds` must be a live handle; `path` a NUL-terminated string.
 */
enum FlowsrStatus flowsr_dataset_save(const struct FlowsrDataset *ds, const char *path);

/**
 * Releases a handle. NULL is ignored.
 *
 * # Safety
 * `ds` must come from this library and not be used afterwards.
 */
void flowsr_dataset_free(struct FlowsrDataset *ds);

/**
 * Grid dimensions, frame count and VENC (cm/s) of a dataset.
 *
 * # Safety
 * `ds` must be a live handle; `dims` must hold 3 values; the other outputs must be writable.
 */
enum FlowsrStatus flowsr_dataset_info(const struct FlowsrDataset *ds,
                                      size_t *dims,
                                      size_t *frames,
                                      double *venc);

/**
 * Copies one volume of one frame into `out`, which must hold `len` = m*n*s doubles.
 *
 * # Safety
 * `ds` must be a live handle and `out` valid for `len` writes.
 */
enum FlowsrStatus flowsr_dataset_copy_volume(const struct FlowsrDataset *ds,
                                             size_t frame,
                                             enum FlowsrVolume which,
                                             double *out,
                                             size_t len);

/**
 * Poiseuille tube phantom along z with a pulsatile centreline speed peaking at `vmax`.
 *
 * # Safety
 * `dims` must hold 3 values; `out` must be writable.
 */
enum FlowsrStatus flowsr_phantom_poiseuille(const size_t *dims,
                                            size_t frames,
                                            double venc,
                                            double vmax,
                                            struct FlowsrDataset **out);

/**
 * Blurs, decimates by `factor` and adds k-space noise at `noise_psnr_db` (NaN for none).
 * `achieved_psnr_db` may be NULL.
 *
 * # Safety
 * `hr` must be a live handle; `factor` must hold 3 values; `out` must be writable.
 */
enum FlowsrStatus flowsr_degrade(const struct FlowsrDataset *hr,
                                 const size_t *factor,
                                 enum FlowsrKernel kernel_kind,
                                 double noise_psnr_db,
                                 uint64_t seed,
                                 struct FlowsrDataset **out,
                                 double *achieved_psnr_db);

/**
 * Fourier-domain super-resolution of every frame and channel.
 *
 * # Safety
 * `lr` must be a live handle; `factor` must hold 3 values; `out` must be writable.
 */
enum FlowsrStatus flowsr_superresolve(const struct FlowsrDataset *lr,
                                      const size_t *factor,
                                      enum FlowsrKernel kernel_kind,
                                      double tau,
                                      enum FlowsrPrior prior_mode,
                                      struct FlowsrDataset **out);

/**
 * Interpolation baseline.
 *
 * # Safety
 * `lr` must be a live handle; `factor` must hold 3 values; `out` must be writable.
 */
enum FlowsrStatus flowsr_upsample(const struct FlowsrDataset *lr,
                                  const size_t *factor,
                                  enum FlowsrInterp method,
                                  struct FlowsrDataset **out);

/**
 * Masked PSNR and MRE against ground truth, averaged over frames (and channels for PSNR).
 * `baseline` may be NULL.
 *
 * # Safety
 * `truth` and `sr` must be live handles; `baseline` live or NULL; `out` writable.
 */
enum FlowsrStatus flowsr_evaluate(const struct FlowsrDataset *truth,
                                  const struct FlowsrDataset *sr,
                                  const struct FlowsrDataset *baseline,
                                  double mask_threshold,
                                  struct FlowsrSummary *out);

/**
 * Solves one complex channel. `y` holds 2*prod(lr_dims) doubles and `x` receives
 * 2*prod(lr_dims*factor) doubles, both interleaved `re, im`.
 *
 * # Safety
 * `lr_dims` and `factor` must hold 3 values; `y` and `x` must be valid for the lengths above.
 */
enum FlowsrStatus flowsr_fsr_solve(const size_t *lr_dims,
                                   const size_t *factor,
                                   enum FlowsrKernel kernel_kind,
                                   double tau,
                                   enum FlowsrPrior prior_mode,
                                   const double *y,
                                   double *x);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FLOWSR_H */
