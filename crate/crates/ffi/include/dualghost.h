#ifndef DUALGHOST_H
#define DUALGHOST_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

// Result code of every fallible call.
typedef enum {
  DG_STATUS_OK = 0,
  DG_STATUS_NULL_POINTER = 1,
  DG_STATUS_INVALID_ARGUMENT = 2,
  DG_STATUS_DIMENSION_MISMATCH = 3,
  DG_STATUS_NON_CONVERGENCE = 4,
  DG_STATUS_INFEASIBLE = 5,
  DG_STATUS_BISECTION_FAILURE = 6,
  DG_STATUS_CONFIG = 7,
  DG_STATUS_BUFFER_TOO_SMALL = 8,
  DG_STATUS_INTERNAL = 9,
} DgStatus;

typedef enum {
  DG_BASIS_HAAR = 0,
  DG_BASIS_PIXEL = 1,
  DG_BASIS_NONE = 2,
} DgBasis;

// Which measurements feed the reconstruction.
typedef enum {
  // Object-arm image and ghost image.
  DG_VARIANT_COMBINED = 0,
  // Ghost image only.
  DG_VARIANT_GHOST_ONLY = 1,
} DgVariant;

// Object, detector geometry, acquisition parameters and reconstruction
// factorizations.
typedef struct DgExperiment DgExperiment;

// Frame-summed counts of both arms.
typedef struct DgMeasurement DgMeasurement;

// Transmittance map, row-major, values in [0, 1].
typedef struct DgObject DgObject;

// Illumination, detector efficiencies and noise photons per pixel.
typedef struct {
  double n;
  double eta0;
  double eta1;
  double n_eps;
} DgParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread; empty after a success.
// The pointer stays valid until the next call into this library on the
// same thread.
const char *dg_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *dg_version(void);

// Copies `width * height` row-major transmittance values into a new object.
//
// # Safety
// Pointer arguments must be null or point to valid objects of the documented
// size; handles must come from this library and not be used after `free`.
DgStatus dg_object_new(size_t width, size_t height, const double *values, DgObject **out);

// Vertical transparent slit of `slit_width` columns, centred, on a uniform
// `background`.
//
// # Safety
// Pointer arguments must be null or point to valid objects of the documented
// size; handles must come from this library and not be used after `free`.
DgStatus dg_object_slit(size_t width,
                        size_t height,
                        size_t slit_width,
                        double background,
                        DgObject **out);

// # Safety
// Pointer arguments must be null or point to valid objects of the documented
// size; handles must come from this library and not be used after `free`.
void dg_object_free(DgObject *object);

// # Safety
// Pointer arguments must be null or point to valid objects of the documented
// size; handles must come from this library and not be used after `free`.
size_t dg_object_width(const DgObject *object);

// # Safety
// Pointer arguments must be null or point to valid objects of the documented
// size; handles must come from this library and not be used after `free`.
size_t dg_object_height(const DgObject *object);

// Builds an experiment; `frames` frames are summed per simulated acquisition.
//
// # Safety
// Pointer arguments must be null or point to valid objects of the documented
// size; handles must come from this library and not be used after `free`.
DgStatus dg_experiment_new(const DgObject *object,
                           size_t bin_factor,
                           const DgParams *params,
                           size_t frames,
                           DgBasis basis,
                           DgExperiment **out);

// Builds an experiment from a TOML configuration file.
//
// # Safety
// Pointer arguments must be null or point to valid objects of the documented
// size; handles must come from this library and not be used after `free`.
DgStatus dg_experiment_from_config(const char *path, DgExperiment **out);

// # Safety
// Pointer arguments must be null or point to valid objects of the documented
// size; handles must come from this library and not be used after `free`.
void dg_experiment_free(DgExperiment *experiment);

// Number of detector pixels per arm.
//
// # Safety
// Pointer arguments must be null or point to valid objects of the documented
// size; handles must come from this library and not be used after `free`.
size_t dg_experiment_detector_pixels(const DgExperiment *experiment);

// Number of object pixels (length of a reconstruction).
//
// # Safety
// Pointer arguments must be null or point to valid objects of the documented
// size; handles must come from this library and not be used after `free`.
size_t dg_experiment_object_pixels(const DgExperiment *experiment);

// Simulates all frames with `seed` and returns the summed counts.
//
// # Safety
// Pointer arguments must be null or point to valid objects of the documented
// size; handles must come from this library and not be used after `free`.
DgStatus dg_simulate(const DgExperiment *experiment, uint64_t seed, DgMeasurement **out);

// Wraps caller-supplied counts (for example from a real detector).
//
// # Safety
// Pointer arguments must be null or point to valid objects of the documented
// size; handles must come from this library and not be used after `free`.
DgStatus dg_measurement_new(const uint64_t *xi0,
                            const uint64_t *xi1,
                            size_t len,
                            DgMeasurement **out);

// # Safety
// Pointer arguments must be null or point to valid objects of the documented
// size; handles must come from this library and not be used after `free`.
void dg_measurement_free(DgMeasurement *measurement);

// # Safety
// Pointer arguments must be null or point to valid objects of the documented
// size; handles must come from this library and not be used after `free`.
size_t dg_measurement_len(const DgMeasurement *measurement);

// Copies both arms' counts into caller buffers of `len` elements each.
//
// # Safety
// Pointer arguments must be null or point to valid objects of the documented
// size; handles must come from this library and not be used after `free`.
DgStatus dg_measurement_counts(const DgMeasurement *measurement,
                               uint64_t *xi0,
                               uint64_t *xi1,
                               size_t len);

// Reconstructs the object into `estimate` (`len` ≥ object pixels).
// `zeroed` receives the number of suppressed basis components and may be null.
//
// # Safety
// Pointer arguments must be null or point to valid objects of the documented
// size; handles must come from this library and not be used after `free`.
DgStatus dg_reconstruct(const DgExperiment *experiment,
                        const DgMeasurement *measurement,
                        DgVariant variant,
                        double tau,
                        double *estimate,
                        size_t len,
                        size_t *zeroed);

// Analytic reconstruction error of every object pixel, summed. `+inf` when
// the pixels cannot be resolved (binning above 1).
//
// # Safety
// Pointer arguments must be null or point to valid objects of the documented
// size; handles must come from this library and not be used after `free`.
DgStatus dg_mse(const DgObject *object,
                size_t bin_factor,
                const DgParams *params,
                DgVariant variant,
                double *out);

// Relative photon saving of the dual-image scheme at equal error, for
// `eta0 = eta1 = eta` and `n_eps = noise_ratio * n`.
//
// # Safety
// Pointer arguments must be null or point to valid objects of the documented
// size; handles must come from this library and not be used after `free`.
DgStatus dg_photon_gain(const DgObject *object,
                        size_t bin_factor,
                        double eta,
                        double noise_ratio,
                        double n_ref,
                        double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DUALGHOST_H */
