/* Generated by cbindgen from src/lib.rs. Do not edit. */

#ifndef QDMR_H
#define QDMR_H



#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Result code of every fallible call.
typedef enum QdmrStatus {
  QDMR_STATUS_OK = 0,
  // A required pointer argument was null.
  QDMR_STATUS_NULL_ARGUMENT = 1,
  // An argument was out of range or not valid UTF-8.
  QDMR_STATUS_INVALID_ARGUMENT = 2,
  // A file could not be read or written.
  QDMR_STATUS_IO = 3,
  // Malformed NIfTI, gradient table, transform or container data.
  QDMR_STATUS_INVALID_DATA = 4,
  // Valid input that the codec cannot handle.
  QDMR_STATUS_UNSUPPORTED = 5,
  // A numerical step failed (mesh, factorization, registration).
  QDMR_STATUS_NUMERICAL = 6,
  // Container checksum mismatch.
  QDMR_STATUS_CHECKSUM = 7,
  // A bug in the library; the panic message is kept as the last error.
  QDMR_STATUS_INTERNAL = 8,
} QdmrStatus;

// q-space predictor selector for [`qdmr_options_set_predictor`].
typedef enum QdmrPredictor {
  QDMR_PREDICTOR_LH = 0,
  QDMR_PREDICTOR_BH = 1,
  QDMR_PREDICTOR_DTI = 2,
} QdmrPredictor;

// Direction ordering selector for [`qdmr_options_set_ordering`].
typedef enum QdmrOrdering {
  QDMR_ORDERING_FURTHEST = 0,
  QDMR_ORDERING_CLOSEST = 1,
  QDMR_ORDERING_ORIGINAL = 2,
} QdmrOrdering;

// Which file of a dataset to serialize.
typedef enum QdmrFile {
  QDMR_FILE_NIFTI = 0,
  QDMR_FILE_BVAL = 1,
  QDMR_FILE_BVEC = 2,
} QdmrFile;

// Opaque owned byte buffer.
typedef struct QdmrBuffer QdmrBuffer;

// Opaque dataset: image volumes, verbatim NIfTI header and gradient files.
typedef struct QdmrDataset QdmrDataset;

// Opaque codec settings.
typedef struct QdmrOptions QdmrOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer
// stays valid until the next failing call on the same thread.
const char *qdmr_last_error(void);

// Static description of a status code.
const char *qdmr_status_string(enum QdmrStatus status);

// Library version as a static string.
const char *qdmr_version(void);

// Default codec settings: LH prediction, furthest ordering, no motion
// compensation, lambda 8.
struct QdmrOptions *qdmr_options_new(void);

// # Safety
// `options` must be null or a handle from [`qdmr_options_new`] not yet freed.
void qdmr_options_free(struct QdmrOptions *options);

// # Safety
// `options` must be null or a live options handle.
enum QdmrStatus qdmr_options_set_predictor(struct QdmrOptions *options,
                                           enum QdmrPredictor predictor);

// # Safety
// `options` must be null or a live options handle.
enum QdmrStatus qdmr_options_set_ordering(struct QdmrOptions *options, enum QdmrOrdering ordering);

// Positive, finite EED contrast parameter.
//
// # Safety
// `options` must be null or a live options handle.
enum QdmrStatus qdmr_options_set_lambda(struct QdmrOptions *options, float lambda);

// Enables or disables built-in motion compensation.
//
// # Safety
// `options` must be null or a live options handle.
enum QdmrStatus qdmr_options_set_motion(struct QdmrOptions *options, bool enabled);

// Codes every volume in image space when `enabled`.
//
// # Safety
// `options` must be null or a live options handle.
enum QdmrStatus qdmr_options_set_spatial_only(struct QdmrOptions *options, bool enabled);

// Builds a dataset from in-memory NIfTI, bval and bvec files. Volumes with
// a b-value at or below `b0_threshold` form the b=0 group.
//
// # Safety
// Each data pointer must be null with length 0 or point to that many
// readable bytes; `out` must be valid for a pointer write.
enum QdmrStatus qdmr_dataset_from_memory(const uint8_t *nifti,
                                         size_t nifti_len,
                                         const uint8_t *bval,
                                         size_t bval_len,
                                         const uint8_t *bvec,
                                         size_t bvec_len,
                                         double b0_threshold,
                                         struct QdmrDataset **out);

// Reads a dataset from three files.
//
// # Safety
// Paths must be NUL-terminated strings; `out` must be valid for a pointer
// write.
enum QdmrStatus qdmr_dataset_from_files(const char *nifti_path,
                                        const char *bval_path,
                                        const char *bvec_path,
                                        double b0_threshold,
                                        struct QdmrDataset **out);

// # Safety
// `dataset` must be null or a dataset handle not yet freed.
void qdmr_dataset_free(struct QdmrDataset *dataset);

// Number of 3D volumes, or 0 for a null handle.
//
// # Safety
// `dataset` must be null or a live dataset handle.
size_t qdmr_dataset_volume_count(const struct QdmrDataset *dataset);

// Writes the grid size of each volume.
//
// # Safety
// `dataset` must be null or a live handle; the outputs must be valid for
// writes.
enum QdmrStatus qdmr_dataset_dims(const struct QdmrDataset *dataset,
                                  size_t *nx,
                                  size_t *ny,
                                  size_t *nz);

// Serializes one of the dataset's files, byte-identical to its source.
//
// # Safety
// `dataset` must be null or a live handle; `out` must be valid for a
// pointer write.
enum QdmrStatus qdmr_dataset_file(const struct QdmrDataset *dataset,
                                  enum QdmrFile file,
                                  struct QdmrBuffer **out);

// Compresses `dataset`. A null `options` means defaults.
//
// # Safety
// Handles must be null or live; `out` must be valid for a pointer write.
enum QdmrStatus qdmr_compress(const struct QdmrDataset *dataset,
                              const struct QdmrOptions *options,
                              struct QdmrBuffer **out);

// Restores a dataset from container bytes.
//
// # Safety
// `data` must point to `len` readable bytes; `out` must be valid for a
// pointer write.
enum QdmrStatus qdmr_decompress(const uint8_t *data, size_t len, struct QdmrDataset **out);

// Pointer to the buffer's bytes, valid until the buffer is freed.
//
// # Safety
// `buffer` must be null or a live buffer handle.
const uint8_t *qdmr_buffer_data(const struct QdmrBuffer *buffer);

// # Safety
// `buffer` must be null or a live buffer handle.
size_t qdmr_buffer_len(const struct QdmrBuffer *buffer);

// # Safety
// `buffer` must be null or a buffer handle not yet freed.
void qdmr_buffer_free(struct QdmrBuffer *buffer);

// Writes a buffer to a file.
//
// # Safety
// `buffer` must be null or live; `path` must be a NUL-terminated string.
enum QdmrStatus qdmr_buffer_write(const struct QdmrBuffer *buffer, const char *file_path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QDMR_H */
