/* C interface to the convevo evolutionary CNN search. */

#ifndef CONVEVO_H
#define CONVEVO_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Smallest buffer that fits every `convevo_hexfloat_encode` output,
 * terminator included.
 */
#define CONVEVO_HEXFLOAT_CAPACITY 32

/**
 * Outcome of a fallible call. Anything but `OK` leaves a message in
 * `convevo_last_error`.
 */
typedef enum ConvevoStatus {
  CONVEVO_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  CONVEVO_STATUS_NULL_ARGUMENT = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  CONVEVO_STATUS_INVALID_UTF8 = 2,
  /**
   * Text input did not parse (genome, work unit, or hexfloat).
   */
  CONVEVO_STATUS_PARSE_ERROR = 3,
  /**
   * The value has no finite text form (NaN or infinity).
   */
  CONVEVO_STATUS_NON_FINITE = 4,
  /**
   * The RNG state was outside the valid range.
   */
  CONVEVO_STATUS_BAD_STATE = 5,
  /**
   * The output buffer is too small for the encoded text.
   */
  CONVEVO_STATUS_BUFFER_TOO_SMALL = 6,
  /**
   * The genome has not been trained, so it has no fitness yet.
   */
  CONVEVO_STATUS_UNEVALUATED = 7,
  /**
   * A file could not be read or had a malformed layout.
   */
  CONVEVO_STATUS_IO_ERROR = 8,
  /**
   * Training failed (checkpoint mismatch or an input/dataset conflict).
   */
  CONVEVO_STATUS_TRAIN_ERROR = 9,
  /**
   * Training panicked; the work unit result is undefined.
   */
  CONVEVO_STATUS_PANIC = 10,
} ConvevoStatus;

/**
 * Labeled images in the layout the trainer consumes.
 */
typedef struct ConvevoDataset ConvevoDataset;

/**
 * A CNN topology with optional trained weights.
 */
typedef struct ConvevoGenome ConvevoGenome;

/**
 * Deterministic linear congruential generator; same sequence on every host.
 */
typedef struct ConvevoRng ConvevoRng;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string; never freed.
 */
const char *convevo_version(void);

/**
 * Message for the most recent failure on this thread, or an empty string.
 * The pointer is valid until the next convevo call on the same thread.
 */
const char *convevo_last_error(void);

/**
 * Frees a string returned by this library. Null is ignored.
 */
void convevo_string_free(char *text);

/**
 * Creates a generator. Any seed is accepted; degenerate seeds are remapped
 * to keep the sequence non-trivial.
 */
struct ConvevoRng *convevo_rng_new(uint64_t seed);

/**
 * Resumes a generator from a previously observed state. Fails with
 * `BAD_STATE` when the state is outside the generator's cycle.
 */
enum ConvevoStatus convevo_rng_from_state(uint64_t state, struct ConvevoRng **out);

/**
 * Current state, suitable for `convevo_rng_from_state`. Null yields 0.
 */
uint64_t convevo_rng_state(const struct ConvevoRng *rng);

/**
 * Next raw draw in [1, 2147483646]. Null yields 0.
 */
uint64_t convevo_rng_next(struct ConvevoRng *rng);

/**
 * Uniform draw in [0, 1). Null yields 0.
 */
double convevo_rng_uniform(struct ConvevoRng *rng);

/**
 * Uniform integer in [0, n). Null rng or n == 0 yields 0.
 */
uint64_t convevo_rng_below(struct ConvevoRng *rng, uint64_t n);

/**
 * Approximately standard normal draw. Null yields 0.
 */
double convevo_rng_normal(struct ConvevoRng *rng);

/**
 * Frees a generator. Null is ignored.
 */
void convevo_rng_free(struct ConvevoRng *rng);

/**
 * e^x with the library's bit-reproducible evaluation.
 */
double convevo_exp(double x);

/**
 * Natural log with the library's bit-reproducible evaluation.
 */
double convevo_ln(double x);

/**
 * Writes the lossless text form of a finite double into `buffer`,
 * NUL-terminated. `CONVEVO_HEXFLOAT_CAPACITY` bytes always suffice.
 */
enum ConvevoStatus convevo_hexfloat_encode(double value, char *buffer, size_t capacity);

/**
 * Parses a hexfloat produced by `convevo_hexfloat_encode` back into the
 * bit-identical double.
 */
enum ConvevoStatus convevo_hexfloat_decode(const char *text, double *out);

/**
 * Parses a genome from its canonical text form.
 */
enum ConvevoStatus convevo_genome_parse(const char *text, struct ConvevoGenome **out);

/**
 * Canonical text form; the round-trip through `convevo_genome_parse` is
 * byte-identical. Null yields null.
 */
char *convevo_genome_serialize(const struct ConvevoGenome *genome);

/**
 * GraphViz rendering of the topology. Null yields null.
 */
char *convevo_genome_dot(const struct ConvevoGenome *genome);

/**
 * Master-assigned genome id. Null yields 0.
 */
uint64_t convevo_genome_id(const struct ConvevoGenome *genome);

/**
 * Number of nodes, input and output included. Null yields 0.
 */
uint64_t convevo_genome_node_count(const struct ConvevoGenome *genome);

/**
 * Number of edges, disabled ones included. Null yields 0.
 */
uint64_t convevo_genome_edge_count(const struct ConvevoGenome *genome);

/**
 * Training error sum of an evaluated genome. `UNEVALUATED` when the genome
 * has not been trained; `out` is untouched on failure.
 */
enum ConvevoStatus convevo_genome_fitness(const struct ConvevoGenome *genome, double *out);

/**
 * Frees a genome. Null is ignored.
 */
void convevo_genome_free(struct ConvevoGenome *genome);

/**
 * Loads an IDX image file and its label file, padding each image border
 * with `pad` zero pixels.
 */
enum ConvevoStatus convevo_dataset_load(const char *images_path,
                                        const char *labels_path,
                                        size_t pad,
                                        struct ConvevoDataset **out);

/**
 * Deterministic sample of `count` items (clamped to the dataset size) into
 * a new dataset handle.
 */
enum ConvevoStatus convevo_dataset_subset(const struct ConvevoDataset *dataset,
                                          uint64_t count,
                                          uint64_t seed,
                                          struct ConvevoDataset **out);

/**
 * Number of images. Null yields 0.
 */
uint64_t convevo_dataset_len(const struct ConvevoDataset *dataset);

/**
 * Padded image width. Null yields 0.
 */
uint64_t convevo_dataset_width(const struct ConvevoDataset *dataset);

/**
 * Padded image height. Null yields 0.
 */
uint64_t convevo_dataset_height(const struct ConvevoDataset *dataset);

/**
 * Number of label classes. Null yields 0.
 */
uint64_t convevo_dataset_classes(const struct ConvevoDataset *dataset);

/**
 * Frees a dataset. Null is ignored.
 */
void convevo_dataset_free(struct ConvevoDataset *dataset);

/**
 * Trains one work unit (text form) against a dataset and returns the result
 * text whose digest the master verifies. Identical inputs produce identical
 * bytes on every host.
 */
enum ConvevoStatus convevo_evaluate_work_unit(const char *unit_text,
                                              const struct ConvevoDataset *dataset,
                                              char **out_result);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CONVEVO_H */
