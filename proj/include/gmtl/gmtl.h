/* C interface of the gallery multi-task learning toolkit.
 *
 * Every function returning int reports a status: GMTL_OK on success or one of
 * the GMTL_ERR_* categories. The message of the most recent failure on the
 * calling thread is available from gmtl_last_error(). Handles are opaque and
 * must be released with the matching *_free function. Strings returned through
 * char** out-parameters are owned by the caller and released with
 * gmtl_string_free().
 */
#ifndef GMTL_GMTL_H
#define GMTL_GMTL_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define GMTL_API __declspec(dllexport)
#else
#define GMTL_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Values match the CLI exit codes. */
enum gmtl_status {
  GMTL_OK = 0,
  GMTL_ERR_INVALID_ARGUMENT = 1,
  GMTL_ERR_CONFIG = 2,
  GMTL_ERR_UNKNOWN_TASK = 3,
  GMTL_ERR_NOT_FOUND = 4,
  GMTL_ERR_SCHEMA_VERSION = 5,
  GMTL_ERR_FORMAT = 6,
  GMTL_ERR_NUMERIC = 7,
  GMTL_ERR_SHAPE = 8,
  GMTL_ERR_IO = 9,
  GMTL_ERR_INTERNAL = 10
};

typedef struct gmtl_config gmtl_config;
typedef struct gmtl_model gmtl_model;
typedef struct gmtl_index gmtl_index;

GMTL_API const char* gmtl_version(void);
/* Short category name, e.g. "unknown_task"; "ok" for GMTL_OK. */
GMTL_API const char* gmtl_status_name(int status);
/* Message of the last failed call on this thread; empty when none. */
GMTL_API const char* gmtl_last_error(void);
GMTL_API void gmtl_string_free(char* s);

/* Experiment configuration. A NULL or empty path yields the built-in defaults. */
GMTL_API int gmtl_config_load(const char* path, gmtl_config** out);
/* Applies one "dotted.key=value" override; the value is JSON or a bare string. */
GMTL_API int gmtl_config_set(gmtl_config* config, const char* assignment);
/* Validated configuration as JSON text. */
GMTL_API int gmtl_config_dump(const gmtl_config* config, char** json_out);
GMTL_API int gmtl_config_default_run_dir(const gmtl_config* config, char** dir_out);
GMTL_API void gmtl_config_free(gmtl_config* config);

/* Runs one subcommand (generate, train, evaluate, transfer, index, retrieve,
 * analyze, project) into run_dir, or a fresh timestamped directory when
 * run_dir is NULL. run_dir_out and warnings_out (newline separated) are
 * optional. */
GMTL_API int gmtl_run(const gmtl_config* config, const char* subcommand, const char* run_dir,
                      char** run_dir_out, char** warnings_out);

/* Trained model checkpoints. */
GMTL_API int gmtl_model_load(const char* path, gmtl_model** out);
GMTL_API int gmtl_model_dims(const gmtl_model* model, size_t* item_dim, size_t* embed_dim);
/* Embeds one gallery of n_items row-major vectors of width item_dim into
 * out[embed_dim]. */
GMTL_API int gmtl_model_embed(const gmtl_model* model, const double* items, size_t n_items,
                              size_t item_dim, double* out);
GMTL_API void gmtl_model_free(gmtl_model* model);

/* LSH index. width <= 0 selects the data-driven default. */
GMTL_API int gmtl_index_build(const char* const* ids, const double* vectors, size_t n, size_t dim,
                              size_t tables, size_t hashes, double width, uint64_t seed,
                              gmtl_index** out);
GMTL_API int gmtl_index_load(const char* path, gmtl_index** out);
GMTL_API int gmtl_index_save(const gmtl_index* index, const char* path);
GMTL_API int gmtl_index_size(const gmtl_index* index, size_t* n, size_t* dim);
/* Queries with the mean of n_seeds row-major seed embeddings. Writes up to k
 * results; ids_out[i] point into the index and stay valid until it is freed. */
GMTL_API int gmtl_index_query(const gmtl_index* index, const double* seeds, size_t n_seeds,
                              size_t dim, size_t k, const char** ids_out, double* distances_out,
                              size_t* count_out);
GMTL_API void gmtl_index_free(gmtl_index* index);

#ifdef __cplusplus
}
#endif

#endif /* GMTL_GMTL_H */
