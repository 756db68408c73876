/* C interface to the grounding model. Every call returns a yoro_status; on
 * failure yoro_last_error() describes the problem for the calling thread.
 * Strings handed out through char** are JSON documents owned by the caller
 * and released with yoro_string_free. */
#ifndef YORO_YORO_H
#define YORO_YORO_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define YORO_API __declspec(dllexport)
#else
#define YORO_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum yoro_status {
    YORO_OK = 0,
    YORO_ERR_ARGUMENT = 1,   /* null handle, bad option */
    YORO_ERR_DIMENSION = 2,
    YORO_ERR_CONTRACT = 3,
    YORO_ERR_NUMERIC = 4,
    YORO_ERR_VALIDATION = 5,
    YORO_ERR_STATE = 6,
    YORO_ERR_INPUT = 7,
    YORO_ERR_IO = 8,
    YORO_ERR_GENERATION = 9,
    YORO_ERR_INTERNAL = 10
} yoro_status;

typedef struct yoro_model yoro_model;
typedef struct yoro_dataset yoro_dataset;

YORO_API const char* yoro_last_error(void);
YORO_API const char* yoro_status_string(yoro_status status);
YORO_API void yoro_string_free(char* s);

/* Synthetic data: writes <out_dir>/annotations.jsonl and images/. */
YORO_API yoro_status yoro_generate(uint64_t seed, size_t count, const char* out_dir);

/* Reads an annotation directory (annotations.jsonl + images). Images are
 * resampled to the extents of `model_config_json` (a model config object, or
 * null for the defaults). Skipped records are reported by yoro_dataset_info. */
YORO_API yoro_status yoro_dataset_open(const char* dir, const char* model_config_json, yoro_dataset** out);
YORO_API void yoro_dataset_free(yoro_dataset* dataset);
YORO_API size_t yoro_dataset_size(const yoro_dataset* dataset);
YORO_API yoro_status yoro_dataset_info(const yoro_dataset* dataset, char** json_out);

/* config_json: {"model": {...}, "train": {...}, "val_fraction": r} with every
 * field optional. Metrics lines are appended to metrics_path when non-null. */
YORO_API yoro_status yoro_train(const char* config_json, const yoro_dataset* train_set,
                                const yoro_dataset* val_set, const char* metrics_path, yoro_model** out);

YORO_API yoro_status yoro_model_load(const char* path, yoro_model** out);
YORO_API yoro_status yoro_model_save(const yoro_model* model, const char* path);
YORO_API void yoro_model_free(yoro_model* model);
YORO_API yoro_status yoro_model_config(const yoro_model* model, char** json_out);

YORO_API yoro_status yoro_evaluate(const yoro_model* model, const yoro_dataset* dataset, int with_records,
                                   char** json_out);

/* heatmap_pgm may be null. */
YORO_API yoro_status yoro_infer(const yoro_model* model, const char* image_path, const char* phrase,
                                const char* heatmap_pgm, char** json_out);

YORO_API yoro_status yoro_bench(const yoro_model* model, const char* image_path, const char* phrase,
                                size_t iterations, size_t warmup, size_t batch, char** json_out);

/* Writes an 8-bit PGM of the patch weights (min-max scaled) to pgm_path and
 * the raw weights as JSON to json_path; json_path may be null. */
YORO_API yoro_status yoro_attention(const yoro_model* model, const char* image_path, const char* phrase, int layer,
                                    const char* pgm_path, const char* json_path, char** json_out);

#ifdef __cplusplus
}
#endif

#endif
