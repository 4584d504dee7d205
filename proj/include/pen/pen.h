/* Copyright 2026 The PEN Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef PEN_PEN_H_
#define PEN_PEN_H_

#include <stddef.h>
#include <stdint.h>

#if defined(PEN_BUILDING_LIBRARY)
#define PEN_API __attribute__((visibility("default")))
#else
#define PEN_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum pen_status {
  PEN_OK = 0,
  PEN_ERR_INVALID_ARGUMENT = 1,
  PEN_ERR_CONFIG = 2,
  PEN_ERR_DATA = 3,
  PEN_ERR_CHECKPOINT = 4,
  PEN_ERR_IO = 5,
  PEN_ERR_NUMERIC = 6,
  PEN_ERR_INTERNAL = 7
} pen_status;

typedef struct pen_config pen_config;
typedef struct pen_image pen_image;
typedef struct pen_model pen_model;

/* Message of the last failed call on this thread; "" after a success. */
PEN_API const char* pen_last_error(void);
/* Symbolic name of the detailed error behind the last failure. */
PEN_API const char* pen_last_error_kind(void);
PEN_API const char* pen_status_name(pen_status status);
PEN_API const char* pen_version(void);
/* Strings returned through char** out-parameters are released here. */
PEN_API void pen_string_free(char* s);

/* Single-threaded, deterministic kernels. Process-wide. */
PEN_API pen_status pen_set_deterministic(int on);

/* ---- configuration ---------------------------------------------------- */

PEN_API pen_status pen_config_create(pen_config** out);
PEN_API pen_status pen_config_load(const char* path, pen_config** out);
PEN_API pen_status pen_config_set(pen_config* cfg, const char* key, const char* value);
/* "key=value" */
PEN_API pen_status pen_config_apply(pen_config* cfg, const char* assignment);
PEN_API pen_status pen_config_get(const pen_config* cfg, const char* key, char** value);
PEN_API pen_status pen_config_dump(const pen_config* cfg, char** text);
PEN_API void pen_config_destroy(pen_config* cfg);

/* ---- images: row-major HWC doubles in [0, 1], 1 or 3 channels --------- */

PEN_API pen_status pen_image_create(int height, int width, int channels, const double* data, pen_image** out);
PEN_API pen_status pen_image_load(const char* path, pen_image** out);
PEN_API pen_status pen_image_save(const pen_image* image, const char* path);
PEN_API int pen_image_height(const pen_image* image);
PEN_API int pen_image_width(const pen_image* image);
PEN_API int pen_image_channels(const pen_image* image);
PEN_API const double* pen_image_data(const pen_image* image);
PEN_API void pen_image_destroy(pen_image* image);

/* ---- metrics ---------------------------------------------------------- */

typedef struct pen_metrics {
  double psnr; /* +inf for identical images */
  double ssim;
  double mse;
  double age;
  double peps;
  double pceps;
} pen_metrics;

PEN_API pen_status pen_compute_metrics(const pen_image* pred, const pen_image* gt, double error_threshold,
                                       int connectivity, pen_metrics* out);

typedef struct pen_eval_summary {
  pen_metrics aggregate;
  size_t count;
  size_t psnr_excluded;
  size_t skipped;
} pen_eval_summary;

/* Compares pred_dir and gt_dir by file stem and writes a JSON report when
   report_path is non-null. cfg may be null for default thresholds. table
   (optional) receives a printable summary. */
PEN_API pen_status pen_eval_dir(const char* pred_dir, const char* gt_dir, const pen_config* cfg,
                                const char* report_path, pen_eval_summary* summary, char** table);

/* ---- synthetic data --------------------------------------------------- */

/* backgrounds_dir may be null to use procedural backgrounds. */
PEN_API pen_status pen_synth(const char* backgrounds_dir, int n, const char* out_dir, uint64_t seed,
                             const pen_config* cfg, size_t* written);

/* ---- training --------------------------------------------------------- */

typedef void (*pen_loss_callback)(int64_t step, const char* name, double value, void* user);

typedef struct pen_train_options {
  const char* stage;          /* "stroke-init", "1", "2", "3" */
  const char* data_dir;       /* paired data; stage 2 reads only its images */
  const char* unlabeled_dir;  /* optional stage-2 source */
  const char* resume_path;    /* optional checkpoint */
  const char* out_checkpoint; /* required */
  const char* loss_csv;       /* optional; default <out_checkpoint>.losses.csv */
  int has_seed;
  int64_t seed;
  int deterministic;
  int force;
  pen_loss_callback on_loss;
  void* user;
} pen_train_options;

PEN_API pen_status pen_train(const pen_config* cfg, const pen_train_options* options);

/* ---- models ----------------------------------------------------------- */

PEN_API pen_status pen_model_load(const char* checkpoint, pen_model** out);
PEN_API pen_status pen_model_init(const pen_config* cfg, uint64_t seed, pen_model** out);
PEN_API pen_status pen_model_save(const pen_model* model, const char* path, int inference_only);
PEN_API int pen_model_iterations(const pen_model* model);
PEN_API int64_t pen_model_parameter_count(const pen_model* model);
PEN_API const char* pen_model_stage(const pen_model* model);
PEN_API const char* pen_model_config_hash(const pen_model* model);
/* iterations <= 0 uses the model's configured count. stroke may be null. */
PEN_API pen_status pen_model_erase(const pen_model* model, const pen_image* input, int iterations,
                                   pen_image** erased, pen_image** stroke);
PEN_API pen_status pen_erase_dir(const pen_model* model, const char* in_dir, const char* out_dir,
                                 int iterations, int intermediates, size_t* count);
PEN_API void pen_model_destroy(pen_model* model);

typedef struct pen_bench_row {
  int iterations;
  double mean_ms;
  double stddev_ms;
} pen_bench_row;

/* Times erasing at every count in iters over up to max_images images of
   images_dir (max_images <= 0: all). rows must hold n_iters entries. */
PEN_API pen_status pen_bench(const pen_model* model, const char* images_dir, const int* iters, size_t n_iters,
                             int repeats, int max_images, pen_bench_row* rows);

#ifdef __cplusplus
}
#endif

#endif  /* PEN_PEN_H_ */
