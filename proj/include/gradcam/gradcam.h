#ifndef GRADCAM_GRADCAM_H
#define GRADCAM_GRADCAM_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(GRADCAM_BUILDING)
#    define GC_API __declspec(dllexport)
#  else
#    define GC_API __declspec(dllimport)
#  endif
#else
#  define GC_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum gc_status {
  GC_OK = 0,
  GC_ERR_INVALID_ARGUMENT = 1,
  GC_ERR_IO = 2,
  GC_ERR_PARSE = 3,
  GC_ERR_DIMENSION = 4,
  GC_ERR_LOOKUP = 5,
  GC_ERR_CONTRACT = 6,
  GC_ERR_ARCHITECTURE = 7, /* CAM requested on a head that is not GAP -> dense */
  GC_ERR_NO_SEGMENT = 8,
  GC_ERR_ATTACK_FAILED = 9,
  GC_ERR_TRAINING = 10,
  GC_ERR_PROTOCOL = 11,
  GC_ERR_INTERNAL = 12
} gc_status;

/* Message for the last failing call on this thread; "" if none. */
GC_API const char* gc_last_error(void);
GC_API const char* gc_status_name(gc_status status);

typedef struct gc_model gc_model;
typedef struct gc_image gc_image;
typedef struct gc_heatmap gc_heatmap;

/* ---- models ---- */

GC_API gc_status gc_model_load(const char* spec_path, const char* weights_prefix, gc_model** out);
GC_API void gc_model_free(gc_model* model);
GC_API size_t gc_model_categories(const gc_model* model);

/* Pre-softmax scores; `capacity` must be at least the category count. */
GC_API gc_status gc_model_predict(const gc_model* model, const gc_image* image, float* scores,
                                  size_t capacity);
/* Best `k` categories, highest score first (ties keep the lower index first). */
GC_API gc_status gc_model_top_k(const gc_model* model, const gc_image* image, size_t k,
                                size_t* categories, size_t* count);

/* ---- images ([C,H,W] floats in [0,1]) ---- */

GC_API gc_status gc_image_read(const char* path, gc_image** out);  /* P5 or P6, maxval 255 */
GC_API gc_status gc_image_write(const gc_image* image, const char* path);
GC_API void gc_image_free(gc_image* image);
GC_API void gc_image_size(const gc_image* image, size_t* channels, size_t* height, size_t* width);
/* Per-channel mean; `capacity` must cover the channel count. */
GC_API gc_status gc_image_channel_mean(const gc_image* image, float* mean, size_t capacity);

/* ---- heatmaps ---- */

GC_API void gc_heatmap_free(gc_heatmap* heat);
GC_API void gc_heatmap_size(const gc_heatmap* heat, size_t* width, size_t* height);
/* Row-major values, valid until the heatmap is freed. */
GC_API const float* gc_heatmap_values(const gc_heatmap* heat);
GC_API gc_status gc_heatmap_read_fmap(const char* path, gc_heatmap** out);
GC_API gc_status gc_heatmap_write_fmap(const gc_heatmap* heat, const char* path);
/* Normalized map, upsampled to the image, jet-coloured and blended 50/50. */
GC_API gc_status gc_heatmap_write_overlay(const gc_heatmap* heat, const gc_image* image, const char* path);

/* ---- explanations ---- */

typedef enum gc_method {
  GC_METHOD_GRADCAM = 0,
  GC_METHOD_CAM,
  GC_METHOD_COUNTERFACTUAL,
  GC_METHOD_GUIDED_BACKPROP,
  GC_METHOD_DECONV,
  GC_METHOD_GUIDED_GRADCAM,
  GC_METHOD_BACKPROP
} gc_method;

typedef enum gc_relu_policy { GC_RELU_STANDARD = 0, GC_RELU_GUIDED, GC_RELU_DECONV } gc_relu_policy;

/* Accepts the CLI spellings: gradcam, cam, counterfactual, guided-backprop,
   deconv, guided-gradcam, backprop. */
GC_API gc_status gc_method_from_name(const char* name, gc_method* out);
GC_API const char* gc_method_name(gc_method method);

typedef struct gc_explain_options {
  gc_method method;
  size_t category;
  const char* layer;          /* NULL or "": last convolutional layer */
  int max_pool_weights;       /* pool gradients with max instead of mean */
  int no_relu;
  int abs_grads;
  gc_relu_policy relu_policy; /* used for the Grad-CAM gradients */
  int post_softmax;           /* differentiate the probability, not the score */
} gc_explain_options;

GC_API void gc_explain_options_init(gc_explain_options* options);

/* CAM-family methods return a feature-resolution map; pixel-space methods
   return the per-pixel saliency magnitude at image resolution. */
GC_API gc_status gc_explain(const gc_model* model, const gc_image* image,
                            const gc_explain_options* options, gc_heatmap** out);

/* ---- occlusion ---- */

typedef struct gc_occlusion_options {
  size_t patch;        /* odd */
  size_t stride;
  const float* fill;   /* one value or one per channel */
  size_t fill_count;
  int post_softmax;
  size_t threads;      /* 0: hardware concurrency */
} gc_occlusion_options;

GC_API void gc_occlusion_options_init(gc_occlusion_options* options);
/* Default odd patch side for an image side. */
GC_API size_t gc_default_patch(size_t image_side);
GC_API gc_status gc_occlude(const gc_model* model, const gc_image* image, size_t category,
                            const gc_occlusion_options* options, gc_heatmap** out);

/* ---- datasets and training ---- */

GC_API gc_status gc_dataset_make(const char* dir, size_t count, size_t side, uint64_t seed,
                                 double two_object_fraction);
GC_API gc_status gc_dataset_channel_mean(const char* dir, float* mean, size_t capacity);

/* `train_accuracy` may be NULL. */
GC_API gc_status gc_train(const char* spec_path, const char* data_dir, const char* weights_prefix,
                          size_t epochs, double learning_rate, uint64_t seed, double* train_accuracy);

/* ---- attacks ---- */

typedef struct gc_attack_options {
  size_t target;
  double epsilon;
  size_t steps;
  double step_size;
} gc_attack_options;

GC_API void gc_attack_options_init(gc_attack_options* options);
/* On GC_ERR_ATTACK_FAILED `*out` still receives the best perturbed image. */
GC_API gc_status gc_attack(const gc_model* model, const gc_image* image, const gc_attack_options* options,
                           gc_image** out, double* target_probability);

/* ---- evaluation protocols ----
   Each writes a per-record report to `report_path` and key=value totals to
   `<report_path>.summary`. `maps_dir`, when set, supplies precomputed FMAP
   files named <id>_c<category>.fmap (or <id>.fmap for the top prediction)
   instead of computing maps in process. */

typedef struct gc_localize_result {
  size_t images;
  double top1_error;
  double top5_error;
  size_t no_segment;
} gc_localize_result;

GC_API gc_status gc_eval_localize(const gc_model* model, const char* data_dir,
                                  const gc_explain_options* options, double threshold_frac, double iou,
                                  const char* maps_dir, const char* report_path, gc_localize_result* out);

typedef struct gc_point_result {
  size_t objects;
  double accuracy;
  double center_baseline;
} gc_point_result;

GC_API gc_status gc_eval_point(const gc_model* model, const char* data_dir, const gc_explain_options* options,
                               const char* maps_dir, const char* report_path, gc_point_result* out);

typedef struct gc_modified_point_result {
  double threshold;
  size_t hits;
  size_t misses;
  double accuracy;
} gc_modified_point_result;

GC_API gc_status gc_eval_point_modified(const gc_model* model, const char* calibration_dir,
                                        const char* data_dir, const gc_explain_options* options,
                                        const char* report_path, gc_modified_point_result* out);

typedef struct gc_faithfulness_result {
  gc_method method;
  double mean_rho;
  double positive_fraction;
  size_t undefined;
} gc_faithfulness_result;

/* One result per entry of `methods`; `results` must hold `method_count` items. */
GC_API gc_status gc_eval_faithfulness(const gc_model* model, const char* data_dir, const gc_method* methods,
                                      size_t method_count, const gc_explain_options* options,
                                      const gc_occlusion_options* occlusion, const char* report_path,
                                      gc_faithfulness_result* results);

#ifdef __cplusplus
}
#endif

#endif
