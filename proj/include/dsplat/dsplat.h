/* dsplat: deformable 3D Gaussian splatting engine, C API.
 *
 * All functions return dsplat_status; on failure dsplat_last_error() holds a
 * human-readable message for the calling thread. Handles are opaque and must
 * be released with their matching close/destroy call.
 */
#ifndef DSPLAT_H
#define DSPLAT_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dsplat_status {
    DSPLAT_OK = 0,
    DSPLAT_ERR_INVALID = 2, /* bad arguments, config validation */
    DSPLAT_ERR_IO = 3,      /* file system or parse failure */
    DSPLAT_ERR_NUMERIC = 4  /* non-finite values, degenerate math */
} dsplat_status;

typedef struct dsplat_config dsplat_config;
typedef struct dsplat_dataset dsplat_dataset;
typedef struct dsplat_model dsplat_model;

/* Message for the most recent failure on this thread. */
const char* dsplat_last_error(void);

/* --- run configuration ----------------------------------------------------
 * A config is a typed key/value store covering every tunable (loss weights,
 * learning rates, densification, synthesizer parameters, ...). Keys and
 * defaults are enumerable via dsplat_config_describe; files use the same
 * plain-text "key value" format as dataset manifests.
 */
dsplat_config* dsplat_config_create(void);
void dsplat_config_destroy(dsplat_config* cfg);
dsplat_status dsplat_config_set(dsplat_config* cfg, const char* key, const char* value);
dsplat_status dsplat_config_get(const dsplat_config* cfg, const char* key, char* buf, int32_t bufsize);
dsplat_status dsplat_config_load_file(dsplat_config* cfg, const char* path);
/* Writes "key value" lines for every key; returns the required buffer size
 * including the terminator, or -1 on error. */
int32_t dsplat_config_describe(const dsplat_config* cfg, char* buf, int32_t bufsize);

/* --- synthetic dataset generation ------------------------------------------ */
dsplat_status dsplat_synth(const dsplat_config* cfg, const char* out_dir);

/* --- datasets --------------------------------------------------------------- */
typedef struct dsplat_dataset_info {
    int32_t frames, width, height, audio_dim;
    int32_t train_frames, test_frames;
} dsplat_dataset_info;

dsplat_status dsplat_dataset_open(const char* dir, dsplat_dataset** out);
void dsplat_dataset_close(dsplat_dataset* ds);
dsplat_status dsplat_dataset_get_info(const dsplat_dataset* ds, dsplat_dataset_info* out);

/* --- training ---------------------------------------------------------------- */
typedef void (*dsplat_progress_fn)(int32_t iter, int32_t total, double loss, void* user);

/* Trains per the config, writes the final checkpoint to checkpoint_path and a
 * per-iteration CSV log to log_csv_path (pass NULL to disable the log). */
dsplat_status dsplat_train(const dsplat_dataset* ds, const dsplat_config* cfg,
                           const char* checkpoint_path, const char* log_csv_path,
                           dsplat_progress_fn progress, void* user);

/* --- trained models ------------------------------------------------------------ */
dsplat_status dsplat_model_open(const char* checkpoint_path, dsplat_model** out);
void dsplat_model_close(dsplat_model* model);
dsplat_status dsplat_model_gaussian_count(const dsplat_model* model, int64_t* out);

/* Renders frames [frame_begin, frame_end) driven by the dataset's feature
 * tracks into out_dir as PPM (P6) plus float32 planar sidecars if write_f32. */
dsplat_status dsplat_render(const dsplat_model* model, const dsplat_dataset* ds,
                            int32_t frame_begin, int32_t frame_end, const char* out_dir,
                            int32_t write_f32, int32_t threads);

typedef struct dsplat_eval_result {
    double mean_psnr; /* +inf encoded as INFINITY when prediction is exact */
    double mean_ssim;
    double gap_mae_px;
    double gap_range_px;
    double gap_error_frac;
    int32_t frames;
} dsplat_eval_result;

/* split: "train", "test" or "all". */
dsplat_status dsplat_eval(const dsplat_model* model, const dsplat_dataset* ds, const char* split,
                          int32_t threads, dsplat_eval_result* out);

typedef struct dsplat_frame_metrics {
    int32_t frame;
    double psnr, ssim;
    double gap_pred_px, gap_gt_px;
} dsplat_frame_metrics;

/* Per-frame metrics for the split. Writes up to capacity entries into buf and
 * stores the split's frame count in out_count. */
dsplat_status dsplat_eval_frames(const dsplat_model* model, const dsplat_dataset* ds,
                                 const char* split, int32_t threads, dsplat_frame_metrics* buf,
                                 int32_t capacity, int32_t* out_count);

/* --- finite-difference gradient verification ------------------------------------ */
#define DSPLAT_GRADCHECK_CLASSES 9

typedef struct dsplat_gradcheck_result {
    char class_names[DSPLAT_GRADCHECK_CLASSES][8];
    double max_rel_err[DSPLAT_GRADCHECK_CLASSES];
    double max_abs_err[DSPLAT_GRADCHECK_CLASSES];
    int64_t checked[DSPLAT_GRADCHECK_CLASSES];
    int32_t n_classes;
    int32_t pass;
} dsplat_gradcheck_result;

/* Runs the central-difference suites against the analytic gradients on seeded
 * double-precision scenes. Pass 0 for scenes/n_gaussians/image_size to use the
 * defaults (2 scenes, 30 Gaussians, 32x32). */
dsplat_status dsplat_gradcheck(uint64_t seed, int32_t scenes, int32_t n_gaussians,
                               int32_t image_size, dsplat_gradcheck_result* out);

/* --- benchmarking ------------------------------------------------------------------ */
typedef struct dsplat_bench_result {
    double tiled_fps, brute_fps, speedup;
    int32_t frames, width, height;
    int64_t n_gaussians;
} dsplat_bench_result;

/* Frames/second of the tiled renderer vs the brute-force reference at the
 * given resolution. model may be NULL: a seeded scene with n_gaussians (default
 * 1000) is benchmarked instead. */
dsplat_status dsplat_bench(const dsplat_model* model, int32_t width, int32_t height,
                           int32_t threads, int32_t frames, int64_t n_gaussians, uint64_t seed,
                           dsplat_bench_result* out);

/* --- checkpoint size accounting ------------------------------------------------------ */
typedef struct dsplat_size_report {
    int64_t n_gaussians;
    int32_t sh_degree, embed_dim, floats_per_gaussian;
    int64_t header_bytes, attribute_bytes, embedding_bytes, mlp_bytes;
    int64_t payload_bytes, file_bytes;
} dsplat_size_report;

dsplat_status dsplat_model_size_report(const char* checkpoint_path, dsplat_size_report* out);

#ifdef __cplusplus
}
#endif

#endif /* DSPLAT_H */
