#pragma once

#include "core/deform.hpp"
#include "core/gaussian.hpp"
#include "core/losses.hpp"
#include "core/scene_io.hpp"

#include <functional>
#include <string>

namespace dsplat {

// Standard bias-corrected Adam on a flat parameter array. `t` is the
// 1-based step count after this update.
template <class T>
void adam_step(T* params, const T* grads, T* m, T* v, std::int64_t n, T lr, std::int64_t t,
               T beta1 = T(0.9), T beta2 = T(0.999), T eps = T(1e-8)) {
    require(t >= 1, ErrorCode::invalid_argument, "adam_step: step count must be >= 1");
    const T bc1 = T(1) - std::pow(beta1, T(t));
    const T bc2 = T(1) - std::pow(beta2, T(t));
    for (std::int64_t i = 0; i < n; ++i) {
        m[i] = beta1 * m[i] + (T(1) - beta1) * grads[i];
        v[i] = beta2 * v[i] + (T(1) - beta2) * grads[i] * grads[i];
        const T mhat = m[i] / bc1;
        const T vhat = v[i] / bc2;
        params[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

struct DensifyConfig {
    int interval = 100;
    int start_iter = 500;
    int stop_iter = 0;             // 0: derived as 60% of total iterations
    float grad_threshold = 2e-4f;  // mean NDC-space positional gradient
    float split_scale_frac = 0.01f;  // of scene extent
    float prune_opacity = 5e-3f;
    std::int64_t max_gaussians = 6000;
    float clone_offset_frac = 0.05f;  // of the Gaussian's own scale
    float split_scale_shrink = 1.6f;
};

struct TrainConfig {
    int iterations = 8000;
    std::uint64_t seed = 42;
    bool deterministic = true;
    int threads = 0;  // 0: all host cores

    int sh_degree = 1;
    int embed_dim = 32;
    int audio_dim = 8;  // overridden by the dataset manifest
    std::string deform_attrs = "mu,alpha";
    int hidden = 64;
    int enc_z_freqs = 4;
    int enc_e_freqs = 2;
    bool pos_enc = true;   // ablation: identity encoding for z and e
    bool emb_reg = true;   // ablation: drop the embedding smoothness term

    LossWeights loss_weights;
    float lambda_w = 2000.0f;
    int knn_k = 20;

    float lr_centers = 1.6e-4f;
    float lr_center_decay = 0.01f;  // final multiplier, exponential over the run
    float lr_rotations = 1e-3f;
    float lr_scales = 5e-3f;
    float lr_opacities = 5e-2f;
    float lr_sh = 2.5e-3f;
    float lr_embeddings = 1e-3f;
    float lr_mlp = 5e-4f;

    DensifyConfig densify;

    std::int64_t max_points = 100000;  // point-cloud downsample bound
    float init_opacity = 0.1f;
    float fallback_scale = 0.1f;

    int eval_interval = 1000;       // held-out metrics cadence, 0 disables
    int checkpoint_interval = 0;    // periodic checkpoint cadence, 0 disables
    std::string log_path;           // training CSV; empty disables
    std::string checkpoint_path;    // final checkpoint; empty disables saving

    void validate() const;
};

// Adam moments for every per-Gaussian parameter group; resized in lockstep
// with the GaussianSet across densification events.
struct GaussianAdam {
    std::vector<float> m_centers, v_centers;
    std::vector<float> m_rotations, v_rotations;
    std::vector<float> m_scales, v_scales;
    std::vector<float> m_logits, v_logits;
    std::vector<float> m_sh, v_sh;
    std::vector<float> m_embed, v_embed;

    void init(const GaussianSet& set);
    void check_lockstep(const GaussianSet& set) const;
};

struct DensifyStats {
    std::vector<float> grad_accum;  // summed NDC positional gradient norms
    std::vector<int> hits;

    void reset(std::int64_t n) {
        grad_accum.assign(n, 0.0f);
        hits.assign(n, 0);
    }
};

struct DensifyOutcome {
    std::int64_t cloned = 0, split = 0, pruned = 0;
    bool growth_skipped = false;
};

// Clone small / split large high-gradient Gaussians, prune transparent ones.
// Children inherit the parent's embedding verbatim; new Adam moments start
// at zero; surviving rows are untouched.
DensifyOutcome densify_and_prune(GaussianSet& set, GaussianAdam& adam, DensifyStats& stats,
                                 const DensifyConfig& cfg, float scene_extent,
                                 std::mt19937_64& rng);

struct FrameMetrics {
    int frame = 0;
    double psnr = 0;
    double ssim = 0;
    double gap_pred_px = 0;
    double gap_gt_px = 0;
};

struct EvalSummary {
    double mean_psnr = 0;
    double mean_ssim = 0;
    double gap_mae_px = 0;       // |measured gap(pred) - measured gap(gt)| mean
    double gap_range_px = 0;     // gt gap dynamic range over the whole dataset
    double gap_error_frac = 0;   // gap_mae / gap_range
    int frames = 0;
};

std::vector<FrameMetrics> evaluate_frames(const GaussianSet& set, const DeformField& field,
                                          const FrameDataset& ds, const std::vector<int>& indices,
                                          int threads);

EvalSummary evaluate(const GaussianSet& set, const DeformField& field, const FrameDataset& ds,
                     const std::vector<int>& indices, int threads);

using ProgressFn = std::function<void(int iter, int total, double loss)>;

// Joint optimization of canonical attributes, embeddings, and the deform MLP.
Checkpoint train(const FrameDataset& ds, const TrainConfig& cfg, const ProgressFn& progress = {});

}  // namespace dsplat
