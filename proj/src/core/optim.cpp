#include "core/optim.hpp"

#include "core/pipeline.hpp"
#include "core/rasterizer.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>

namespace dsplat {

void TrainConfig::validate() const {
    require(iterations >= 0, ErrorCode::invalid_argument, "iterations must be >= 0");
    require(sh_degree >= 0 && sh_degree <= 3, ErrorCode::invalid_argument, "sh_degree must be 0..3");
    require(embed_dim >= 1, ErrorCode::invalid_argument, "embed_dim must be >= 1");
    require(hidden >= 1, ErrorCode::invalid_argument, "hidden width must be >= 1");
    require(enc_z_freqs >= 0 && enc_e_freqs >= 0, ErrorCode::invalid_argument,
            "positional encoding frequency counts must be >= 0");
    require(loss_weights.face >= 0 && loss_weights.mouth >= 0 && loss_weights.opacity >= 0,
            ErrorCode::invalid_argument, "loss weights must be >= 0");
    require(knn_k >= 1, ErrorCode::invalid_argument, "knn_k must be >= 1");
    require(lambda_w > 0, ErrorCode::invalid_argument, "lambda_w must be > 0");
    require(densify.interval > 0, ErrorCode::invalid_argument, "densify interval must be > 0");
    require(densify.grad_threshold > 0 && densify.prune_opacity > 0 &&
                densify.split_scale_frac > 0,
            ErrorCode::invalid_argument, "densify thresholds must be > 0");
    require(max_points >= 1, ErrorCode::invalid_argument, "max_points must be >= 1");
    require(init_opacity > 0 && init_opacity < 1, ErrorCode::invalid_argument,
            "init_opacity must be in (0,1)");
    AttrMask::parse(deform_attrs);  // throws on unknown tokens
}

void GaussianAdam::init(const GaussianSet& set) {
    const auto n = set.size();
    m_centers.assign(3 * n, 0);
    v_centers.assign(3 * n, 0);
    m_rotations.assign(4 * n, 0);
    v_rotations.assign(4 * n, 0);
    m_scales.assign(3 * n, 0);
    v_scales.assign(3 * n, 0);
    m_logits.assign(n, 0);
    v_logits.assign(n, 0);
    m_sh.assign(static_cast<size_t>(set.sh_dim()) * n, 0);
    v_sh.assign(static_cast<size_t>(set.sh_dim()) * n, 0);
    m_embed.assign(static_cast<size_t>(set.embed_dim) * n, 0);
    v_embed.assign(static_cast<size_t>(set.embed_dim) * n, 0);
}

void GaussianAdam::check_lockstep(const GaussianSet& set) const {
    const size_t n = static_cast<size_t>(set.size());
    require(m_centers.size() == 3 * n && v_centers.size() == 3 * n &&
                m_rotations.size() == 4 * n && v_rotations.size() == 4 * n &&
                m_scales.size() == 3 * n && v_scales.size() == 3 * n && m_logits.size() == n &&
                v_logits.size() == n && m_sh.size() == static_cast<size_t>(set.sh_dim()) * n &&
                v_sh.size() == m_sh.size() &&
                m_embed.size() == static_cast<size_t>(set.embed_dim) * n &&
                v_embed.size() == m_embed.size(),
            ErrorCode::numeric, "Adam moment arrays out of lockstep with the Gaussian set");
}

namespace {

struct Gather {
    // per-source-row actions composed into new arrays
    std::vector<std::int64_t> src;      // source row per output row
    std::vector<std::uint8_t> fresh;    // 1: zero the moments (new Gaussian)

    template <class T>
    std::vector<T> apply(const std::vector<T>& in, int dim, bool zero_fresh) const {
        std::vector<T> out(src.size() * dim);
        for (size_t i = 0; i < src.size(); ++i)
            for (int c = 0; c < dim; ++c)
                out[i * dim + c] =
                    (zero_fresh && fresh[i]) ? T(0) : in[static_cast<size_t>(src[i]) * dim + c];
        return out;
    }
};

}  // namespace

DensifyOutcome densify_and_prune(GaussianSet& set, GaussianAdam& adam, DensifyStats& stats,
                                 const DensifyConfig& cfg, float scene_extent,
                                 std::mt19937_64& rng) {
    const std::int64_t n = set.size();
    require(static_cast<std::int64_t>(stats.grad_accum.size()) == n &&
                static_cast<std::int64_t>(stats.hits.size()) == n,
            ErrorCode::invalid_argument, "densify: stale render statistics");
    adam.check_lockstep(set);

    DensifyOutcome outcome;
    const float split_threshold = cfg.split_scale_frac * scene_extent;

    std::vector<std::uint8_t> prune(n, 0), clone(n, 0), split(n, 0);
    std::int64_t n_clone = 0, n_split = 0, n_prune = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        if (set.opacity(i) < cfg.prune_opacity) {
            prune[i] = 1;
            ++n_prune;
            continue;
        }
        const float avg = stats.hits[i] > 0 ? stats.grad_accum[i] / stats.hits[i] : 0.0f;
        if (avg <= cfg.grad_threshold) continue;
        const Vec3<float> s = set.scale(i);
        if (s.maxCoeff() <= split_threshold) {
            clone[i] = 1;
            ++n_clone;
        } else {
            split[i] = 1;
            ++n_split;
        }
    }

    if (n - n_prune + n_clone + n_split > cfg.max_gaussians) {
        outcome.growth_skipped = true;
        std::fill(clone.begin(), clone.end(), 0);
        std::fill(split.begin(), split.end(), 0);
        n_clone = n_split = 0;
    }
    outcome.cloned = n_clone;
    outcome.split = n_split;
    outcome.pruned = n_prune;

    Gather g;
    g.src.reserve(n - n_prune + n_clone + n_split);
    for (std::int64_t i = 0; i < n; ++i)
        if (!prune[i] && !split[i]) {
            g.src.push_back(i);
            g.fresh.push_back(0);
        }
    std::vector<std::int64_t> clone_rows, child_rows;  // output rows needing sampled offsets
    for (std::int64_t i = 0; i < n; ++i)
        if (clone[i]) {
            clone_rows.push_back(static_cast<std::int64_t>(g.src.size()));
            g.src.push_back(i);
            g.fresh.push_back(1);
        }
    for (std::int64_t i = 0; i < n; ++i)
        if (split[i])
            for (int c = 0; c < 2; ++c) {
                child_rows.push_back(static_cast<std::int64_t>(g.src.size()));
                g.src.push_back(i);
                g.fresh.push_back(1);
            }

    GaussianSet out;
    out.sh_degree = set.sh_degree;
    out.embed_dim = set.embed_dim;
    out.centers = g.apply(set.centers, 3, false);
    out.rotations = g.apply(set.rotations, 4, false);
    out.log_scales = g.apply(set.log_scales, 3, false);
    out.opacity_logits = g.apply(set.opacity_logits, 1, false);
    out.sh = g.apply(set.sh, set.sh_dim(), false);
    out.embeddings = g.apply(set.embeddings, set.embed_dim, false);  // children inherit verbatim

    std::normal_distribution<double> normal(0.0, 1.0);
    auto sample_in_parent = [&](std::int64_t row, float pos_sigma_frac) {
        const std::int64_t parent = g.src[row];
        const Vec4<float> q = set.rotation(parent).normalized();
        const Mat3<float> r = quat_to_rotation(q);
        const Vec3<float> s = set.scale(parent);
        Vec3<float> nvec;
        for (int c = 0; c < 3; ++c) nvec[c] = static_cast<float>(normal(rng));
        const Vec3<float> offset = r * (s.cwiseProduct(nvec) * pos_sigma_frac);
        Eigen::Map<Vec3<float>>(out.centers.data() + 3 * row) += offset;
    };
    for (auto row : clone_rows) sample_in_parent(row, cfg.clone_offset_frac);
    const float log_shrink = std::log(cfg.split_scale_shrink);
    for (auto row : child_rows) {
        sample_in_parent(row, 1.0f);
        for (int c = 0; c < 3; ++c) out.log_scales[3 * row + c] -= log_shrink;
    }

    GaussianAdam new_adam;
    new_adam.m_centers = g.apply(adam.m_centers, 3, true);
    new_adam.v_centers = g.apply(adam.v_centers, 3, true);
    new_adam.m_rotations = g.apply(adam.m_rotations, 4, true);
    new_adam.v_rotations = g.apply(adam.v_rotations, 4, true);
    new_adam.m_scales = g.apply(adam.m_scales, 3, true);
    new_adam.v_scales = g.apply(adam.v_scales, 3, true);
    new_adam.m_logits = g.apply(adam.m_logits, 1, true);
    new_adam.v_logits = g.apply(adam.v_logits, 1, true);
    new_adam.m_sh = g.apply(adam.m_sh, set.sh_dim(), true);
    new_adam.v_sh = g.apply(adam.v_sh, set.sh_dim(), true);
    new_adam.m_embed = g.apply(adam.m_embed, set.embed_dim, true);
    new_adam.v_embed = g.apply(adam.v_embed, set.embed_dim, true);

    set = std::move(out);
    adam = std::move(new_adam);
    stats.reset(set.size());
    adam.check_lockstep(set);
    return outcome;
}

std::vector<FrameMetrics> evaluate_frames(const GaussianSet& set, const DeformField& field,
                                          const FrameDataset& ds, const std::vector<int>& indices,
                                          int threads) {
    std::vector<FrameMetrics> out;
    out.reserve(indices.size());
    for (int idx : indices) {
        GaussianSet deformed = set;
        if (!field.mask.empty()) {
            const auto deltas =
                deform_forward(field, set.embeddings.data(), set.size(), ds.features[idx]);
            deformed = apply_deltas(set, deltas, field.mask);
        }
        const auto fwd = rasterize_forward(deformed, ds.camera, ds.background, threads);
        FrameMetrics m;
        m.frame = idx;
        m.psnr = psnr(fwd.image, ds.images[idx]);
        m.ssim = ssim_metric(fwd.image, ds.images[idx]);
        m.gap_pred_px = measure_aperture_gap(fwd.image, ds.background, ds.mouth_rects[idx]);
        m.gap_gt_px = measure_aperture_gap(ds.images[idx], ds.background, ds.mouth_rects[idx]);
        out.push_back(m);
    }
    return out;
}

EvalSummary evaluate(const GaussianSet& set, const DeformField& field, const FrameDataset& ds,
                     const std::vector<int>& indices, int threads) {
    EvalSummary summary;
    if (indices.empty()) return summary;

    double gap_min = std::numeric_limits<double>::max(), gap_max = -gap_min;
    for (int i = 0; i < ds.frame_count; ++i) {
        const double gap = measure_aperture_gap(ds.images[i], ds.background, ds.mouth_rects[i]);
        gap_min = std::min(gap_min, gap);
        gap_max = std::max(gap_max, gap);
    }
    summary.gap_range_px = gap_max - gap_min;

    for (const auto& m : evaluate_frames(set, field, ds, indices, threads)) {
        summary.mean_psnr += m.psnr;
        summary.mean_ssim += m.ssim;
        summary.gap_mae_px += std::abs(m.gap_pred_px - m.gap_gt_px);
    }
    summary.frames = static_cast<int>(indices.size());
    summary.mean_psnr /= summary.frames;
    summary.mean_ssim /= summary.frames;
    summary.gap_mae_px /= summary.frames;
    summary.gap_error_frac =
        summary.gap_range_px > 0 ? summary.gap_mae_px / summary.gap_range_px : 0.0;
    return summary;
}

namespace {

bool all_finite(const float* p, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i)
        if (!std::isfinite(p[i])) return false;
    return true;
}

struct MlpAdam {
    DeformGradsT<float> m, v;

    void init(const DeformField& field) {
        auto zero_like = [&](DeformGradsT<float>& g) {
            g.trunk1.init_zero(static_cast<int>(field.trunk1.w.rows()),
                               static_cast<int>(field.trunk1.w.cols()));
            g.trunk2.init_zero(static_cast<int>(field.trunk2.w.rows()),
                               static_cast<int>(field.trunk2.w.cols()));
            for (int h = 0; h < kNumDeformHeads; ++h)
                if (field.heads[h]) {
                    g.heads[h].emplace();
                    g.heads[h]->init_zero(static_cast<int>(field.heads[h]->w.rows()),
                                          static_cast<int>(field.heads[h]->w.cols()));
                }
        };
        zero_like(m);
        zero_like(v);
    }
};

float scene_extent_of(const GaussianSet& set) {
    if (set.size() == 0) return 1.0f;
    Vec3<float> centroid = Vec3<float>::Zero();
    for (std::int64_t i = 0; i < set.size(); ++i) centroid += set.center(i);
    centroid /= static_cast<float>(set.size());
    float extent = 0;
    for (std::int64_t i = 0; i < set.size(); ++i)
        extent = std::max(extent, (set.center(i) - centroid).norm());
    return std::max(extent, 1e-6f);
}

}  // namespace

Checkpoint train(const FrameDataset& ds, const TrainConfig& cfg, const ProgressFn& progress) {
    cfg.validate();
    require(!ds.train_indices.empty(), ErrorCode::invalid_argument, "train: empty training split");

    std::ofstream log;
    if (!cfg.log_path.empty()) {
        log.open(cfg.log_path);
        require(log.good(), ErrorCode::io, "train: cannot open log " + cfg.log_path);
        log << "iteration,l1,ssim_face,ssim_mouth,emb_reg,opacity,total,psnr\n";
    }
    auto log_note = [&](const std::string& msg) {
        if (log.is_open()) log << "# " << msg << '\n';
    };

    // initialization from the dataset's point cloud
    PointCloud pc = load_ply(ds.dir + "/points.ply");
    pc = downsample_pointcloud(pc, cfg.max_points, cfg.seed);
    InitOptions init_opts;
    init_opts.sh_degree = cfg.sh_degree;
    init_opts.embed_dim = cfg.embed_dim;
    init_opts.init_opacity = cfg.init_opacity;
    init_opts.fallback_scale = cfg.fallback_scale;
    GaussianSet set = init_gaussians_from_cloud(pc, init_opts, cfg.seed);

    DeformField field;
    field.embed_dim = cfg.embed_dim;
    field.audio_dim = ds.audio_dim;
    field.hidden = cfg.hidden;
    field.sh_dim = set.sh_dim();
    field.enc_z = PosEncoder{cfg.pos_enc ? cfg.enc_z_freqs : 0, true};
    field.enc_e = PosEncoder{cfg.pos_enc ? cfg.enc_e_freqs : 0, true};
    field.mask = AttrMask::parse(cfg.deform_attrs);
    field.init(cfg.seed);

    GaussianAdam adam;
    adam.init(set);
    MlpAdam mlp_adam;
    mlp_adam.init(field);
    DensifyStats stats;
    stats.reset(set.size());

    const bool use_emb_reg = cfg.emb_reg && set.size() >= 2;
    KnnIndex knn;
    if (use_emb_reg) knn = knn_build(set.centers.data(), set.size(), cfg.knn_k, cfg.lambda_w);
    else knn = KnnIndex{set.size(), 0, {}, {}};

    const float scene_extent = scene_extent_of(set);
    const int densify_stop = cfg.densify.stop_iter > 0
                                 ? cfg.densify.stop_iter
                                 : static_cast<int>(0.6 * cfg.iterations);

    auto shuffle_rng = seeded_rng(cfg.seed, 0x5f1e);
    std::vector<int> order = ds.train_indices;
    size_t order_pos = order.size();  // force reshuffle on first use

    auto densify_rng = seeded_rng(cfg.seed, 0xd21f);

    std::uint64_t step_count = 0;
    for (int iter = 1; iter <= cfg.iterations; ++iter) {
        if (order_pos >= order.size()) {
            std::shuffle(order.begin(), order.end(), shuffle_rng);
            order_pos = 0;
        }
        const int frame = order[order_pos++];
        const auto& gt = ds.images[frame];
        const Rect mouth = ds.mouth_rects[frame];
        const DrivingFeatures drive = ds.features[frame];

        Image rendered;
        auto grads = pipeline_gradients<float>(set, field, drive, ds.camera, ds.background, gt,
                                               mouth, knn, cfg.loss_weights, cfg.threads,
                                               &rendered);
        require(std::isfinite(grads.loss.total), ErrorCode::numeric,
                "train: non-finite loss at iteration " + std::to_string(iter));

        ++step_count;
        const float center_lr =
            cfg.lr_centers *
            std::pow(cfg.lr_center_decay, static_cast<float>(iter) / cfg.iterations);

        auto step_group = [&](std::vector<float>& p, const std::vector<float>& grad,
                              std::vector<float>& m, std::vector<float>& v, float lr,
                              const char* name) {
            if (p.empty()) return;
            if (!all_finite(grad.data(), static_cast<std::int64_t>(grad.size()))) {
                log_note("warning: non-finite gradient for " + std::string(name) +
                         " at iteration " + std::to_string(iter) + ", step skipped");
                return;
            }
            adam_step(p.data(), grad.data(), m.data(), v.data(),
                      static_cast<std::int64_t>(p.size()), lr,
                      static_cast<std::int64_t>(step_count));
        };

        step_group(set.centers, grads.d_centers, adam.m_centers, adam.v_centers, center_lr,
                   "centers");
        step_group(set.rotations, grads.d_rotations, adam.m_rotations, adam.v_rotations,
                   cfg.lr_rotations, "rotations");
        step_group(set.log_scales, grads.d_log_scales, adam.m_scales, adam.v_scales, cfg.lr_scales,
                   "scales");
        step_group(set.opacity_logits, grads.d_opacity_logits, adam.m_logits, adam.v_logits,
                   cfg.lr_opacities, "opacities");
        step_group(set.sh, grads.d_sh, adam.m_sh, adam.v_sh, cfg.lr_sh, "sh");
        step_group(set.embeddings, grads.d_embeddings, adam.m_embed, adam.v_embed,
                   cfg.lr_embeddings, "embeddings");

        if (!field.mask.empty()) {
            auto step_linear = [&](LinearT<float>& layer, const LinearT<float>& grad,
                                   LinearT<float>& m, LinearT<float>& v) {
                if (!all_finite(grad.w.data(), grad.w.size()) ||
                    !all_finite(grad.b.data(), grad.b.size())) {
                    log_note("warning: non-finite MLP gradient at iteration " +
                             std::to_string(iter) + ", step skipped");
                    return;
                }
                adam_step(layer.w.data(), grad.w.data(), m.w.data(), v.w.data(), layer.w.size(),
                          cfg.lr_mlp, static_cast<std::int64_t>(step_count));
                adam_step(layer.b.data(), grad.b.data(), m.b.data(), v.b.data(), layer.b.size(),
                          cfg.lr_mlp, static_cast<std::int64_t>(step_count));
            };
            step_linear(field.trunk1, grads.mlp.trunk1, mlp_adam.m.trunk1, mlp_adam.v.trunk1);
            step_linear(field.trunk2, grads.mlp.trunk2, mlp_adam.m.trunk2, mlp_adam.v.trunk2);
            for (int h = 0; h < kNumDeformHeads; ++h)
                if (field.heads[h])
                    step_linear(*field.heads[h], *grads.mlp.heads[h], *mlp_adam.m.heads[h],
                                *mlp_adam.v.heads[h]);
        }

        // densification statistics and events
        for (std::int64_t i = 0; i < set.size(); ++i) {
            stats.grad_accum[i] += grads.screen_grad_norm[i];
            stats.hits[i] += grads.hit[i];
        }
        if (iter >= cfg.densify.start_iter && iter <= densify_stop &&
            iter % cfg.densify.interval == 0) {
            DensifyConfig dcfg = cfg.densify;
            dcfg.stop_iter = densify_stop;
            const auto outcome = densify_and_prune(set, adam, stats, dcfg, scene_extent,
                                                   densify_rng);
            if (outcome.growth_skipped)
                log_note("densify growth skipped at iteration " + std::to_string(iter) +
                         ": would exceed max_gaussians");
            if (use_emb_reg && set.size() >= 2)
                knn = knn_build(set.centers.data(), set.size(), cfg.knn_k, cfg.lambda_w);
            else
                knn = KnnIndex{set.size(), 0, {}, {}};
        }

        if (log.is_open()) {
            const float frame_psnr = psnr(rendered, gt);
            const auto& b = grads.loss;
            log << iter << ',' << b.l1 << ',' << b.ssim_face << ',' << b.ssim_mouth << ','
                << b.emb_reg << ',' << b.opacity << ',' << b.total << ',' << frame_psnr << '\n';
        }
        if (cfg.eval_interval > 0 && iter % cfg.eval_interval == 0 && !ds.test_indices.empty()) {
            const auto ev = evaluate(set, field, ds, ds.test_indices, cfg.threads);
            log_note("eval iter=" + std::to_string(iter) +
                     " psnr=" + std::to_string(ev.mean_psnr) +
                     " ssim=" + std::to_string(ev.mean_ssim));
        }
        if (cfg.checkpoint_interval > 0 && iter % cfg.checkpoint_interval == 0 &&
            !cfg.checkpoint_path.empty()) {
            checkpoint_save({set, field, cfg.seed, static_cast<std::uint64_t>(iter)},
                            cfg.checkpoint_path);
        }
        if (progress) progress(iter, cfg.iterations, grads.loss.total);
    }

    Checkpoint ckpt{std::move(set), std::move(field), cfg.seed,
                    static_cast<std::uint64_t>(cfg.iterations)};
    if (!cfg.checkpoint_path.empty()) checkpoint_save(ckpt, cfg.checkpoint_path);
    return ckpt;
}

}  // namespace dsplat
