#pragma once

#include "core/deform.hpp"
#include "core/losses.hpp"
#include "core/rasterizer.hpp"

namespace dsplat {

// Gradients of total_loss w.r.t. every trainable parameter class, plus the
// driving features, expressed in the unconstrained storage spaces.
template <class T>
struct FullGradientsT {
    std::vector<T> d_centers;         // 3N
    std::vector<T> d_rotations;       // 4N
    std::vector<T> d_log_scales;      // 3N
    std::vector<T> d_opacity_logits;  // N
    std::vector<T> d_sh;              // sh_dim N
    std::vector<T> d_embeddings;      // embed_dim N
    DeformGradsT<T> mlp;              // trunk/head weights + d_audio/d_expression
    std::vector<T> screen_grad_norm;  // densification statistic
    std::vector<std::uint8_t> hit;
    LossBreakdownT<T> loss;
};

// One training step's forward pass: deform -> apply -> rasterize -> loss.
template <class T>
LossBreakdownT<T> pipeline_loss(const GaussianSetT<T>& set, const DeformFieldT<T>& field,
                                const DrivingFeaturesT<T>& drive, const CameraT<T>& cam,
                                const ImageT<T>& background, const ImageT<T>& gt, const Rect& mouth,
                                const KnnIndexT<T>& knn, const LossWeightsT<T>& weights,
                                int threads = 1, ImageT<T>* rendered = nullptr,
                                KinkMargins<T>* margins = nullptr) {
    GaussianSetT<T> deformed;
    if (!field.mask.empty()) {
        const auto deltas = deform_forward(field, set.embeddings.data(), set.size(), drive);
        deformed = apply_deltas(set, deltas, field.mask);
    } else {
        deformed = set;
    }
    auto fwd = rasterize_forward(deformed, cam, background, threads, margins);
    const auto breakdown =
        total_loss(fwd.image, gt, mouth, deformed, set.embeddings.data(), knn, weights);
    if (rendered) *rendered = std::move(fwd.image);
    return breakdown;
}

// Forward plus full reverse-mode gradients. This is the exact chain the
// training loop steps on; the finite-difference suite probes it as-is.
template <class T>
FullGradientsT<T> pipeline_gradients(const GaussianSetT<T>& set, const DeformFieldT<T>& field,
                                     const DrivingFeaturesT<T>& drive, const CameraT<T>& cam,
                                     const ImageT<T>& background, const ImageT<T>& gt,
                                     const Rect& mouth, const KnnIndexT<T>& knn,
                                     const LossWeightsT<T>& weights, int threads = 1,
                                     ImageT<T>* rendered = nullptr) {
    const std::int64_t n = set.size();
    FullGradientsT<T> out;

    DeformActsT<T> acts;
    DeformDeltasT<T> deltas;
    GaussianSetT<T> deformed;
    if (!field.mask.empty()) {
        deltas = deform_forward(field, set.embeddings.data(), n, drive, &acts);
        deformed = apply_deltas(set, deltas, field.mask);
    } else {
        deformed = set;
    }
    auto fwd = rasterize_forward(deformed, cam, background, threads);
    out.loss = total_loss(fwd.image, gt, mouth, deformed, set.embeddings.data(), knn, weights);

    ImageT<T> d_image(cam.width, cam.height);
    std::vector<T> d_logits_def(n, T(0));
    out.d_embeddings.assign(set.embeddings.size(), T(0));
    total_loss_backward(fwd.image, gt, mouth, deformed, set.embeddings.data(), knn, weights,
                        d_image, d_logits_def.data(), out.d_embeddings.data());

    auto rg = rasterize_backward(deformed, cam, fwd.saved, background, d_image, threads);

    // activated -> unconstrained chains, evaluated at the deformed values
    out.d_centers = std::move(rg.d_centers);
    out.d_log_scales.resize(3 * n);
    for (std::int64_t i = 0; i < n; ++i) {
        const Vec3<T> s = deformed.scale(i);
        for (int c = 0; c < 3; ++c) out.d_log_scales[3 * i + c] = rg.d_scales[3 * i + c] * s[c];
        const T a = deformed.opacity(i);
        d_logits_def[i] += rg.d_opacities[i] * a * (1 - a);
    }
    out.d_opacity_logits = std::move(d_logits_def);
    out.d_sh = std::move(rg.d_sh);

    // rotation: deformed q = normalize(q_can + delta) when the head exists,
    // identity otherwise (the rasterizer handles its own normalization)
    out.d_rotations = rg.d_rotations;
    if (field.mask.has(DeformAttr::rotation)) {
        for (std::int64_t i = 0; i < n; ++i) {
            Vec4<T> w = set.rotation(i);
            if (deltas.d_rotation.size() != 0)
                w += Eigen::Map<const Vec4<T>>(deltas.d_rotation.data() + 4 * i);
            const Eigen::Map<const Vec4<T>> d_unit(rg.d_rotations.data() + 4 * i);
            Eigen::Map<Vec4<T>>(out.d_rotations.data() + 4 * i) =
                normalize_backward<T, 4>(w, d_unit);
        }
    }

    if (!field.mask.empty()) {
        DeformDeltasT<T> d_deltas;
        d_deltas.n = n;
        auto as_matrix = [&](const std::vector<T>& v, int dim) {
            return Eigen::Map<const MatX<T>>(v.data(), n, dim);
        };
        if (field.mask.has(DeformAttr::center)) d_deltas.d_center = as_matrix(out.d_centers, 3);
        if (field.mask.has(DeformAttr::opacity))
            d_deltas.d_opacity = as_matrix(out.d_opacity_logits, 1);
        if (field.mask.has(DeformAttr::rotation)) d_deltas.d_rotation = as_matrix(out.d_rotations, 4);
        if (field.mask.has(DeformAttr::scale)) d_deltas.d_log_scale = as_matrix(out.d_log_scales, 3);
        if (field.mask.has(DeformAttr::sh)) d_deltas.d_sh = as_matrix(out.d_sh, set.sh_dim());
        out.mlp = deform_backward(field, set.embeddings.data(), n, drive, acts, d_deltas);
        for (size_t i = 0; i < out.d_embeddings.size(); ++i)
            out.d_embeddings[i] += out.mlp.d_embeddings.data()[i];
    } else {
        out.mlp.d_embeddings = MatX<T>::Zero(n, set.embed_dim);
        out.mlp.d_audio = VecX<T>::Zero(drive.audio.size());
        out.mlp.d_expression = VecX<T>::Zero(drive.expression.size());
    }

    out.screen_grad_norm = std::move(rg.screen_grad_norm);
    out.hit = std::move(rg.hit);
    if (rendered) *rendered = std::move(fwd.image);
    return out;
}

}  // namespace dsplat
