#pragma once

#include "core/camera.hpp"
#include "core/common.hpp"
#include "core/gaussian.hpp"
#include "core/image.hpp"

#include <algorithm>
#include <limits>

namespace dsplat {

constexpr int kTileSize = 16;
constexpr double kAlphaClamp = 0.99;          // max per-contribution alpha
constexpr double kMinAlpha = 1.0 / 255.0;     // contributions below this are skipped
constexpr double kMinTransmittance = 1e-4;    // blending stops once T would drop below
// exp-free skip bound: power below ln(1/255) forces alpha' < 1/255 for any
// opacity < 1, so the contribution would be skipped anyway
constexpr double kPowerSkip = -5.55;

// Distances of the forward pass from its discrete decision boundaries
// (skip/clamp/stop thresholds, tile edges, frustum planes, depth ties).
// Finite-difference checks use these to pick scenes where a perturbation
// cannot flip any branch.
template <class T>
struct KinkMargins {
    T alpha_skip = std::numeric_limits<T>::max();    // min |alpha' - 1/255|
    T alpha_clamp = std::numeric_limits<T>::max();   // min |alpha' - 0.99|
    T transmit_stop = std::numeric_limits<T>::max(); // min |T_new - 1e-4|
    T power_sign = std::numeric_limits<T>::max();    // min |power| (power > 0 skip)
    T color_clamp = std::numeric_limits<T>::max();   // min |unclamped channel|
    T tile_edge = std::numeric_limits<T>::max();     // min frac distance of bbox/tile edges, tile units
    T frustum = std::numeric_limits<T>::max();       // min distance to cull boundaries
    T depth_gap = std::numeric_limits<T>::max();     // min depth gap between sort neighbours

    void merge(const KinkMargins& o) {
        alpha_skip = std::min(alpha_skip, o.alpha_skip);
        alpha_clamp = std::min(alpha_clamp, o.alpha_clamp);
        transmit_stop = std::min(transmit_stop, o.transmit_stop);
        power_sign = std::min(power_sign, o.power_sign);
        color_clamp = std::min(color_clamp, o.color_clamp);
        tile_edge = std::min(tile_edge, o.tile_edge);
        frustum = std::min(frustum, o.frustum);
        depth_gap = std::min(depth_gap, o.depth_gap);
    }
    T min_blend() const {
        return std::min({alpha_skip, alpha_clamp, transmit_stop, power_sign, color_clamp});
    }
};

// Per-entry blend inputs packed contiguously: u, v, conic_a, conic_b,
// conic_d, opacity, r, g, b.
constexpr int kPackStride = 9;

template <class T>
struct TileGridT {
    int tiles_x = 0, tiles_y = 0;
    std::vector<std::vector<std::int32_t>> lists;  // per tile, indices sorted by (depth, index)
    std::vector<std::vector<T>> packed;            // per tile, kPackStride per entry
};

// Everything the backward pass needs to re-trace the forward blend.
template <class T>
struct RenderIntermediatesT {
    std::int64_t n_gaussians = 0;
    int width = 0, height = 0;
    std::vector<ProjectedGaussian<T>> proj;  // dense, valid where visible
    std::vector<std::uint8_t> visible;
    std::vector<T> colors;        // 3 per Gaussian, clamped
    std::vector<T> colors_raw;    // 3 per Gaussian, before the >=0 clamp
    std::vector<T> opacities;     // activated, cached for the blend loops
    TileGridT<T> tiles;
    std::vector<T> final_transmittance;    // per pixel
    std::vector<T> weight_sum;             // per pixel, sum of blend weights
    std::vector<std::int32_t> last_contrib;  // per pixel, 1-based walk position of last blend
};

template <class T>
struct RenderResultT {
    ImageT<T> image;
    RenderIntermediatesT<T> saved;
};

// Gradients w.r.t. activated per-Gaussian attributes; zero for culled ones.
// The caller chains scale/opacity back through exp/sigmoid.
template <class T>
struct RenderGradientsT {
    std::vector<T> d_centers;     // 3N
    std::vector<T> d_rotations;   // 4N, raw quaternion
    std::vector<T> d_scales;      // 3N, activated
    std::vector<T> d_opacities;   // N, activated
    std::vector<T> d_sh;          // sh_dim * N
    std::vector<T> screen_grad_norm;  // N, |dL/d(uv)| in NDC units, for densification
    std::vector<std::uint8_t> hit;    // N, 1 if the Gaussian was rasterized

    void init(std::int64_t n, int sh_dim) {
        d_centers.assign(3 * n, T(0));
        d_rotations.assign(4 * n, T(0));
        d_scales.assign(3 * n, T(0));
        d_opacities.assign(n, T(0));
        d_sh.assign(static_cast<size_t>(sh_dim) * n, T(0));
        screen_grad_norm.assign(n, T(0));
        hit.assign(n, 0);
    }
};

namespace detail {

template <class T>
void frustum_margin(const Vec3<T>& t, const CameraT<T>& cam, KinkMargins<T>* m) {
    if (!m) return;
    const T tan_x = T(0.5) * cam.width / cam.fx * T(kFrustumMargin);
    const T tan_y = T(0.5) * cam.height / cam.fy * T(kFrustumMargin);
    m->frustum = std::min({m->frustum, std::abs(t[2] - cam.near_clip), std::abs(cam.far_clip - t[2]),
                           std::abs(std::abs(t[0] / t[2]) - tan_x) * std::abs(t[2]),
                           std::abs(std::abs(t[1] / t[2]) - tan_y) * std::abs(t[2])});
}

// Activate, project and colorize every Gaussian. Shared by the tiled and
// brute-force paths so the two produce bit-identical per-Gaussian inputs.
template <class T>
void project_all(const GaussianSetT<T>& set, const CameraT<T>& cam, int threads,
                 RenderIntermediatesT<T>& out, KinkMargins<T>* margins) {
    const std::int64_t n = set.size();
    out.n_gaussians = n;
    out.width = cam.width;
    out.height = cam.height;
    out.proj.assign(n, {});
    out.visible.assign(n, 0);
    out.colors.assign(3 * n, T(0));
    out.colors_raw.assign(3 * n, T(0));
    out.opacities.assign(n, T(0));
    const Vec3<T> cam_pos = cam.position();
    const int sh_dim = set.sh_dim();

    std::vector<KinkMargins<T>> local(margins ? static_cast<size_t>(n) : 0);
    parallel_for(0, n, threads, [&](std::int64_t i) {
        const Vec4<T> q = set.rotation(i);
        const Vec3<T> s = set.scale(i);
        const Cov3<T> cov = covariance_from_rotation_scale<T>(q, s);
        const Vec3<T> mu = set.center(i);
        if (margins) frustum_margin(cam.world_to_cam(mu), cam, &local[i]);
        auto p = project_gaussian(mu, cov, cam);
        if (!p) return;
        out.proj[i] = *p;
        out.visible[i] = 1;
        out.opacities[i] = set.opacity(i);
        const Vec3<T> dir = (mu - cam_pos).normalized();
        T basis[16];
        const int k = detail::sh_basis(set.sh_degree, dir, basis);
        for (int c = 0; c < 3; ++c) {
            T v = T(0.5);
            for (int b = 0; b < k; ++b) v += basis[b] * set.sh_ptr(i)[3 * b + c];
            out.colors_raw[3 * i + c] = v;
            out.colors[3 * i + c] = std::max(T(0), v);
            if (margins) local[i].color_clamp = std::min(local[i].color_clamp, std::abs(v));
        }
    });
    if (margins)
        for (auto& lm : local) margins->merge(lm);
}

template <class T>
void pack_entries(const RenderIntermediatesT<T>& inter, const std::vector<std::int32_t>& list,
                  std::vector<T>& packed) {
    packed.resize(list.size() * kPackStride);
    for (size_t k = 0; k < list.size(); ++k) {
        const auto& p = inter.proj[list[k]];
        T* e = packed.data() + k * kPackStride;
        e[0] = p.u;
        e[1] = p.v;
        e[2] = p.conic_a;
        e[3] = p.conic_b;
        e[4] = p.conic_d;
        e[5] = inter.opacities[list[k]];
        e[6] = inter.colors[3 * list[k] + 0];
        e[7] = inter.colors[3 * list[k] + 1];
        e[8] = inter.colors[3 * list[k] + 2];
    }
}

template <class T>
void build_tiles(RenderIntermediatesT<T>& inter, KinkMargins<T>* margins) {
    auto& grid = inter.tiles;
    grid.tiles_x = (inter.width + kTileSize - 1) / kTileSize;
    grid.tiles_y = (inter.height + kTileSize - 1) / kTileSize;
    grid.lists.assign(static_cast<size_t>(grid.tiles_x) * grid.tiles_y, {});

    for (std::int64_t i = 0; i < inter.n_gaussians; ++i) {
        if (!inter.visible[i]) continue;
        const auto& p = inter.proj[i];
        const T edges[4] = {(p.u - p.radius) / kTileSize, (p.u + p.radius) / kTileSize,
                            (p.v - p.radius) / kTileSize, (p.v + p.radius) / kTileSize};
        if (margins)
            for (T e : edges) {
                const T frac = e - std::floor(e);
                margins->tile_edge = std::min({margins->tile_edge, frac, T(1) - frac});
            }
        const int x0 = std::clamp(static_cast<int>(std::floor(edges[0])), 0, grid.tiles_x - 1);
        const int x1 = std::clamp(static_cast<int>(std::floor(edges[1])), 0, grid.tiles_x - 1);
        const int y0 = std::clamp(static_cast<int>(std::floor(edges[2])), 0, grid.tiles_y - 1);
        const int y1 = std::clamp(static_cast<int>(std::floor(edges[3])), 0, grid.tiles_y - 1);
        if (p.u + p.radius < 0 || p.u - p.radius > inter.width ||
            p.v + p.radius < 0 || p.v - p.radius > inter.height)
            continue;
        for (int ty = y0; ty <= y1; ++ty)
            for (int tx = x0; tx <= x1; ++tx)
                grid.lists[static_cast<size_t>(ty) * grid.tiles_x + tx].push_back(static_cast<std::int32_t>(i));
    }
    grid.packed.assign(grid.lists.size(), {});
    for (size_t tile = 0; tile < grid.lists.size(); ++tile) {
        auto& list = grid.lists[tile];
        std::sort(list.begin(), list.end(), [&](std::int32_t a, std::int32_t b) {
            const T da = inter.proj[a].depth, db = inter.proj[b].depth;
            return da != db ? da < db : a < b;
        });
        if (margins)
            for (size_t k = 1; k < list.size(); ++k)
                margins->depth_gap = std::min(margins->depth_gap,
                                              inter.proj[list[k]].depth - inter.proj[list[k - 1]].depth);
        pack_entries(inter, list, grid.packed[tile]);
    }
}

// Front-to-back blend of one pixel over a sorted index list. Writes the
// composited color and returns bookkeeping for the backward re-trace.
template <class T>
struct BlendOutcome {
    T final_T;
    T weight_sum;
    std::int32_t last_contrib;
};

template <class T>
BlendOutcome<T> blend_pixel(const T* packed, size_t list_len, T px, T py, const T* bg, T* out_rgb,
                            KinkMargins<T>* margins) {
    T transmittance = T(1);
    T rgb[3] = {0, 0, 0};
    T weight_sum = T(0);
    std::int32_t last = 0;
    for (size_t k = 0; k < list_len; ++k) {
        const T* e = packed + k * kPackStride;
        const T dx = px - e[0], dy = py - e[1];
        const T power = T(-0.5) * (e[2] * dx * dx + e[4] * dy * dy) - e[3] * dx * dy;
        if (margins) margins->power_sign = std::min(margins->power_sign, std::abs(power));
        else if (power < T(kPowerSkip)) continue;
        if (power > 0) continue;
        const T alpha_raw = e[5] * std::exp(power);
        const T alpha = std::min(T(kAlphaClamp), alpha_raw);
        if (margins) {
            margins->alpha_skip = std::min(margins->alpha_skip, std::abs(alpha - T(kMinAlpha)));
            margins->alpha_clamp = std::min(margins->alpha_clamp, std::abs(alpha_raw - T(kAlphaClamp)));
        }
        if (alpha < T(kMinAlpha)) continue;
        const T next_T = transmittance * (1 - alpha);
        if (margins) margins->transmit_stop = std::min(margins->transmit_stop, std::abs(next_T - T(kMinTransmittance)));
        if (next_T < T(kMinTransmittance)) break;
        const T w = alpha * transmittance;
        for (int c = 0; c < 3; ++c) rgb[c] += w * e[6 + c];
        weight_sum += w;
        transmittance = next_T;
        last = static_cast<std::int32_t>(k) + 1;
    }
    for (int c = 0; c < 3; ++c) out_rgb[c] = rgb[c] + transmittance * bg[c];
    return {transmittance, weight_sum, last};
}

}  // namespace detail

// Tile-based forward pass: per pixel, depth-ordered alpha blend of the
// Gaussians whose screen footprint overlaps the pixel's tile, composited
// over the background plate.
template <class T>
RenderResultT<T> rasterize_forward(const GaussianSetT<T>& set, const CameraT<T>& cam,
                                   const ImageT<T>& background, int threads = 1,
                                   KinkMargins<T>* margins = nullptr) {
    set.validate();
    cam.validate();
    require(background.width == cam.width && background.height == cam.height,
            ErrorCode::invalid_argument, "rasterize_forward: background size does not match camera");

    RenderResultT<T> res;
    res.image = ImageT<T>(cam.width, cam.height);
    auto& inter = res.saved;
    detail::project_all(set, cam, threads, inter, margins);
    detail::build_tiles(inter, margins);

    const std::int64_t n_pix = res.image.pixels();
    inter.final_transmittance.assign(n_pix, T(1));
    inter.weight_sum.assign(n_pix, T(0));
    inter.last_contrib.assign(n_pix, 0);

    const auto& grid = inter.tiles;
    std::vector<KinkMargins<T>> tile_margins(margins ? grid.lists.size() : 0);
    parallel_for(0, static_cast<std::int64_t>(grid.lists.size()), threads, [&](std::int64_t tile) {
        const auto& packed = grid.packed[tile];
        const size_t len = grid.lists[tile].size();
        const int tx = static_cast<int>(tile % grid.tiles_x);
        const int ty = static_cast<int>(tile / grid.tiles_x);
        KinkMargins<T>* tm = margins ? &tile_margins[tile] : nullptr;
        for (int y = ty * kTileSize; y < std::min((ty + 1) * kTileSize, cam.height); ++y)
            for (int x = tx * kTileSize; x < std::min((tx + 1) * kTileSize, cam.width); ++x) {
                const std::int64_t pix = static_cast<std::int64_t>(y) * cam.width + x;
                const auto outcome = detail::blend_pixel(packed.data(), len, T(x), T(y),
                                                         background.at(x, y), res.image.at(x, y),
                                                         tm);
                inter.final_transmittance[pix] = outcome.final_T;
                inter.weight_sum[pix] = outcome.weight_sum;
                inter.last_contrib[pix] = outcome.last_contrib;
            }
    });
    if (margins)
        for (auto& tm : tile_margins) margins->merge(tm);
    return res;
}

// Reference renderer: identical blend math over one global depth-sorted
// list, every Gaussian considered at every pixel. Oracle for the tiled path.
template <class T>
ImageT<T> rasterize_brute_force(const GaussianSetT<T>& set, const CameraT<T>& cam,
                                const ImageT<T>& background, int threads = 1) {
    set.validate();
    cam.validate();
    require(background.width == cam.width && background.height == cam.height,
            ErrorCode::invalid_argument, "rasterize_brute_force: background size does not match camera");

    RenderIntermediatesT<T> inter;
    detail::project_all(set, cam, threads, inter, static_cast<KinkMargins<T>*>(nullptr));
    std::vector<std::int32_t> order;
    order.reserve(inter.n_gaussians);
    for (std::int64_t i = 0; i < inter.n_gaussians; ++i)
        if (inter.visible[i]) order.push_back(static_cast<std::int32_t>(i));
    std::sort(order.begin(), order.end(), [&](std::int32_t a, std::int32_t b) {
        const T da = inter.proj[a].depth, db = inter.proj[b].depth;
        return da != db ? da < db : a < b;
    });
    std::vector<T> packed;
    detail::pack_entries(inter, order, packed);

    ImageT<T> image(cam.width, cam.height);
    parallel_for(0, cam.height, threads, [&](std::int64_t y) {
        for (int x = 0; x < cam.width; ++x)
            detail::blend_pixel(packed.data(), order.size(), T(x), T(static_cast<int>(y)),
                                background.at(x, static_cast<int>(y)), image.at(x, static_cast<int>(y)),
                                static_cast<KinkMargins<T>*>(nullptr));
    });
    return image;
}

namespace detail {

// Per tile-list-entry blend gradients, accumulated pixel by pixel.
template <class T>
struct EntryGrad {
    T du{}, dv{}, d_conic_a{}, d_conic_b{}, d_conic_d{};
    T d_alpha{};   // activated opacity
    T d_rgb[3] = {0, 0, 0};
};

template <class T>
void geometric_backward(const GaussianSetT<T>& set, const CameraT<T>& cam, std::int64_t i,
                        const ProjectedGaussian<T>& p, const EntryGrad<T>& eg, const T* colors_raw,
                        RenderGradientsT<T>& out) {
    // conic -> screen covariance. Treat the conic gradient as a symmetric
    // matrix gradient (off-diagonal halved) so d(cov2) = -Q G Q.
    Mat2<T> q;
    q << p.conic_a, p.conic_b, p.conic_b, p.conic_d;
    Mat2<T> gq;
    gq << eg.d_conic_a, eg.d_conic_b / 2, eg.d_conic_b / 2, eg.d_conic_d;
    const Mat2<T> g_cov2_full = -(q * gq * q);  // full-matrix gradient of symmetric cov2

    // cov2 = M Sigma3 M^T + dilation, M = J R.
    const Vec3<T> mu = set.center(i);
    const Vec3<T> t = cam.world_to_cam(mu);
    const Mat23<T> jac = projection_jacobian(t, cam);
    const Mat23<T> m = jac * cam.rot;
    const Vec4<T> q_raw = set.rotation(i);
    const Vec4<T> q_unit = q_raw.normalized();
    const Mat3<T> rot = quat_to_rotation(q_unit);
    const Vec3<T> s = set.scale(i);
    const Mat3<T> v = rot * s.asDiagonal();
    const Mat3<T> sigma3 = v * v.transpose();

    const Mat3<T> g_sigma3 = m.transpose() * g_cov2_full * m;
    const Mat23<T> g_m = 2 * g_cov2_full * m * sigma3;
    const Mat23<T> g_j = g_m * cam.rot.transpose();

    // J entries depend on t.
    const T inv_z = T(1) / t[2], inv_z2 = inv_z * inv_z, inv_z3 = inv_z2 * inv_z;
    Vec3<T> g_t = Vec3<T>::Zero();
    g_t[0] += g_j(0, 2) * (-cam.fx * inv_z2);
    g_t[1] += g_j(1, 2) * (-cam.fy * inv_z2);
    g_t[2] += g_j(0, 0) * (-cam.fx * inv_z2) + g_j(1, 1) * (-cam.fy * inv_z2) +
              g_j(0, 2) * (2 * cam.fx * t[0] * inv_z3) + g_j(1, 2) * (2 * cam.fy * t[1] * inv_z3);

    // screen mean
    g_t += jac.transpose() * Vec2<T>(eg.du, eg.dv);

    Eigen::Map<Vec3<T>>(out.d_centers.data() + 3 * i) += cam.rot.transpose() * g_t;

    // Sigma3 = V V^T, V = R diag(s)
    const Mat3<T> g_v = 2 * g_sigma3 * v;
    const Mat3<T> rt_gv = rot.transpose() * g_v;
    Eigen::Map<Vec3<T>>(out.d_scales.data() + 3 * i) += rt_gv.diagonal();
    const Mat3<T> g_rot = g_v * s.asDiagonal();
    const Vec4<T> g_q_unit = quat_to_rotation_backward(q_unit, g_rot);
    Eigen::Map<Vec4<T>>(out.d_rotations.data() + 4 * i) += normalize_backward(q_raw, g_q_unit);

    out.d_opacities[i] += eg.d_alpha;

    // color -> SH coefficients and view direction -> center
    const Vec3<T> cam_pos = cam.position();
    const Vec3<T> rel = mu - cam_pos;
    const Vec3<T> dir = rel.normalized();
    const Vec3<T> raw_sign(colors_raw[0], colors_raw[1], colors_raw[2]);
    const Vec3<T> d_rgb(eg.d_rgb[0], eg.d_rgb[1], eg.d_rgb[2]);
    const Vec3<T> d_dir = eval_sh_color_backward(set.sh_ptr(i), set.sh_dim(), dir, set.sh_degree,
                                                 raw_sign, d_rgb,
                                                 out.d_sh.data() + static_cast<size_t>(set.sh_dim()) * i);
    Eigen::Map<Vec3<T>>(out.d_centers.data() + 3 * i) += normalize_backward(rel, d_dir);

    // densification statistic in NDC units
    const T gx = eg.du * T(0.5) * cam.width;
    const T gy = eg.dv * T(0.5) * cam.height;
    out.screen_grad_norm[i] += std::sqrt(gx * gx + gy * gy);
}

}  // namespace detail

// Analytic adjoint of rasterize_forward. Re-traces each pixel's blend
// back-to-front, reconstructing transmittances by division, then chains the
// per-Gaussian screen gradients through projection, covariance and SH.
// Per-Gaussian accumulation reduces tile lists in a fixed order, so the
// result is independent of the thread count.
template <class T>
RenderGradientsT<T> rasterize_backward(const GaussianSetT<T>& set, const CameraT<T>& cam,
                                       const RenderIntermediatesT<T>& saved,
                                       const ImageT<T>& background, const ImageT<T>& grad_output,
                                       int threads = 1) {
    require(saved.n_gaussians == set.size() && saved.width == cam.width && saved.height == cam.height,
            ErrorCode::invalid_argument, "rasterize_backward: stale intermediates");
    require(grad_output.width == cam.width && grad_output.height == cam.height &&
                background.width == cam.width && background.height == cam.height,
            ErrorCode::invalid_argument, "rasterize_backward: image size mismatch");

    const auto& grid = saved.tiles;
    std::vector<std::vector<detail::EntryGrad<T>>> tile_grads(grid.lists.size());

    parallel_for(0, static_cast<std::int64_t>(grid.lists.size()), threads, [&](std::int64_t tile) {
        const auto& list = grid.lists[tile];
        if (list.empty()) return;
        const T* packed = grid.packed[tile].data();
        auto& grads = tile_grads[tile];
        grads.assign(list.size(), {});
        const int tx = static_cast<int>(tile % grid.tiles_x);
        const int ty = static_cast<int>(tile / grid.tiles_x);
        for (int y = ty * kTileSize; y < std::min((ty + 1) * kTileSize, cam.height); ++y)
            for (int x = tx * kTileSize; x < std::min((tx + 1) * kTileSize, cam.width); ++x) {
                const std::int64_t pix = static_cast<std::int64_t>(y) * cam.width + x;
                const std::int32_t last = saved.last_contrib[pix];
                if (last == 0) continue;
                const T* d_pix = grad_output.at(x, y);
                const T* bg = background.at(x, y);
                const T bg_dot = bg[0] * d_pix[0] + bg[1] * d_pix[1] + bg[2] * d_pix[2];
                const T t_final = saved.final_transmittance[pix];
                T transmittance = t_final;
                T accum[3] = {0, 0, 0};
                T last_alpha = 0;
                T last_color[3] = {0, 0, 0};
                for (std::int32_t k = last - 1; k >= 0; --k) {
                    const T* e = packed + static_cast<size_t>(k) * kPackStride;
                    const T dx = T(x) - e[0], dy = T(y) - e[1];
                    const T power = T(-0.5) * (e[2] * dx * dx + e[4] * dy * dy) - e[3] * dx * dy;
                    if (power > 0 || power < T(kPowerSkip)) continue;
                    const T g2 = std::exp(power);
                    const T opacity = e[5];
                    const T alpha_raw = opacity * g2;
                    const bool clamped = alpha_raw > T(kAlphaClamp);
                    const T alpha = clamped ? T(kAlphaClamp) : alpha_raw;
                    if (alpha < T(kMinAlpha)) continue;
                    transmittance = transmittance / (1 - alpha);

                    auto& eg = grads[k];
                    T d_alpha_prime = T(0);
                    for (int c = 0; c < 3; ++c) {
                        accum[c] = last_alpha * last_color[c] + (1 - last_alpha) * accum[c];
                        last_color[c] = e[6 + c];
                        d_alpha_prime += (e[6 + c] - accum[c]) * d_pix[c];
                        eg.d_rgb[c] += alpha * transmittance * d_pix[c];
                    }
                    d_alpha_prime *= transmittance;
                    d_alpha_prime -= t_final / (1 - alpha) * bg_dot;
                    last_alpha = alpha;

                    if (!clamped) {
                        const T d_g2 = opacity * d_alpha_prime;
                        eg.d_alpha += g2 * d_alpha_prime;
                        const T d_power = d_g2 * g2;
                        eg.d_conic_a += T(-0.5) * dx * dx * d_power;
                        eg.d_conic_b += -dx * dy * d_power;
                        eg.d_conic_d += T(-0.5) * dy * dy * d_power;
                        const T d_dx = -(e[2] * dx + e[3] * dy) * d_power;
                        const T d_dy = -(e[3] * dx + e[4] * dy) * d_power;
                        eg.du += -d_dx;
                        eg.dv += -d_dy;
                    }
                }
            }
    });

    RenderGradientsT<T> out;
    out.init(set.size(), set.sh_dim());
    for (std::int64_t i = 0; i < set.size(); ++i) out.hit[i] = saved.visible[i];

    // fixed-order reduction across tiles
    std::vector<detail::EntryGrad<T>> per_gaussian(set.size());
    for (size_t tile = 0; tile < grid.lists.size(); ++tile) {
        const auto& list = grid.lists[tile];
        const auto& grads = tile_grads[tile];
        for (size_t k = 0; k < grads.size(); ++k) {
            auto& acc = per_gaussian[list[k]];
            const auto& eg = grads[k];
            acc.du += eg.du;
            acc.dv += eg.dv;
            acc.d_conic_a += eg.d_conic_a;
            acc.d_conic_b += eg.d_conic_b;
            acc.d_conic_d += eg.d_conic_d;
            acc.d_alpha += eg.d_alpha;
            for (int c = 0; c < 3; ++c) acc.d_rgb[c] += eg.d_rgb[c];
        }
    }

    parallel_for(0, set.size(), threads, [&](std::int64_t i) {
        if (!saved.visible[i]) return;
        detail::geometric_backward(set, cam, i, saved.proj[i], per_gaussian[i],
                                   saved.colors_raw.data() + 3 * i, out);
    });
    return out;
}

}  // namespace dsplat
