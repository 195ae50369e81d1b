#pragma once

#include "core/camera.hpp"
#include "core/gaussian.hpp"
#include "core/image.hpp"

// Shared scene builders for the unit and acceptance suites.
namespace dsplat::testutil {

template <class T>
CameraT<T> square_camera(int size) {
    CameraT<T> cam;
    cam.width = cam.height = size;
    cam.fx = cam.fy = T(0.9) * size;
    cam.cx = cam.cy = T(size) / 2;
    cam.near_clip = T(0.1);
    cam.far_clip = T(50);
    return cam;
}

// Random visible scene. max_alpha <= 0.34 keeps every contribution beyond the
// 3-sigma footprint below the 1/255 skip threshold, which makes the tiled and
// brute-force renderers mathematically identical.
template <class T>
GaussianSetT<T> random_scene(std::int64_t n, std::uint64_t seed, T max_alpha, int sh_degree = 1,
                             int embed_dim = 4) {
    auto rng = seeded_rng(seed, 0x7e57);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    GaussianSetT<T> set;
    set.sh_degree = sh_degree;
    set.embed_dim = embed_dim;
    set.resize(n);
    const int sh_dim = set.sh_dim();
    for (std::int64_t i = 0; i < n; ++i) {
        const double z = 2.0 + 1.5 * u(rng);
        set.centers[3 * i + 0] = static_cast<T>(0.45 * z * (2 * u(rng) - 1));
        set.centers[3 * i + 1] = static_cast<T>(0.45 * z * (2 * u(rng) - 1));
        set.centers[3 * i + 2] = static_cast<T>(z);
        Vec4<double> q(2 * u(rng) - 1, 2 * u(rng) - 1, 2 * u(rng) - 1, 2 * u(rng) - 1);
        q.normalize();
        for (int c = 0; c < 4; ++c) set.rotations[4 * i + c] = static_cast<T>(q[c]);
        for (int c = 0; c < 3; ++c)
            set.log_scales[3 * i + c] = static_cast<T>(std::log(0.05 + 0.25 * u(rng)));
        const double alpha = 0.02 + (static_cast<double>(max_alpha) - 0.02) * u(rng);
        set.opacity_logits[i] = static_cast<T>(logit(alpha));
        for (int b = 0; b < sh_dim / 3; ++b)
            for (int c = 0; c < 3; ++c)
                set.sh[static_cast<size_t>(sh_dim) * i + 3 * b + c] = static_cast<T>(
                    b == 0 ? ((0.25 + 0.5 * u(rng)) - 0.5) / kShC0 : 0.05 * (2 * u(rng) - 1));
        for (int c = 0; c < embed_dim; ++c)
            set.embeddings[static_cast<size_t>(embed_dim) * i + c] = static_cast<T>(u(rng) - 0.5);
    }
    return set;
}

template <class T>
ImageT<T> smooth_background(int w, int h, std::uint64_t seed) {
    auto rng = seeded_rng(seed, 0xb6);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double a = 2 + 3 * u(rng), b = 2 + 3 * u(rng), c = 2 * M_PI * u(rng);
    ImageT<T> img(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < 3; ++ch)
                img.at(x, y)[ch] = static_cast<T>(
                    0.35 + 0.25 * std::sin(a * x / w + ch) * std::cos(b * y / h + c));
    return img;
}

}  // namespace dsplat::testutil
