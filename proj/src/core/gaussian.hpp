#pragma once

#include "core/common.hpp"

#include <array>

namespace dsplat {

// Real SH basis constants, graphics convention (Ramamoorthi & Hanrahan).
constexpr double kShC0 = 0.28209479177387814;
constexpr double kShC1 = 0.4886025119029199;
constexpr double kShC2[5] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                             -1.0925484305920792, 0.5462742152960396};
constexpr double kShC3[7] = {-0.5900435899266435, 2.890611442640554,  -0.4570457994644658,
                             0.3731763325901154,  -0.4570457994644658, 1.445305721320277,
                             -0.5900435899266435};

inline int sh_coeff_count(int degree) { return (degree + 1) * (degree + 1); }

// Canonical scene, structure-of-arrays. Rotations are stored as raw (not
// necessarily unit) quaternions in (w,x,y,z) order; scales as logs; opacities
// as logits. Activations happen at the point of use so gradient descent can
// run unconstrained.
template <class T>
struct GaussianSetT {
    std::vector<T> centers;         // 3 per Gaussian
    std::vector<T> rotations;       // 4 per Gaussian, (w,x,y,z)
    std::vector<T> log_scales;      // 3 per Gaussian
    std::vector<T> opacity_logits;  // 1 per Gaussian
    std::vector<T> sh;              // 3*(degree+1)^2 per Gaussian, coefficient-major RGB
    std::vector<T> embeddings;      // embed_dim per Gaussian
    int sh_degree = 0;
    int embed_dim = 0;

    std::int64_t size() const { return static_cast<std::int64_t>(opacity_logits.size()); }
    int sh_dim() const { return 3 * sh_coeff_count(sh_degree); }

    void resize(std::int64_t n) {
        centers.resize(3 * n);
        rotations.resize(4 * n);
        log_scales.resize(3 * n);
        opacity_logits.resize(n);
        sh.resize(static_cast<size_t>(sh_dim()) * n);
        embeddings.resize(static_cast<size_t>(embed_dim) * n);
    }

    void validate() const {
        const auto n = size();
        require(static_cast<std::int64_t>(centers.size()) == 3 * n &&
                    static_cast<std::int64_t>(rotations.size()) == 4 * n &&
                    static_cast<std::int64_t>(log_scales.size()) == 3 * n &&
                    static_cast<std::int64_t>(sh.size()) == sh_dim() * n &&
                    static_cast<std::int64_t>(embeddings.size()) == embed_dim * n,
                ErrorCode::invalid_argument, "GaussianSet arrays have inconsistent lengths");
        require(sh_degree >= 0 && sh_degree <= 3, ErrorCode::invalid_argument,
                "SH degree must be in [0,3]");
    }

    Eigen::Map<const Vec3<T>> center(std::int64_t i) const { return Eigen::Map<const Vec3<T>>(centers.data() + 3 * i); }
    Eigen::Map<const Vec4<T>> rotation(std::int64_t i) const { return Eigen::Map<const Vec4<T>>(rotations.data() + 4 * i); }
    Eigen::Map<const Vec3<T>> log_scale(std::int64_t i) const { return Eigen::Map<const Vec3<T>>(log_scales.data() + 3 * i); }
    Vec3<T> scale(std::int64_t i) const { return log_scale(i).array().exp(); }
    T opacity(std::int64_t i) const { return sigmoid(opacity_logits[i]); }
    const T* sh_ptr(std::int64_t i) const { return sh.data() + static_cast<size_t>(sh_dim()) * i; }
    const T* embedding(std::int64_t i) const { return embeddings.data() + static_cast<size_t>(embed_dim) * i; }

    template <class U>
    GaussianSetT<U> cast() const {
        GaussianSetT<U> out;
        out.sh_degree = sh_degree;
        out.embed_dim = embed_dim;
        auto conv = [](const std::vector<T>& src, std::vector<U>& dst) {
            dst.resize(src.size());
            for (size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<U>(src[i]);
        };
        conv(centers, out.centers);
        conv(rotations, out.rotations);
        conv(log_scales, out.log_scales);
        conv(opacity_logits, out.opacity_logits);
        conv(sh, out.sh);
        conv(embeddings, out.embeddings);
        return out;
    }
};

using GaussianSet = GaussianSetT<float>;

// Symmetric 3x3 covariance, upper triangle.
template <class T>
struct Cov3 {
    T xx{}, xy{}, xz{}, yy{}, yz{}, zz{};

    Mat3<T> matrix() const {
        Mat3<T> m;
        m << xx, xy, xz, xy, yy, yz, xz, yz, zz;
        return m;
    }
    static Cov3 from_matrix(const Mat3<T>& m) {
        return {m(0, 0), m(0, 1), m(0, 2), m(1, 1), m(1, 2), m(2, 2)};
    }
};

template <class T>
Mat3<T> quat_to_rotation(const Vec4<T>& q_unit) {
    const T w = q_unit[0], x = q_unit[1], y = q_unit[2], z = q_unit[3];
    Mat3<T> r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
         2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
         2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

// Adjoint of quat_to_rotation: dL/dR -> dL/dq for a unit quaternion.
template <class T>
Vec4<T> quat_to_rotation_backward(const Vec4<T>& q_unit, const Mat3<T>& g) {
    const T w = q_unit[0], x = q_unit[1], y = q_unit[2], z = q_unit[3];
    Vec4<T> dq;
    dq[0] = 2 * (x * (g(2, 1) - g(1, 2)) + y * (g(0, 2) - g(2, 0)) + z * (g(1, 0) - g(0, 1)));
    dq[1] = 2 * (y * (g(0, 1) + g(1, 0)) + z * (g(0, 2) + g(2, 0)) + w * (g(2, 1) - g(1, 2)) -
                 2 * x * (g(1, 1) + g(2, 2)));
    dq[2] = 2 * (x * (g(0, 1) + g(1, 0)) + z * (g(1, 2) + g(2, 1)) + w * (g(0, 2) - g(2, 0)) -
                 2 * y * (g(0, 0) + g(2, 2)));
    dq[3] = 2 * (x * (g(0, 2) + g(2, 0)) + y * (g(1, 2) + g(2, 1)) + w * (g(1, 0) - g(0, 1)) -
                 2 * z * (g(0, 0) + g(1, 1)));
    return dq;
}

// dL/d(unit vector) -> dL/d(raw vector) through v_unit = v / |v|.
template <class T, int N>
Eigen::Matrix<T, N, 1> normalize_backward(const Eigen::Matrix<T, N, 1>& raw,
                                          const Eigen::Matrix<T, N, 1>& d_unit) {
    const T norm = raw.norm();
    const Eigen::Matrix<T, N, 1> u = raw / norm;
    return (d_unit - u * u.dot(d_unit)) / norm;
}

// Sigma = R S S^T R^T for unit quaternion q and positive scales s; symmetric
// PSD by construction.
template <class T>
Cov3<T> covariance_from_rotation_scale(const Vec4<T>& q, const Vec3<T>& s) {
    require(q.allFinite() && s.allFinite(), ErrorCode::numeric,
            "covariance_from_rotation_scale: non-finite input");
    require(s[0] > 0 && s[1] > 0 && s[2] > 0, ErrorCode::invalid_argument,
            "covariance_from_rotation_scale: scales must be positive");
    const Vec4<T> qn = q / q.norm();
    const Mat3<T> r = quat_to_rotation(qn);
    const Mat3<T> v = r * s.asDiagonal();  // V = R S, Sigma = V V^T
    return Cov3<T>::from_matrix(v * v.transpose());
}

// G(x) = exp(-1/2 (x-mu)^T Sigma^-1 (x-mu)), in (0,1]. The diagonal gets a
// 1e-9 floor before inversion.
template <class T>
T eval_density(const Vec3<T>& x, const Vec3<T>& mu, const Cov3<T>& cov) {
    require(x.allFinite() && mu.allFinite(), ErrorCode::numeric, "eval_density: non-finite input");
    Mat3<T> m = cov.matrix();
    m.diagonal().array() += T(1e-9);
    const T det = m.determinant();
    require(std::isfinite(static_cast<double>(det)) && det > T(0), ErrorCode::numeric,
            "eval_density: degenerate covariance");
    const Vec3<T> d = x - mu;
    const T maha = d.dot(m.inverse() * d);
    return std::exp(T(-0.5) * maha);
}

namespace detail {

template <class T>
int sh_basis(int degree, const Vec3<T>& dir, T* basis) {
    const T x = dir[0], y = dir[1], z = dir[2];
    basis[0] = T(kShC0);
    if (degree >= 1) {
        basis[1] = T(-kShC1) * y;
        basis[2] = T(kShC1) * z;
        basis[3] = T(-kShC1) * x;
    }
    if (degree >= 2) {
        const T xx = x * x, yy = y * y, zz = z * z;
        basis[4] = T(kShC2[0]) * x * y;
        basis[5] = T(kShC2[1]) * y * z;
        basis[6] = T(kShC2[2]) * (2 * zz - xx - yy);
        basis[7] = T(kShC2[3]) * x * z;
        basis[8] = T(kShC2[4]) * (xx - yy);
    }
    if (degree >= 3) {
        const T xx = x * x, yy = y * y, zz = z * z;
        basis[9] = T(kShC3[0]) * y * (3 * xx - yy);
        basis[10] = T(kShC3[1]) * x * y * z;
        basis[11] = T(kShC3[2]) * y * (4 * zz - xx - yy);
        basis[12] = T(kShC3[3]) * z * (2 * zz - 3 * xx - 3 * yy);
        basis[13] = T(kShC3[4]) * x * (4 * zz - xx - yy);
        basis[14] = T(kShC3[5]) * z * (xx - yy);
        basis[15] = T(kShC3[6]) * x * (xx - 3 * yy);
    }
    return sh_coeff_count(degree);
}

template <class T>
void sh_basis_grad(int degree, const Vec3<T>& dir, Vec3<T>* grad) {
    const T x = dir[0], y = dir[1], z = dir[2];
    grad[0].setZero();
    if (degree >= 1) {
        grad[1] = Vec3<T>(0, T(-kShC1), 0);
        grad[2] = Vec3<T>(0, 0, T(kShC1));
        grad[3] = Vec3<T>(T(-kShC1), 0, 0);
    }
    if (degree >= 2) {
        grad[4] = T(kShC2[0]) * Vec3<T>(y, x, 0);
        grad[5] = T(kShC2[1]) * Vec3<T>(0, z, y);
        grad[6] = T(kShC2[2]) * Vec3<T>(-2 * x, -2 * y, 4 * z);
        grad[7] = T(kShC2[3]) * Vec3<T>(z, 0, x);
        grad[8] = T(kShC2[4]) * Vec3<T>(2 * x, -2 * y, 0);
    }
    if (degree >= 3) {
        const T xx = x * x, yy = y * y, zz = z * z;
        grad[9] = T(kShC3[0]) * Vec3<T>(6 * x * y, 3 * xx - 3 * yy, 0);
        grad[10] = T(kShC3[1]) * Vec3<T>(y * z, x * z, x * y);
        grad[11] = T(kShC3[2]) * Vec3<T>(-2 * x * y, 4 * zz - xx - 3 * yy, 8 * y * z);
        grad[12] = T(kShC3[3]) * Vec3<T>(-6 * x * z, -6 * y * z, 6 * zz - 3 * xx - 3 * yy);
        grad[13] = T(kShC3[4]) * Vec3<T>(4 * zz - 3 * xx - yy, -2 * x * y, 8 * x * z);
        grad[14] = T(kShC3[5]) * Vec3<T>(2 * x * z, -2 * y * z, xx - yy);
        grad[15] = T(kShC3[6]) * Vec3<T>(3 * xx - 3 * yy, -6 * x * y, 0);
    }
}

}  // namespace detail

// View-dependent color from SH coefficients; adds the 0.5 offset then clamps
// each channel to >= 0.
template <class T>
Vec3<T> eval_sh_color(const T* coeffs, int n_coeffs, const Vec3<T>& view_dir, int degree) {
    require(n_coeffs == 3 * sh_coeff_count(degree), ErrorCode::invalid_argument,
            "eval_sh_color: coefficient length mismatch");
    T basis[16];
    const int k = detail::sh_basis(degree, view_dir, basis);
    Vec3<T> rgb = Vec3<T>::Constant(T(0.5));
    for (int i = 0; i < k; ++i)
        for (int c = 0; c < 3; ++c) rgb[c] += basis[i] * coeffs[3 * i + c];
    return rgb.cwiseMax(T(0));
}

// Adjoint of eval_sh_color. Channels that were clamped pass no gradient.
// Returns dL/ddir; writes dL/dcoeffs.
template <class T>
Vec3<T> eval_sh_color_backward(const T* coeffs, int n_coeffs, const Vec3<T>& view_dir, int degree,
                               const Vec3<T>& rgb_unclamped_sign, const Vec3<T>& d_rgb,
                               T* d_coeffs) {
    require(n_coeffs == 3 * sh_coeff_count(degree), ErrorCode::invalid_argument,
            "eval_sh_color_backward: coefficient length mismatch");
    T basis[16];
    Vec3<T> basis_grad[16];
    const int k = detail::sh_basis(degree, view_dir, basis);
    detail::sh_basis_grad(degree, view_dir, basis_grad);
    Vec3<T> g = d_rgb;
    for (int c = 0; c < 3; ++c)
        if (rgb_unclamped_sign[c] <= T(0)) g[c] = T(0);
    Vec3<T> d_dir = Vec3<T>::Zero();
    for (int i = 0; i < k; ++i) {
        T coeff_dot = T(0);
        for (int c = 0; c < 3; ++c) {
            d_coeffs[3 * i + c] += basis[i] * g[c];
            coeff_dot += coeffs[3 * i + c] * g[c];
        }
        d_dir += coeff_dot * basis_grad[i];
    }
    return d_dir;
}

}  // namespace dsplat
