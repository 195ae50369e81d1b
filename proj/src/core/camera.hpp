#pragma once

#include "core/common.hpp"
#include "core/gaussian.hpp"

#include <optional>

namespace dsplat {

// Pinhole camera, world-to-camera rigid transform, looks down +z.
template <class T>
struct CameraT {
    Mat3<T> rot = Mat3<T>::Identity();   // world-to-camera rotation
    Vec3<T> trans = Vec3<T>::Zero();     // world-to-camera translation
    T fx = T(1), fy = T(1);              // focal lengths, pixels
    T cx = T(0), cy = T(0);              // principal point, pixels
    int width = 0, height = 0;
    T near_clip = T(0.01), far_clip = T(1000);

    void validate() const {
        require(fx > 0 && fy > 0, ErrorCode::invalid_argument, "camera: focal lengths must be positive");
        require(near_clip > 0 && near_clip < far_clip, ErrorCode::invalid_argument,
                "camera: need 0 < near < far");
        require(width > 0 && height > 0, ErrorCode::invalid_argument, "camera: bad image size");
        const Mat3<T> rtr = rot.transpose() * rot;
        require((rtr - Mat3<T>::Identity()).template lpNorm<Eigen::Infinity>() < T(1e-5) &&
                    std::abs(static_cast<double>(rot.determinant()) - 1.0) < 1e-5,
                ErrorCode::invalid_argument, "camera: rotation must be orthonormal with det +1");
    }

    Vec3<T> world_to_cam(const Vec3<T>& p) const { return rot * p + trans; }
    Vec3<T> position() const { return -(rot.transpose() * trans); }

    template <class U>
    CameraT<U> cast() const {
        CameraT<U> out;
        out.rot = rot.template cast<U>();
        out.trans = trans.template cast<U>();
        out.fx = static_cast<U>(fx);
        out.fy = static_cast<U>(fy);
        out.cx = static_cast<U>(cx);
        out.cy = static_cast<U>(cy);
        out.width = width;
        out.height = height;
        out.near_clip = static_cast<U>(near_clip);
        out.far_clip = static_cast<U>(far_clip);
        return out;
    }
};

using Camera = CameraT<float>;

// Screen-space footprint of one projected Gaussian. cov2 is the 2x2
// screen covariance (a,b;b,d) after dilation, conic its inverse.
template <class T>
struct ProjectedGaussian {
    T u{}, v{};        // screen-space mean, pixels
    T depth{};         // camera-space z
    T cov_a{}, cov_b{}, cov_d{};
    T conic_a{}, conic_b{}, conic_d{};
    T radius{};        // 3 sigma extent, pixels
};

// u = fx*tx/tz + cx, v = fy*ty/tz + cy. Throws if the point is not in front
// of the camera.
template <class T>
Vec3<T> project_point(const Vec3<T>& mu, const CameraT<T>& cam) {
    const Vec3<T> t = cam.world_to_cam(mu);
    require(t[2] > 0, ErrorCode::invalid_argument, "project_point: point behind camera");
    return {cam.fx * t[0] / t[2] + cam.cx, cam.fy * t[1] / t[2] + cam.cy, t[2]};
}

// First-order Jacobian of the perspective map at camera-space point t.
template <class T>
Mat23<T> projection_jacobian(const Vec3<T>& t, const CameraT<T>& cam) {
    const T inv_z = T(1) / t[2];
    const T inv_z2 = inv_z * inv_z;
    Mat23<T> j;
    j << cam.fx * inv_z, T(0), -cam.fx * t[0] * inv_z2,
         T(0), cam.fy * inv_z, -cam.fy * t[1] * inv_z2;
    return j;
}

constexpr double kCovDilation = 0.3;     // screen-space covariance dilation, pixels^2
constexpr double kFrustumMargin = 1.3;   // widened tangent bound for x/y culling

// Projects one Gaussian; nullopt means culled (outside depth range or the
// widened frustum). Sigma' = (J W) Sigma (J W)^T restricted to 2x2, plus the
// diagonal dilation.
template <class T>
std::optional<ProjectedGaussian<T>> project_gaussian(const Vec3<T>& mu, const Cov3<T>& cov,
                                                     const CameraT<T>& cam,
                                                     T dilation = T(kCovDilation)) {
    const Vec3<T> t = cam.world_to_cam(mu);
    if (!(t[2] > cam.near_clip && t[2] < cam.far_clip)) return std::nullopt;
    const T tan_x = T(0.5) * cam.width / cam.fx * T(kFrustumMargin);
    const T tan_y = T(0.5) * cam.height / cam.fy * T(kFrustumMargin);
    if (std::abs(t[0] / t[2]) > tan_x || std::abs(t[1] / t[2]) > tan_y) return std::nullopt;

    const Mat23<T> m = projection_jacobian(t, cam) * cam.rot;
    const Mat2<T> cov2 = m * cov.matrix() * m.transpose();

    ProjectedGaussian<T> out;
    out.u = cam.fx * t[0] / t[2] + cam.cx;
    out.v = cam.fy * t[1] / t[2] + cam.cy;
    out.depth = t[2];
    out.cov_a = cov2(0, 0) + dilation;
    out.cov_b = cov2(0, 1);
    out.cov_d = cov2(1, 1) + dilation;

    const T det = out.cov_a * out.cov_d - out.cov_b * out.cov_b;
    require(det > 0, ErrorCode::numeric, "project_gaussian: non-positive-definite screen covariance");
    const T inv_det = T(1) / det;
    out.conic_a = out.cov_d * inv_det;
    out.conic_b = -out.cov_b * inv_det;
    out.conic_d = out.cov_a * inv_det;

    const T mid = T(0.5) * (out.cov_a + out.cov_d);
    const T lambda_max = mid + std::sqrt(std::max(T(0), mid * mid - det));
    out.radius = 3 * std::sqrt(lambda_max);
    return out;
}

}  // namespace dsplat
