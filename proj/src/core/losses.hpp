#pragma once

#include "core/common.hpp"
#include "core/gaussian.hpp"
#include "core/image.hpp"

#include <algorithm>
#include <numeric>

namespace dsplat {

template <class T>
T l1_loss(const ImageT<T>& pred, const ImageT<T>& gt) {
    require(pred.same_shape(gt), ErrorCode::invalid_argument, "l1_loss: shape mismatch");
    T sum = T(0);
    for (size_t i = 0; i < pred.data.size(); ++i) sum += std::abs(pred.data[i] - gt.data[i]);
    return sum / T(pred.data.size());
}

// dL1/dpred, scaled by `scale`.
template <class T>
void l1_loss_backward(const ImageT<T>& pred, const ImageT<T>& gt, T scale, ImageT<T>& d_pred) {
    const T inv = scale / T(pred.data.size());
    for (size_t i = 0; i < pred.data.size(); ++i) {
        const T d = pred.data[i] - gt.data[i];
        d_pred.data[i] += d > T(0) ? inv : (d < T(0) ? -inv : T(0));
    }
}

namespace detail {

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;
constexpr double kSsimC1 = 0.01 * 0.01;  // (k1 * L)^2, L = 1
constexpr double kSsimC2 = 0.03 * 0.03;

template <class T>
std::array<T, kSsimWindow> ssim_kernel() {
    std::array<T, kSsimWindow> k;
    T sum = T(0);
    for (int i = 0; i < kSsimWindow; ++i) {
        const double d = i - (kSsimWindow - 1) / 2.0;
        k[i] = static_cast<T>(std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma)));
        sum += k[i];
    }
    for (auto& v : k) v /= sum;
    return k;
}

// Valid-window separable correlation: (W x H) plane -> (W-10) x (H-10) field.
template <class T>
void valid_corr(const std::vector<T>& plane, int w, int h, std::vector<T>& out, std::vector<T>& tmp) {
    const auto k = ssim_kernel<T>();
    const int ow = w - kSsimWindow + 1, oh = h - kSsimWindow + 1;
    tmp.assign(static_cast<size_t>(ow) * h, T(0));
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            T s = T(0);
            for (int i = 0; i < kSsimWindow; ++i) s += k[i] * plane[static_cast<size_t>(y) * w + x + i];
            tmp[static_cast<size_t>(y) * ow + x] = s;
        }
    out.assign(static_cast<size_t>(ow) * oh, T(0));
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            T s = T(0);
            for (int i = 0; i < kSsimWindow; ++i) s += k[i] * tmp[static_cast<size_t>(y + i) * ow + x];
            out[static_cast<size_t>(y) * ow + x] = s;
        }
}

// Adjoint of valid_corr: window field -> image plane (accumulates).
template <class T>
void valid_corr_adjoint(const std::vector<T>& field, int w, int h, std::vector<T>& plane_out,
                        std::vector<T>& tmp) {
    const auto k = ssim_kernel<T>();
    const int ow = w - kSsimWindow + 1, oh = h - kSsimWindow + 1;
    tmp.assign(static_cast<size_t>(ow) * h, T(0));
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            const T f = field[static_cast<size_t>(y) * ow + x];
            if (f == T(0)) continue;
            for (int i = 0; i < kSsimWindow; ++i) tmp[static_cast<size_t>(y + i) * ow + x] += k[i] * f;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            const T f = tmp[static_cast<size_t>(y) * ow + x];
            if (f == T(0)) continue;
            for (int i = 0; i < kSsimWindow; ++i) plane_out[static_cast<size_t>(y) * w + x + i] += k[i] * f;
        }
}

template <class T>
void extract_plane(const ImageT<T>& img, int c, std::vector<T>& plane) {
    plane.resize(static_cast<size_t>(img.width) * img.height);
    for (std::int64_t i = 0; i < img.pixels(); ++i) plane[i] = img.data[3 * i + c];
}

template <class T>
struct SsimChannelStats {
    std::vector<T> mu_x, mu_y, a1, a2, b1, b2, s;
};

template <class T>
T ssim_channel(const std::vector<T>& x, const std::vector<T>& y, int w, int h,
               SsimChannelStats<T>* stats) {
    std::vector<T> tmp, mu_x, mu_y, xx, yy, xy;
    valid_corr(x, w, h, mu_x, tmp);
    valid_corr(y, w, h, mu_y, tmp);
    std::vector<T> x2(x.size()), y2(y.size()), xy_in(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
        x2[i] = x[i] * x[i];
        y2[i] = y[i] * y[i];
        xy_in[i] = x[i] * y[i];
    }
    valid_corr(x2, w, h, xx, tmp);
    valid_corr(y2, w, h, yy, tmp);
    valid_corr(xy_in, w, h, xy, tmp);

    const size_t n = mu_x.size();
    T total = T(0);
    std::vector<T> a1(n), a2(n), b1(n), b2(n), sv(n);
    for (size_t i = 0; i < n; ++i) {
        const T var_x = xx[i] - mu_x[i] * mu_x[i];
        const T var_y = yy[i] - mu_y[i] * mu_y[i];
        const T cov = xy[i] - mu_x[i] * mu_y[i];
        a1[i] = 2 * mu_x[i] * mu_y[i] + T(kSsimC1);
        a2[i] = 2 * cov + T(kSsimC2);
        b1[i] = mu_x[i] * mu_x[i] + mu_y[i] * mu_y[i] + T(kSsimC1);
        b2[i] = var_x + var_y + T(kSsimC2);
        sv[i] = a1[i] * a2[i] / (b1[i] * b2[i]);
        total += sv[i];
    }
    if (stats) {
        stats->mu_x = std::move(mu_x);
        stats->mu_y = std::move(mu_y);
        stats->a1 = std::move(a1);
        stats->a2 = std::move(a2);
        stats->b1 = std::move(b1);
        stats->b2 = std::move(b2);
        stats->s = std::move(sv);
    }
    return total / T(n);
}

}  // namespace detail

namespace detail {

template <class T>
T mean_ssim(const ImageT<T>& pred, const ImageT<T>& gt) {
    require(pred.same_shape(gt), ErrorCode::invalid_argument, "ssim: shape mismatch");
    require(pred.width >= detail::kSsimWindow && pred.height >= detail::kSsimWindow,
            ErrorCode::invalid_argument, "ssim: image smaller than window");
    std::vector<T> px, py;
    T total = T(0);
    for (int c = 0; c < 3; ++c) {
        detail::extract_plane(pred, c, px);
        detail::extract_plane(gt, c, py);
        total += detail::ssim_channel(px, py, pred.width, pred.height,
                                      static_cast<detail::SsimChannelStats<T>*>(nullptr));
    }
    return total / T(3);
}

}  // namespace detail

// Mean SSIM over all fully-contained 11x11 windows and the three channels,
// clamped into [0,1] (anti-correlated inputs would otherwise go negative).
template <class T>
T ssim_metric(const ImageT<T>& pred, const ImageT<T>& gt) {
    return std::clamp(detail::mean_ssim(pred, gt), T(0), T(1));
}

template <class T>
T ssim_loss(const ImageT<T>& pred, const ImageT<T>& gt) {
    return T(1) - ssim_metric(pred, gt);
}

// d(1 - clamped mean SSIM)/dpred, scaled by `scale` and accumulated into
// d_pred. Past the clamp (mean SSIM outside [0,1]) the gradient is zero.
template <class T>
void ssim_loss_backward(const ImageT<T>& pred, const ImageT<T>& gt, T scale, ImageT<T>& d_pred) {
    require(pred.same_shape(gt) && d_pred.same_shape(pred), ErrorCode::invalid_argument,
            "ssim_loss_backward: shape mismatch");
    require(pred.width >= detail::kSsimWindow && pred.height >= detail::kSsimWindow,
            ErrorCode::invalid_argument, "ssim: image smaller than window");
    const T raw_mean = detail::mean_ssim(pred, gt);
    if (raw_mean <= T(0) || raw_mean >= T(1)) return;
    const int w = pred.width, h = pred.height;
    const size_t n_win = static_cast<size_t>(w - detail::kSsimWindow + 1) *
                         (h - detail::kSsimWindow + 1);
    // d(1 - MS)/dS_k = -1 / (n_win * 3)
    const T coeff = -scale / (T(n_win) * 3);

    std::vector<T> px, py, tmp, plane_grad;
    for (int c = 0; c < 3; ++c) {
        detail::extract_plane(pred, c, px);
        detail::extract_plane(gt, c, py);
        detail::SsimChannelStats<T> st;
        detail::ssim_channel(px, py, w, h, &st);

        // dS/dx_i = w_i (f1 + f2*y_i + f3*x_i), per window k:
        //   f2 = 2 a1/(b1 b2), f3 = -2 s/b2,
        //   f1 = 2 mu_y a2/(b1 b2) - 2 mu_x s/b1 - f2 mu_y - f3 mu_x
        std::vector<T> f1(st.s.size()), f2(st.s.size()), f3(st.s.size());
        for (size_t i = 0; i < st.s.size(); ++i) {
            const T inv_b1b2 = T(1) / (st.b1[i] * st.b2[i]);
            f2[i] = 2 * st.a1[i] * inv_b1b2;
            f3[i] = -2 * st.s[i] / st.b2[i];
            f1[i] = 2 * st.mu_y[i] * st.a2[i] * inv_b1b2 - 2 * st.mu_x[i] * st.s[i] / st.b1[i] -
                    f2[i] * st.mu_y[i] - f3[i] * st.mu_x[i];
        }
        plane_grad.assign(px.size(), T(0));
        detail::valid_corr_adjoint(f1, w, h, plane_grad, tmp);
        std::vector<T> g2(px.size(), T(0)), g3(px.size(), T(0));
        detail::valid_corr_adjoint(f2, w, h, g2, tmp);
        detail::valid_corr_adjoint(f3, w, h, g3, tmp);
        for (size_t i = 0; i < px.size(); ++i)
            d_pred.data[3 * i + c] += coeff * (plane_grad[i] + g2[i] * py[i] + g3[i] * px[i]);
    }
}

// Exact k-nearest-neighbour lists over canonical centers with the Gaussian
// distance weights of the smoothness loss baked in.
template <class T>
struct KnnIndexT {
    std::int64_t n = 0;
    int k = 0;  // effective k = min(requested, n-1)
    std::vector<std::int32_t> neighbors;  // n * k
    std::vector<T> weights;               // n * k, exp(-lambda_w d^2)
};

using KnnIndex = KnnIndexT<float>;

template <class T>
KnnIndexT<T> knn_build(const T* centers, std::int64_t n, int k, T lambda_w) {
    require(n >= 2, ErrorCode::invalid_argument, "knn_build: need at least 2 points");
    require(k >= 1, ErrorCode::invalid_argument, "knn_build: k must be >= 1");
    KnnIndexT<T> index;
    index.n = n;
    index.k = static_cast<int>(std::min<std::int64_t>(k, n - 1));
    index.neighbors.resize(n * index.k);
    index.weights.resize(n * index.k);

    std::vector<std::pair<T, std::int32_t>> cand(n - 1);
    for (std::int64_t i = 0; i < n; ++i) {
        const Eigen::Map<const Vec3<T>> pi(centers + 3 * i);
        std::int64_t m = 0;
        for (std::int64_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const Eigen::Map<const Vec3<T>> pj(centers + 3 * j);
            cand[m++] = {(pj - pi).squaredNorm(), static_cast<std::int32_t>(j)};
        }
        std::partial_sort(cand.begin(), cand.begin() + index.k, cand.end());
        for (int t = 0; t < index.k; ++t) {
            index.neighbors[i * index.k + t] = cand[t].second;
            index.weights[i * index.k + t] = std::exp(-lambda_w * cand[t].first);
        }
    }
    return index;
}

// (1/(k N)) sum_i sum_{j in KNN_i} w_ij ||z_i - z_j||_2  (unsquared norm).
template <class T>
T embedding_smoothness(const T* z, std::int64_t n, int dim, const KnnIndexT<T>& index) {
    require(index.n == n, ErrorCode::invalid_argument, "embedding_smoothness: stale KNN index");
    if (n == 0 || index.k == 0) return T(0);
    T total = T(0);
    for (std::int64_t i = 0; i < n; ++i)
        for (int t = 0; t < index.k; ++t) {
            const std::int64_t j = index.neighbors[i * index.k + t];
            T d2 = T(0);
            for (int c = 0; c < dim; ++c) {
                const T d = z[i * dim + c] - z[j * dim + c];
                d2 += d * d;
            }
            total += index.weights[i * index.k + t] * std::sqrt(d2);
        }
    return total / (T(index.k) * T(n));
}

template <class T>
void embedding_smoothness_backward(const T* z, std::int64_t n, int dim, const KnnIndexT<T>& index,
                                   T scale, T* d_z) {
    require(index.n == n, ErrorCode::invalid_argument, "embedding_smoothness: stale KNN index");
    if (n == 0 || index.k == 0) return;
    const T norm = scale / (T(index.k) * T(n));
    for (std::int64_t i = 0; i < n; ++i)
        for (int t = 0; t < index.k; ++t) {
            const std::int64_t j = index.neighbors[i * index.k + t];
            T d2 = T(0);
            for (int c = 0; c < dim; ++c) {
                const T d = z[i * dim + c] - z[j * dim + c];
                d2 += d * d;
            }
            const T dist = std::sqrt(d2);
            if (dist < T(1e-12)) continue;
            const T coeff = norm * index.weights[i * index.k + t] / dist;
            for (int c = 0; c < dim; ++c) {
                const T d = z[i * dim + c] - z[j * dim + c];
                d_z[i * dim + c] += coeff * d;
                d_z[j * dim + c] -= coeff * d;
            }
        }
}

// Mean activated opacity.
template <class T>
T opacity_loss(const GaussianSetT<T>& set) {
    require(set.size() >= 1, ErrorCode::invalid_argument, "opacity_loss: empty Gaussian set");
    T sum = T(0);
    for (std::int64_t i = 0; i < set.size(); ++i) sum += set.opacity(i);
    return sum / T(set.size());
}

template <class T>
void opacity_loss_backward(const GaussianSetT<T>& set, T scale, T* d_logits) {
    const T inv = scale / T(set.size());
    for (std::int64_t i = 0; i < set.size(); ++i) {
        const T a = set.opacity(i);
        d_logits[i] += inv * a * (1 - a);
    }
}

template <class T>
struct LossWeightsT {
    T face = T(0.01);
    T mouth = T(0.002);
    T opacity = T(1e-4);
};

using LossWeights = LossWeightsT<float>;

template <class T>
struct LossBreakdownT {
    T l1{}, ssim_face{}, ssim_mouth{}, emb_reg{}, opacity{}, total{};
};

// L1 + lambda_face (1-SSIM) + lambda_mouth (1-SSIM on mouth crop)
//    + embedding smoothness + lambda_opa mean opacity.
template <class T>
LossBreakdownT<T> total_loss(const ImageT<T>& pred, const ImageT<T>& gt, const Rect& mouth,
                             const GaussianSetT<T>& set, const T* z, const KnnIndexT<T>& index,
                             const LossWeightsT<T>& weights) {
    LossBreakdownT<T> out;
    out.l1 = l1_loss(pred, gt);
    out.ssim_face = ssim_loss(pred, gt);
    out.ssim_mouth = ssim_loss(crop_region(pred, mouth), crop_region(gt, mouth));
    out.emb_reg = embedding_smoothness(z, set.size(), set.embed_dim, index);
    out.opacity = opacity_loss(set);
    out.total = out.l1 + weights.face * out.ssim_face + weights.mouth * out.ssim_mouth +
                out.emb_reg + weights.opacity * out.opacity;
    return out;
}

// Adjoint of total_loss: accumulates into the prediction-image gradient, the
// opacity-logit gradient of the set that was rendered, and the embedding
// gradient.
template <class T>
void total_loss_backward(const ImageT<T>& pred, const ImageT<T>& gt, const Rect& mouth,
                         const GaussianSetT<T>& set, const T* z, const KnnIndexT<T>& index,
                         const LossWeightsT<T>& weights, ImageT<T>& d_pred, T* d_opacity_logits,
                         T* d_z) {
    l1_loss_backward(pred, gt, T(1), d_pred);
    ssim_loss_backward(pred, gt, weights.face, d_pred);
    {
        const ImageT<T> pc = crop_region(pred, mouth);
        const ImageT<T> gc = crop_region(gt, mouth);
        ImageT<T> d_crop(mouth.w, mouth.h);
        ssim_loss_backward(pc, gc, weights.mouth, d_crop);
        for (int y = 0; y < mouth.h; ++y)
            for (int x = 0; x < mouth.w; ++x)
                for (int c = 0; c < 3; ++c)
                    d_pred.at(mouth.x + x, mouth.y + y)[c] += d_crop.at(x, y)[c];
    }
    embedding_smoothness_backward(z, set.size(), set.embed_dim, index, T(1), d_z);
    opacity_loss_backward(set, weights.opacity, d_opacity_logits);
}

// 10 log10(1 / MSE), peak 1.0; identical images report +infinity.
template <class T>
T psnr(const ImageT<T>& pred, const ImageT<T>& gt) {
    require(pred.same_shape(gt), ErrorCode::invalid_argument, "psnr: shape mismatch");
    T mse = T(0);
    for (size_t i = 0; i < pred.data.size(); ++i) {
        const T d = pred.data[i] - gt.data[i];
        mse += d * d;
    }
    mse /= T(pred.data.size());
    if (mse == T(0)) return std::numeric_limits<T>::infinity();
    return T(10) * std::log10(T(1) / mse);
}

}  // namespace dsplat
