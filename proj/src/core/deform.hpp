#pragma once

#include "core/common.hpp"
#include "core/gaussian.hpp"

#include <array>
#include <optional>

namespace dsplat {

// Deformable attribute selection, mirrors the ablation grid.
enum class DeformAttr : std::uint32_t {
    center = 1u << 0,
    opacity = 1u << 1,
    rotation = 1u << 2,
    scale = 1u << 3,
    sh = 1u << 4,
};

struct AttrMask {
    std::uint32_t bits = 0;
    bool has(DeformAttr a) const { return bits & static_cast<std::uint32_t>(a); }
    void set(DeformAttr a) { bits |= static_cast<std::uint32_t>(a); }
    bool empty() const { return bits == 0; }

    // Parses "mu,alpha,r,s,f" style subsets; empty string means no deformation.
    static AttrMask parse(const std::string& text) {
        AttrMask m;
        size_t pos = 0;
        while (pos < text.size()) {
            size_t comma = text.find(',', pos);
            if (comma == std::string::npos) comma = text.size();
            const std::string tok = text.substr(pos, comma - pos);
            if (tok == "mu") m.set(DeformAttr::center);
            else if (tok == "alpha") m.set(DeformAttr::opacity);
            else if (tok == "r") m.set(DeformAttr::rotation);
            else if (tok == "s") m.set(DeformAttr::scale);
            else if (tok == "f") m.set(DeformAttr::sh);
            else if (!tok.empty()) fail(ErrorCode::invalid_argument, "unknown deform attribute: " + tok);
            pos = comma + 1;
        }
        return m;
    }
    std::string to_string() const {
        std::string s;
        auto add = [&](DeformAttr a, const char* name) {
            if (has(a)) {
                if (!s.empty()) s += ',';
                s += name;
            }
        };
        add(DeformAttr::center, "mu");
        add(DeformAttr::opacity, "alpha");
        add(DeformAttr::rotation, "r");
        add(DeformAttr::scale, "s");
        add(DeformAttr::sh, "f");
        return s;
    }
};

// gamma(v): [v, sin(2^0 pi v), cos(2^0 pi v), ..., sin(2^{L-1} pi v), cos(2^{L-1} pi v)],
// frequency-major blocks over all components.
struct PosEncoder {
    int freqs = 0;
    bool include_input = true;

    int out_dim(int in_dim) const { return in_dim * (2 * freqs + (include_input ? 1 : 0)); }

    // Bands come from one sincos via angle doubling; the backward uses the
    // same recurrence so both directions see identical values.
    template <class T>
    void encode(const T* v, int in_dim, T* out) const {
        int o = 0;
        if (include_input)
            for (int j = 0; j < in_dim; ++j) out[o++] = v[j];
        for (int j = 0; j < in_dim; ++j) {
            T s = std::sin(T(M_PI) * v[j]);
            T c = std::cos(T(M_PI) * v[j]);
            for (int k = 0; k < freqs; ++k) {
                out[o + 2 * k * in_dim + j] = s;
                out[o + (2 * k + 1) * in_dim + j] = c;
                const T s2 = 2 * s * c;
                c = c * c - s * s;
                s = s2;
            }
        }
    }

    // Accumulates dL/dv given dL/d(encoded).
    template <class T>
    void encode_backward(const T* v, int in_dim, const T* d_out, T* d_v) const {
        int o = 0;
        if (include_input)
            for (int j = 0; j < in_dim; ++j) d_v[j] += d_out[o++];
        for (int j = 0; j < in_dim; ++j) {
            T s = std::sin(T(M_PI) * v[j]);
            T c = std::cos(T(M_PI) * v[j]);
            T freq = T(M_PI);
            for (int k = 0; k < freqs; ++k, freq *= 2) {
                d_v[j] += freq * (c * d_out[o + 2 * k * in_dim + j] -
                                  s * d_out[o + (2 * k + 1) * in_dim + j]);
                const T s2 = 2 * s * c;
                c = c * c - s * s;
                s = s2;
            }
        }
    }
};

template <class T>
std::vector<T> pos_encode(const std::vector<T>& v, int freqs, bool include_input = true) {
    PosEncoder enc{freqs, include_input};
    std::vector<T> out(enc.out_dim(static_cast<int>(v.size())));
    enc.encode(v.data(), static_cast<int>(v.size()), out.data());
    return out;
}

template <class T>
struct LinearT {
    MatX<T> w;  // out x in
    VecX<T> b;  // out

    void init_zero(int out, int in) {
        w = MatX<T>::Zero(out, in);
        b = VecX<T>::Zero(out);
    }
    void init_kaiming(int out, int in, std::mt19937_64& rng) {
        const double bound = std::sqrt(6.0 / in);
        std::uniform_real_distribution<double> dist(-bound, bound);
        w.resize(out, in);
        for (Eigen::Index i = 0; i < w.rows(); ++i)
            for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = static_cast<T>(dist(rng));
        b = VecX<T>::Zero(out);
    }
    std::int64_t param_count() const { return w.size() + b.size(); }

    template <class U>
    LinearT<U> cast() const {
        LinearT<U> out;
        out.w = w.template cast<U>();
        out.b = b.template cast<U>();
        return out;
    }
};

// Per-frame driving signals: an audio-embedding surrogate and six
// action-unit-style expression values.
template <class T>
struct DrivingFeaturesT {
    VecX<T> audio;       // D_a
    VecX<T> expression;  // 6

    template <class U>
    DrivingFeaturesT<U> cast() const {
        return {audio.template cast<U>(), expression.template cast<U>()};
    }
};

using DrivingFeatures = DrivingFeaturesT<float>;

constexpr int kNumDeformHeads = 5;
constexpr DeformAttr kHeadOrder[kNumDeformHeads] = {DeformAttr::center, DeformAttr::opacity,
                                                    DeformAttr::rotation, DeformAttr::scale,
                                                    DeformAttr::sh};

// Shallow trunk MLP with one zero-initialized linear head per deformed
// attribute. Inputs: gamma(z) ++ a ++ gamma(e). Zero heads make the initial
// deformation exactly zero.
template <class T>
struct DeformFieldT {
    int embed_dim = 32;
    int audio_dim = 8;
    int expr_dim = 6;
    int hidden = 64;
    int sh_dim = 12;
    PosEncoder enc_z{4, true};
    PosEncoder enc_e{2, true};
    AttrMask mask;
    LinearT<T> trunk1, trunk2;
    std::array<std::optional<LinearT<T>>, kNumDeformHeads> heads;

    int input_dim() const { return enc_z.out_dim(embed_dim) + audio_dim + enc_e.out_dim(expr_dim); }
    int head_dim(int h) const {
        switch (kHeadOrder[h]) {
            case DeformAttr::center: return 3;
            case DeformAttr::opacity: return 1;
            case DeformAttr::rotation: return 4;
            case DeformAttr::scale: return 3;
            case DeformAttr::sh: return sh_dim;
        }
        return 0;
    }

    void init(std::uint64_t seed) {
        auto rng = seeded_rng(seed, 0xdef0);
        trunk1.init_kaiming(hidden, input_dim(), rng);
        trunk2.init_kaiming(hidden, hidden, rng);
        for (int h = 0; h < kNumDeformHeads; ++h) {
            if (mask.has(kHeadOrder[h])) {
                heads[h].emplace();
                heads[h]->init_zero(head_dim(h), hidden);
            } else {
                heads[h].reset();
            }
        }
    }

    std::int64_t param_count() const {
        std::int64_t n = trunk1.param_count() + trunk2.param_count();
        for (const auto& head : heads)
            if (head) n += head->param_count();
        return n;
    }

    template <class U>
    DeformFieldT<U> cast() const {
        DeformFieldT<U> out;
        out.embed_dim = embed_dim;
        out.audio_dim = audio_dim;
        out.expr_dim = expr_dim;
        out.hidden = hidden;
        out.sh_dim = sh_dim;
        out.enc_z = enc_z;
        out.enc_e = enc_e;
        out.mask = mask;
        out.trunk1 = trunk1.template cast<U>();
        out.trunk2 = trunk2.template cast<U>();
        for (int h = 0; h < kNumDeformHeads; ++h)
            if (heads[h]) out.heads[h] = heads[h]->template cast<U>();
        return out;
    }
};

using DeformField = DeformFieldT<float>;

// Per-Gaussian attribute deltas; rows only for masked-in attributes.
template <class T>
struct DeformDeltasT {
    std::int64_t n = 0;
    MatX<T> d_center;     // N x 3
    MatX<T> d_opacity;    // N x 1, logit space
    MatX<T> d_rotation;   // N x 4, pre-normalization
    MatX<T> d_log_scale;  // N x 3, log space
    MatX<T> d_sh;         // N x sh_dim

    MatX<T>& by_head(int h) {
        switch (kHeadOrder[h]) {
            case DeformAttr::center: return d_center;
            case DeformAttr::opacity: return d_opacity;
            case DeformAttr::rotation: return d_rotation;
            case DeformAttr::scale: return d_log_scale;
            case DeformAttr::sh: return d_sh;
        }
        return d_center;
    }
    const MatX<T>& by_head(int h) const { return const_cast<DeformDeltasT*>(this)->by_head(h); }
};

// Saved activations for the backward pass.
template <class T>
struct DeformActsT {
    MatX<T> input;  // N x in_dim
    MatX<T> h1;     // N x hidden, post-ReLU
    MatX<T> h2;     // N x hidden, post-ReLU
};

template <class T>
struct DeformGradsT {
    LinearT<T> trunk1, trunk2;
    std::array<std::optional<LinearT<T>>, kNumDeformHeads> heads;
    MatX<T> d_embeddings;  // N x embed_dim
    VecX<T> d_audio;       // D_a
    VecX<T> d_expression;  // 6
};

template <class T>
DeformDeltasT<T> deform_forward(const DeformFieldT<T>& field, const T* embeddings, std::int64_t n,
                                const DrivingFeaturesT<T>& drive, DeformActsT<T>* acts = nullptr) {
    require(drive.audio.size() == field.audio_dim, ErrorCode::invalid_argument,
            "deform_forward: audio feature dimension mismatch");
    require(drive.expression.size() == field.expr_dim, ErrorCode::invalid_argument,
            "deform_forward: expression feature dimension mismatch");
    require(drive.audio.allFinite() && drive.expression.allFinite(), ErrorCode::numeric,
            "deform_forward: non-finite driving features");

    DeformDeltasT<T> deltas;
    deltas.n = n;
    if (field.mask.empty() || n == 0) return deltas;

    const int enc_z_dim = field.enc_z.out_dim(field.embed_dim);
    const int enc_e_dim = field.enc_e.out_dim(field.expr_dim);
    const int in_dim = field.input_dim();

    MatX<T> input(n, in_dim);
    std::vector<T> enc_e(enc_e_dim);
    field.enc_e.encode(drive.expression.data(), field.expr_dim, enc_e.data());
    for (std::int64_t i = 0; i < n; ++i) {
        T* row = input.data() + static_cast<size_t>(i) * in_dim;
        field.enc_z.encode(embeddings + static_cast<size_t>(i) * field.embed_dim, field.embed_dim, row);
        for (int j = 0; j < field.audio_dim; ++j) row[enc_z_dim + j] = drive.audio[j];
        for (int j = 0; j < enc_e_dim; ++j) row[enc_z_dim + field.audio_dim + j] = enc_e[j];
    }

    MatX<T> h1 = (input * field.trunk1.w.transpose()).rowwise() + field.trunk1.b.transpose();
    h1 = h1.cwiseMax(T(0));
    MatX<T> h2 = (h1 * field.trunk2.w.transpose()).rowwise() + field.trunk2.b.transpose();
    h2 = h2.cwiseMax(T(0));

    for (int h = 0; h < kNumDeformHeads; ++h) {
        if (!field.heads[h]) continue;
        deltas.by_head(h) = (h2 * field.heads[h]->w.transpose()).rowwise() +
                            field.heads[h]->b.transpose();
    }
    if (acts) {
        acts->input = std::move(input);
        acts->h1 = std::move(h1);
        acts->h2 = std::move(h2);
    }
    return deltas;
}

// Reverse-mode gradients through the trunk, heads, both positional encoders,
// the embeddings, and the driving features.
template <class T>
DeformGradsT<T> deform_backward(const DeformFieldT<T>& field, const T* embeddings, std::int64_t n,
                                const DrivingFeaturesT<T>& drive, const DeformActsT<T>& acts,
                                const DeformDeltasT<T>& d_deltas) {
    DeformGradsT<T> g;
    g.trunk1.init_zero(field.hidden, field.input_dim());
    g.trunk2.init_zero(field.hidden, field.hidden);
    g.d_embeddings = MatX<T>::Zero(n, field.embed_dim);
    g.d_audio = VecX<T>::Zero(field.audio_dim);
    g.d_expression = VecX<T>::Zero(field.expr_dim);
    for (int h = 0; h < kNumDeformHeads; ++h)
        if (field.heads[h]) {
            g.heads[h].emplace();
            g.heads[h]->init_zero(field.head_dim(h), field.hidden);
        }
    if (field.mask.empty() || n == 0) return g;

    MatX<T> d_h2 = MatX<T>::Zero(n, field.hidden);
    for (int h = 0; h < kNumDeformHeads; ++h) {
        if (!field.heads[h]) continue;
        const MatX<T>& up = d_deltas.by_head(h);
        if (up.size() == 0) continue;
        g.heads[h]->w = up.transpose() * acts.h2;
        g.heads[h]->b = up.colwise().sum();
        d_h2 += up * field.heads[h]->w;
    }
    d_h2 = d_h2.cwiseProduct((acts.h2.array() > T(0)).template cast<T>().matrix());

    g.trunk2.w = d_h2.transpose() * acts.h1;
    g.trunk2.b = d_h2.colwise().sum();
    MatX<T> d_h1 = d_h2 * field.trunk2.w;
    d_h1 = d_h1.cwiseProduct((acts.h1.array() > T(0)).template cast<T>().matrix());

    g.trunk1.w = d_h1.transpose() * acts.input;
    g.trunk1.b = d_h1.colwise().sum();
    MatX<T> d_input = d_h1 * field.trunk1.w;

    const int enc_z_dim = field.enc_z.out_dim(field.embed_dim);
    const int enc_e_dim = field.enc_e.out_dim(field.expr_dim);
    std::vector<T> d_enc_e(enc_e_dim, T(0));
    for (std::int64_t i = 0; i < n; ++i) {
        const T* row = d_input.data() + static_cast<size_t>(i) * field.input_dim();
        field.enc_z.encode_backward(embeddings + static_cast<size_t>(i) * field.embed_dim,
                                    field.embed_dim, row,
                                    g.d_embeddings.data() + static_cast<size_t>(i) * field.embed_dim);
        for (int j = 0; j < field.audio_dim; ++j) g.d_audio[j] += row[enc_z_dim + j];
        for (int j = 0; j < enc_e_dim; ++j) d_enc_e[j] += row[enc_z_dim + field.audio_dim + j];
    }
    field.enc_e.encode_backward(drive.expression.data(), field.expr_dim, d_enc_e.data(),
                                g.d_expression.data());
    return g;
}

// G_deform: adds deltas in unconstrained space; rotation deltas are applied
// additively then renormalized. Attributes outside the mask, and rows whose
// delta is exactly zero, are left bit-identical to the canonical set.
template <class T>
GaussianSetT<T> apply_deltas(const GaussianSetT<T>& canonical, const DeformDeltasT<T>& deltas,
                             const AttrMask& mask) {
    canonical.validate();
    const std::int64_t n = canonical.size();
    require(deltas.n == n || mask.empty(), ErrorCode::invalid_argument,
            "apply_deltas: delta count does not match Gaussian count");
    GaussianSetT<T> out = canonical;
    if (mask.empty()) return out;

    auto apply_rows = [n](std::vector<T>& dst, const MatX<T>& d, int dim) {
        if (d.size() == 0) return;
        require(d.rows() == n && d.cols() == dim, ErrorCode::invalid_argument,
                "apply_deltas: delta shape mismatch");
        require(d.allFinite(), ErrorCode::numeric, "apply_deltas: non-finite deltas");
        for (std::int64_t i = 0; i < n; ++i) {
            const T* row = d.data() + static_cast<size_t>(i) * dim;
            bool any = false;
            for (int j = 0; j < dim; ++j) any = any || row[j] != T(0);
            if (!any) continue;
            for (int j = 0; j < dim; ++j) dst[static_cast<size_t>(i) * dim + j] += row[j];
        }
    };

    if (mask.has(DeformAttr::center)) apply_rows(out.centers, deltas.d_center, 3);
    if (mask.has(DeformAttr::opacity)) apply_rows(out.opacity_logits, deltas.d_opacity, 1);
    if (mask.has(DeformAttr::scale)) apply_rows(out.log_scales, deltas.d_log_scale, 3);
    if (mask.has(DeformAttr::sh)) apply_rows(out.sh, deltas.d_sh, canonical.sh_dim());
    if (mask.has(DeformAttr::rotation) && deltas.d_rotation.size() != 0) {
        require(deltas.d_rotation.rows() == n && deltas.d_rotation.cols() == 4,
                ErrorCode::invalid_argument, "apply_deltas: rotation delta shape mismatch");
        require(deltas.d_rotation.allFinite(), ErrorCode::numeric, "apply_deltas: non-finite deltas");
        for (std::int64_t i = 0; i < n; ++i) {
            const T* row = deltas.d_rotation.data() + static_cast<size_t>(i) * 4;
            if (row[0] == T(0) && row[1] == T(0) && row[2] == T(0) && row[3] == T(0)) continue;
            Vec4<T> q = canonical.rotation(i);
            q += Eigen::Map<const Vec4<T>>(row);
            const T norm = q.norm();
            require(norm > T(0), ErrorCode::numeric, "apply_deltas: zero quaternion after delta");
            Eigen::Map<Vec4<T>>(out.rotations.data() + 4 * i) = q / norm;
        }
    }
    return out;
}

}  // namespace dsplat
