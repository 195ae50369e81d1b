#include "core/deform.hpp"

#include "core/rasterizer.hpp"
#include "test_util.hpp"

#include <doctest.h>

using namespace dsplat;
using namespace dsplat::testutil;

namespace {

DeformFieldT<double> small_field(const std::string& attrs, int embed_dim = 4, int audio_dim = 3,
                                 int hidden = 8, std::uint64_t seed = 1) {
    DeformFieldT<double> field;
    field.embed_dim = embed_dim;
    field.audio_dim = audio_dim;
    field.hidden = hidden;
    field.sh_dim = 12;
    field.mask = AttrMask::parse(attrs);
    field.init(seed);
    return field;
}

DrivingFeaturesT<double> small_drive(int audio_dim, std::uint64_t seed) {
    auto rng = seeded_rng(seed, 0xd);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    DrivingFeaturesT<double> dr;
    dr.audio.resize(audio_dim);
    for (int i = 0; i < audio_dim; ++i) dr.audio[i] = 2 * u(rng) - 1;
    dr.expression.resize(6);
    for (int i = 0; i < 6; ++i) dr.expression[i] = 5 * u(rng);
    return dr;
}

}  // namespace

TEST_SUITE_BEGIN("deform");

TEST_CASE("pos_encode: zero input, two frequencies") {
    const auto out = pos_encode<double>({0.0}, 2);
    REQUIRE(out.size() == 5);
    CHECK(out[0] == 0.0);
    CHECK(out[1] == 0.0);  // sin(pi*0)
    CHECK(out[2] == 1.0);  // cos(pi*0)
    CHECK(out[3] == 0.0);  // sin(2pi*0)
    CHECK(out[4] == 1.0);  // cos(2pi*0)
}

TEST_CASE("pos_encode: zero frequencies is the identity") {
    const std::vector<double> v = {0.3, -0.7, 0.11};
    CHECK(pos_encode(v, 0) == v);
}

TEST_CASE("pos_encode: half input hits the sine peak") {
    const auto out = pos_encode<double>({0.5}, 1);
    REQUIRE(out.size() == 3);
    CHECK(out[0] == 0.5);
    CHECK(out[1] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(out[2] == doctest::Approx(0.0).scale(1).epsilon(1e-12));
}

TEST_CASE("pos_encode: output dimension follows the formula") {
    PosEncoder enc{4, true};
    CHECK(enc.out_dim(32) == 32 * 9);
    PosEncoder enc2{3, false};
    CHECK(enc2.out_dim(6) == 36);
}

TEST_CASE("pos_encode: injective on [-1,1) with include-input") {
    auto rng = seeded_rng(31, 0);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        const double a = u(rng), b = u(rng);
        if (std::abs(a - b) < 1e-9) continue;
        const auto ea = pos_encode<double>({a}, 2);
        const auto eb = pos_encode<double>({b}, 2);
        double dist = 0;
        for (size_t i = 0; i < ea.size(); ++i) dist += std::abs(ea[i] - eb[i]);
        CHECK(dist > 0);
    }
}

TEST_CASE("zero-initialized heads produce exactly zero deltas") {
    const auto field = small_field("mu,alpha,r,s,f");
    const std::int64_t n = 5;
    std::vector<double> z(n * field.embed_dim, 0.37);
    const auto deltas = deform_forward(field, z.data(), n, small_drive(field.audio_dim, 2));
    for (Eigen::Index i = 0; i < deltas.d_center.size(); ++i) CHECK(deltas.d_center.data()[i] == 0.0);
    for (Eigen::Index i = 0; i < deltas.d_opacity.size(); ++i) CHECK(deltas.d_opacity.data()[i] == 0.0);
    for (Eigen::Index i = 0; i < deltas.d_rotation.size(); ++i) CHECK(deltas.d_rotation.data()[i] == 0.0);
    for (Eigen::Index i = 0; i < deltas.d_log_scale.size(); ++i) CHECK(deltas.d_log_scale.data()[i] == 0.0);
    for (Eigen::Index i = 0; i < deltas.d_sh.size(); ++i) CHECK(deltas.d_sh.data()[i] == 0.0);
}

TEST_CASE("masked-out heads are absent and their deltas empty") {
    const auto field = small_field("mu,alpha");
    CHECK(field.heads[0].has_value());
    CHECK(field.heads[1].has_value());
    CHECK_FALSE(field.heads[2].has_value());
    CHECK_FALSE(field.heads[3].has_value());
    CHECK_FALSE(field.heads[4].has_value());
    std::vector<double> z(3 * field.embed_dim, 0.1);
    const auto deltas = deform_forward(field, z.data(), 3, small_drive(field.audio_dim, 3));
    CHECK(deltas.d_rotation.size() == 0);
    CHECK(deltas.d_log_scale.size() == 0);
    CHECK(deltas.d_sh.size() == 0);
}

TEST_CASE("tiny hand-set network matches the affine chain") {
    DeformFieldT<double> field;
    field.embed_dim = 1;
    field.audio_dim = 1;
    field.hidden = 1;
    field.sh_dim = 12;
    field.enc_z = PosEncoder{0, true};
    field.enc_e = PosEncoder{0, true};
    field.mask = AttrMask::parse("mu");
    field.init(0);
    // input = [z, a, e0..e5], all weights hand-set
    field.trunk1.w << 0.5, -0.25, 0.1, 0.2, -0.3, 0.15, 0.05, -0.1;
    field.trunk1.b << 0.05;
    field.trunk2.w << 1.5;
    field.trunk2.b << -0.02;
    field.heads[0]->w.resize(3, 1);
    field.heads[0]->w << 2.0, -1.0, 0.5;
    field.heads[0]->b << 0.01, 0.02, 0.03;

    const double z = 0.4, a = -0.6;
    const double e[6] = {1.0, 2.0, 0.5, 3.0, 4.0, 0.25};
    DrivingFeaturesT<double> drive;
    drive.audio.resize(1);
    drive.audio[0] = a;
    drive.expression.resize(6);
    for (int i = 0; i < 6; ++i) drive.expression[i] = e[i];

    const double pre1 = 0.5 * z - 0.25 * a + 0.1 * e[0] + 0.2 * e[1] - 0.3 * e[2] + 0.15 * e[3] +
                        0.05 * e[4] - 0.1 * e[5] + 0.05;
    const double h1 = std::max(0.0, pre1);
    const double h2 = std::max(0.0, 1.5 * h1 - 0.02);
    const double expected[3] = {2.0 * h2 + 0.01, -1.0 * h2 + 0.02, 0.5 * h2 + 0.03};

    const auto deltas = deform_forward(field, &z, 1, drive);
    for (int c = 0; c < 3; ++c)
        CHECK(deltas.d_center(0, c) == doctest::Approx(expected[c]).epsilon(1e-12));
}

TEST_CASE("apply_deltas: all-zero deltas reproduce the canonical set bit for bit") {
    const auto set = random_scene<float>(20, 40, 0.8);
    const AttrMask mask = AttrMask::parse("mu,alpha,r,s,f");
    DeformDeltasT<float> deltas;
    deltas.n = set.size();
    deltas.d_center = MatX<float>::Zero(set.size(), 3);
    deltas.d_opacity = MatX<float>::Zero(set.size(), 1);
    deltas.d_rotation = MatX<float>::Zero(set.size(), 4);
    deltas.d_log_scale = MatX<float>::Zero(set.size(), 3);
    deltas.d_sh = MatX<float>::Zero(set.size(), set.sh_dim());
    const auto out = apply_deltas(set, deltas, mask);
    CHECK(out.centers == set.centers);
    CHECK(out.rotations == set.rotations);
    CHECK(out.log_scales == set.log_scales);
    CHECK(out.opacity_logits == set.opacity_logits);
    CHECK(out.sh == set.sh);
}

TEST_CASE("apply_deltas: uniform center shift") {
    const auto set = random_scene<float>(10, 41, 0.8);
    DeformDeltasT<float> deltas;
    deltas.n = set.size();
    deltas.d_center = MatX<float>::Zero(set.size(), 3);
    deltas.d_center.col(0).setConstant(1.0f);
    const auto out = apply_deltas(set, deltas, AttrMask::parse("mu"));
    for (std::int64_t i = 0; i < set.size(); ++i) {
        CHECK(out.centers[3 * i] == set.centers[3 * i] + 1.0f);
        CHECK(out.centers[3 * i + 1] == set.centers[3 * i + 1]);
    }
}

TEST_CASE("apply_deltas: opacity saturates below one under huge logit deltas") {
    auto set = random_scene<float>(4, 42, 0.8);
    DeformDeltasT<float> deltas;
    deltas.n = set.size();
    deltas.d_opacity = MatX<float>::Constant(set.size(), 1, 12.0f);
    const auto out = apply_deltas(set, deltas, AttrMask::parse("alpha"));
    for (std::int64_t i = 0; i < out.size(); ++i) {
        CHECK(out.opacity(i) < 1.0f);
        CHECK(out.opacity(i) > 0.999f);
    }
}

TEST_CASE("apply_deltas: rotation deltas renormalize") {
    auto set = random_scene<float>(6, 43, 0.8);
    DeformDeltasT<float> deltas;
    deltas.n = set.size();
    deltas.d_rotation = MatX<float>::Constant(set.size(), 4, 0.3f);
    const auto out = apply_deltas(set, deltas, AttrMask::parse("r"));
    for (std::int64_t i = 0; i < out.size(); ++i)
        CHECK(out.rotation(i).norm() == doctest::Approx(1.0f).epsilon(1e-6));
}

TEST_CASE("apply_deltas: non-finite deltas are rejected") {
    auto set = random_scene<float>(3, 44, 0.8);
    DeformDeltasT<float> deltas;
    deltas.n = set.size();
    deltas.d_center = MatX<float>::Zero(set.size(), 3);
    deltas.d_center(1, 2) = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(apply_deltas(set, deltas, AttrMask::parse("mu")), Error);
}

TEST_CASE("deform_backward: matches central finite differences") {
    const auto field_base = small_field("mu,alpha,r,s,f", 3, 2, 6, 7);
    const std::int64_t n = 4;

    // random upstream delta gradients define L = sum(up . deltas)
    auto rng = seeded_rng(71, 0);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    DeformFieldT<double> field = field_base;
    for (int h = 0; h < kNumDeformHeads; ++h) {
        auto& head = *field.heads[h];
        for (Eigen::Index i = 0; i < head.w.size(); ++i) head.w.data()[i] = 0.2 * u(rng);
        for (Eigen::Index i = 0; i < head.b.size(); ++i) head.b.data()[i] = 0.1 * u(rng);
    }
    std::vector<double> z(n * field.embed_dim);
    for (auto& v : z) v = 0.8 * u(rng);
    const auto drive = small_drive(field.audio_dim, 8);

    DeformDeltasT<double> up;
    up.n = n;
    up.d_center = MatX<double>::NullaryExpr(n, 3, [&](Eigen::Index, Eigen::Index) { return u(rng); });
    up.d_opacity = MatX<double>::NullaryExpr(n, 1, [&](Eigen::Index, Eigen::Index) { return u(rng); });
    up.d_rotation = MatX<double>::NullaryExpr(n, 4, [&](Eigen::Index, Eigen::Index) { return u(rng); });
    up.d_log_scale = MatX<double>::NullaryExpr(n, 3, [&](Eigen::Index, Eigen::Index) { return u(rng); });
    up.d_sh =
        MatX<double>::NullaryExpr(n, field.sh_dim, [&](Eigen::Index, Eigen::Index) { return u(rng); });

    auto loss_of = [&](const DeformFieldT<double>& f, const std::vector<double>& zz,
                       const DrivingFeaturesT<double>& dr) {
        const auto deltas = deform_forward(f, zz.data(), n, dr);
        double total = 0;
        total += (up.d_center.cwiseProduct(deltas.d_center)).sum();
        total += (up.d_opacity.cwiseProduct(deltas.d_opacity)).sum();
        total += (up.d_rotation.cwiseProduct(deltas.d_rotation)).sum();
        total += (up.d_log_scale.cwiseProduct(deltas.d_log_scale)).sum();
        total += (up.d_sh.cwiseProduct(deltas.d_sh)).sum();
        return total;
    };

    // keep ReLU pre-activations away from zero so the FD sees a smooth chain
    {
        DeformActsT<double> acts;
        deform_forward(field, z.data(), n, drive, &acts);
        const MatX<double> pre1 =
            (acts.input * field.trunk1.w.transpose()).rowwise() + field.trunk1.b.transpose();
        const MatX<double> pre2 =
            (acts.h1 * field.trunk2.w.transpose()).rowwise() + field.trunk2.b.transpose();
        REQUIRE(pre1.cwiseAbs().minCoeff() > 1e-4);
        REQUIRE(pre2.cwiseAbs().minCoeff() > 1e-4);
    }

    DeformActsT<double> acts;
    deform_forward(field, z.data(), n, drive, &acts);
    const auto grads = deform_backward(field, z.data(), n, drive, acts, up);

    const double h = 1e-6;
    auto fd_check = [&](double* slot, double analytic) {
        const double orig = *slot;
        *slot = orig + h;
        const double lp = loss_of(field, z, drive);
        *slot = orig - h;
        const double lm = loss_of(field, z, drive);
        *slot = orig;
        const double fd = (lp - lm) / (2 * h);
        const double mag = std::max(std::abs(fd), std::abs(analytic));
        if (mag < 1e-6) CHECK(std::abs(fd - analytic) <= 1e-8);
        else CHECK(std::abs(fd - analytic) / mag <= 1e-4);
    };

    for (Eigen::Index i = 0; i < field.trunk1.w.size(); ++i)
        fd_check(field.trunk1.w.data() + i, grads.trunk1.w.data()[i]);
    for (Eigen::Index i = 0; i < field.trunk1.b.size(); ++i)
        fd_check(field.trunk1.b.data() + i, grads.trunk1.b.data()[i]);
    for (Eigen::Index i = 0; i < field.trunk2.w.size(); ++i)
        fd_check(field.trunk2.w.data() + i, grads.trunk2.w.data()[i]);
    for (int hd = 0; hd < kNumDeformHeads; ++hd)
        for (Eigen::Index i = 0; i < field.heads[hd]->w.size(); ++i)
            fd_check(field.heads[hd]->w.data() + i, grads.heads[hd]->w.data()[i]);

    // embeddings and driving features
    for (size_t i = 0; i < z.size(); ++i) fd_check(&z[i], grads.d_embeddings.data()[i]);
    for (Eigen::Index i = 0; i < drive.audio.size(); ++i)
        fd_check(const_cast<double*>(drive.audio.data()) + i, grads.d_audio[i]);
    for (Eigen::Index i = 0; i < drive.expression.size(); ++i)
        fd_check(const_cast<double*>(drive.expression.data()) + i, grads.d_expression[i]);
}

TEST_CASE("end-to-end identity at initialization") {
    const auto set = random_scene<float>(40, 45, 0.8, 1, 8);
    DeformField field;
    field.embed_dim = 8;
    field.audio_dim = 5;
    field.hidden = 16;
    field.sh_dim = set.sh_dim();
    field.mask = AttrMask::parse("mu,alpha");
    field.init(99);

    DrivingFeatures drive;
    drive.audio = VecX<float>::Random(5);
    drive.expression = (VecX<float>::Random(6).array() + 1).matrix() * 2.5f;

    const auto deltas = deform_forward(field, set.embeddings.data(), set.size(), drive);
    const auto deformed = apply_deltas(set, deltas, field.mask);
    CHECK(deformed.centers == set.centers);
    CHECK(deformed.opacity_logits == set.opacity_logits);

    const auto cam = testutil::square_camera<float>(48);
    const auto bg = testutil::smooth_background<float>(48, 48, 46);
    const auto a = rasterize_forward(set, cam, bg).image;
    const auto b = rasterize_forward(deformed, cam, bg).image;
    CHECK(a.data == b.data);
}

TEST_CASE("gradient flows into embeddings once heads are perturbed") {
    auto field = small_field("mu,alpha", 4, 3, 8, 5);
    auto rng = seeded_rng(47, 0);
    std::uniform_real_distribution<double> u(-0.1, 0.1);
    for (int h : {0, 1})
        for (Eigen::Index i = 0; i < field.heads[h]->w.size(); ++i)
            field.heads[h]->w.data()[i] = u(rng);

    const std::int64_t n = 6;
    std::vector<double> z(n * field.embed_dim);
    for (auto& v : z) v = u(rng) * 5;
    const auto drive = small_drive(field.audio_dim, 9);

    DeformActsT<double> acts;
    const auto deltas = deform_forward(field, z.data(), n, drive, &acts);
    DeformDeltasT<double> up;
    up.n = n;
    up.d_center = MatX<double>::Constant(n, 3, 0.5);
    up.d_opacity = MatX<double>::Constant(n, 1, -0.25);
    const auto grads = deform_backward(field, z.data(), n, drive, acts, up);
    CHECK(grads.d_embeddings.cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("dimension mismatches are shape errors") {
    const auto field = small_field("mu");
    std::vector<double> z(2 * field.embed_dim, 0.0);
    DrivingFeaturesT<double> bad;
    bad.audio.resize(field.audio_dim + 1);
    bad.audio.setZero();
    bad.expression.resize(6);
    bad.expression.setZero();
    CHECK_THROWS_AS(deform_forward(field, z.data(), 2, bad), Error);
}

TEST_SUITE_END();
