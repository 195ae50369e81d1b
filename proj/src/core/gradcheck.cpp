#include "core/gradcheck.hpp"

namespace dsplat {

namespace {

// Branch-boundary safety thresholds for the screening pass. A step of 1e-6
// moves any forward quantity by at most ~2e-7 (step times the largest local
// Lipschitz bound along any parameter), so these leave >=50x headroom while
// keeping margin-clean seeds common.
struct MarginThresholds {
    double blend = 1e-5;      // alpha skip/clamp, transmittance stop
    double power = 1e-9;      // power>0 guard only fires on exact-zero pathologies
    double color = 5e-3;      // SH clamp
    double tile_edge = 1e-4;  // tile units
    double frustum = 1e-3;
    double depth_gap = 1e-4;
    double z_pair = 1e-3;     // embedding pair distance (norm kink at zero)
};

bool margins_ok(const KinkMargins<double>& m, double min_z_pair, const MarginThresholds& th) {
    return m.alpha_skip > th.blend && m.alpha_clamp > th.blend && m.transmit_stop > th.blend &&
           m.power_sign > th.power && m.color_clamp > th.color && m.tile_edge > th.tile_edge &&
           m.frustum > th.frustum && m.depth_gap > th.depth_gap && min_z_pair > th.z_pair;
}

FdScene try_build(const GradCheckConfig& cfg, std::uint64_t seed) {
    FdScene sc;
    sc.seed = seed;
    auto rng = seeded_rng(seed, 0xfd);
    std::uniform_real_distribution<double> u(0.0, 1.0);

    sc.cam.width = sc.cam.height = cfg.image_size;
    sc.cam.fx = sc.cam.fy = cfg.image_size * 0.9;
    sc.cam.cx = sc.cam.cy = cfg.image_size / 2.0;
    sc.cam.near_clip = 0.1;
    sc.cam.far_clip = 50.0;

    auto& set = sc.set;
    set.sh_degree = cfg.sh_degree;
    set.embed_dim = cfg.embed_dim;
    set.resize(cfg.n_gaussians);
    const int sh_dim = set.sh_dim();
    for (int i = 0; i < cfg.n_gaussians; ++i) {
        const double z = 1.8 + 0.8 * u(rng);
        const double span = 0.35 * z * cfg.image_size / sc.cam.fx;  // stay inside the frustum
        set.centers[3 * i + 0] = span * (2 * u(rng) - 1);
        set.centers[3 * i + 1] = span * (2 * u(rng) - 1);
        set.centers[3 * i + 2] = z;
        Vec4<double> q;
        for (int c = 0; c < 4; ++c) q[c] = 2 * u(rng) - 1;
        q.normalize();
        for (int c = 0; c < 4; ++c) set.rotations[4 * i + c] = q[c];
        for (int c = 0; c < 3; ++c)
            set.log_scales[3 * i + c] = std::log(0.05 + 0.10 * u(rng));
        set.opacity_logits[i] = -2.0 + 3.2 * u(rng);  // alpha in (0.12, 0.77)
        for (int b = 0; b < sh_dim / 3; ++b)
            for (int c = 0; c < 3; ++c)
                set.sh[static_cast<size_t>(sh_dim) * i + 3 * b + c] =
                    b == 0 ? ((0.3 + 0.4 * u(rng)) - 0.5) / kShC0 : 0.08 * (2 * u(rng) - 1);
        for (int c = 0; c < cfg.embed_dim; ++c)
            set.embeddings[static_cast<size_t>(cfg.embed_dim) * i + c] = 0.6 * (2 * u(rng) - 1);
    }

    auto& field = sc.field;
    field.embed_dim = cfg.embed_dim;
    field.audio_dim = cfg.audio_dim;
    field.hidden = cfg.hidden;
    field.sh_dim = sh_dim;
    field.mask = AttrMask::parse(cfg.deform_attrs);
    field.init(seed);
    // heads start at zero by contract; give them small random values so every
    // path carries gradient, scaled to keep the deformation tiny
    for (int h = 0; h < kNumDeformHeads; ++h) {
        if (!field.heads[h]) continue;
        auto& head = *field.heads[h];
        for (Eigen::Index i = 0; i < head.w.size(); ++i)
            head.w.data()[i] = 0.02 * (2 * u(rng) - 1) / std::sqrt(double(cfg.hidden));
        for (Eigen::Index i = 0; i < head.b.size(); ++i) head.b.data()[i] = 0.005 * (2 * u(rng) - 1);
    }

    sc.drive.audio.resize(cfg.audio_dim);
    for (int j = 0; j < cfg.audio_dim; ++j) sc.drive.audio[j] = 2 * u(rng) - 1;
    sc.drive.expression.resize(6);
    for (int j = 0; j < 6; ++j) sc.drive.expression[j] = 5 * u(rng);

    sc.background = ImageT<double>(cfg.image_size, cfg.image_size);
    sc.gt = ImageT<double>(cfg.image_size, cfg.image_size);
    const double pa = 2 + 4 * u(rng), pb = 2 + 4 * u(rng), pc = 2 * M_PI * u(rng);
    for (int y = 0; y < cfg.image_size; ++y)
        for (int x = 0; x < cfg.image_size; ++x)
            for (int c = 0; c < 3; ++c) {
                sc.background.at(x, y)[c] = 0.2 + 0.15 * std::sin(0.31 * x + 0.7 * c) *
                                                      std::cos(0.27 * y - 0.3 * c);
                sc.gt.at(x, y)[c] =
                    0.5 + 0.35 * std::sin(pa * x / cfg.image_size + c) *
                              std::sin(pb * y / cfg.image_size + pc);
            }

    const int m = std::min(16, cfg.image_size);
    sc.mouth = {cfg.image_size / 4, cfg.image_size / 4, m, m};
    if (sc.mouth.x + sc.mouth.w > cfg.image_size) sc.mouth.x = cfg.image_size - sc.mouth.w;
    if (sc.mouth.y + sc.mouth.h > cfg.image_size) sc.mouth.y = cfg.image_size - sc.mouth.h;

    sc.knn = knn_build(set.centers.data(), set.size(), 5, 2000.0);
    sc.weights = LossWeightsT<double>{0.01, 0.002, 1e-4};
    return sc;
}

double min_embedding_pair_distance(const GaussianSetT<double>& set, const KnnIndexT<double>& knn) {
    double best = std::numeric_limits<double>::max();
    for (std::int64_t i = 0; i < set.size(); ++i)
        for (int t = 0; t < knn.k; ++t) {
            const std::int64_t j = knn.neighbors[i * knn.k + t];
            double d2 = 0;
            for (int c = 0; c < set.embed_dim; ++c) {
                const double d = set.embeddings[i * set.embed_dim + c] -
                                 set.embeddings[j * set.embed_dim + c];
                d2 += d * d;
            }
            best = std::min(best, std::sqrt(d2));
        }
    return best;
}

}  // namespace

FdScene build_fd_scene(const GradCheckConfig& cfg, std::uint64_t base_seed) {
    const MarginThresholds th;
    for (int trial = 0; trial < cfg.max_seed_trials; ++trial) {
        FdScene sc = try_build(cfg, base_seed + 1000 * static_cast<std::uint64_t>(trial));
        KinkMargins<double> margins;
        pipeline_loss(sc.set, sc.field, sc.drive, sc.cam, sc.background, sc.gt, sc.mouth, sc.knn,
                      sc.weights, 1, static_cast<ImageT<double>*>(nullptr), &margins);
        if (margins_ok(margins, min_embedding_pair_distance(sc.set, sc.knn), th)) return sc;
    }
    fail(ErrorCode::numeric, "gradcheck: no margin-clean scene found in " +
                                 std::to_string(cfg.max_seed_trials) + " trials");
}

GradCheckReport run_gradcheck(const GradCheckConfig& cfg) {
    require(cfg.n_gaussians >= 2 && cfg.image_size >= 16, ErrorCode::invalid_argument,
            "gradcheck: need at least 2 Gaussians and a 16px image");
    GradCheckReport report;
    const char* class_names[] = {"mu", "q", "s", "alpha", "f", "z", "mlp", "a", "e"};
    report.classes.resize(9);
    for (int c = 0; c < 9; ++c) report.classes[c].name = class_names[c];

    for (int scene_idx = 0; scene_idx < cfg.scenes; ++scene_idx) {
        FdScene sc = build_fd_scene(cfg, cfg.seed + 77777 * static_cast<std::uint64_t>(scene_idx));
        report.scene_seeds.push_back(sc.seed);

        const auto analytic = pipeline_gradients(sc.set, sc.field, sc.drive, sc.cam, sc.background,
                                                 sc.gt, sc.mouth, sc.knn, sc.weights);

        auto loss_at = [&]() {
            return pipeline_loss(sc.set, sc.field, sc.drive, sc.cam, sc.background, sc.gt, sc.mouth,
                                 sc.knn, sc.weights)
                .total;
        };
        auto check = [&](GradCheckClassResult& res, double* param, const double* grad,
                         std::int64_t count) {
            for (std::int64_t i = 0; i < count; ++i) {
                const double orig = param[i];
                param[i] = orig + cfg.step;
                const double lp = loss_at();
                param[i] = orig - cfg.step;
                const double lm = loss_at();
                param[i] = orig;
                const double fd = (lp - lm) / (2 * cfg.step);
                const double an = grad[i];
                const double mag = std::max(std::abs(fd), std::abs(an));
                if (mag >= cfg.small_grad)
                    res.max_rel_err = std::max(res.max_rel_err, std::abs(fd - an) / mag);
                else
                    res.max_abs_err = std::max(res.max_abs_err, std::abs(fd - an));
                ++res.checked;
            }
        };

        check(report.classes[0], sc.set.centers.data(), analytic.d_centers.data(),
              static_cast<std::int64_t>(sc.set.centers.size()));
        check(report.classes[1], sc.set.rotations.data(), analytic.d_rotations.data(),
              static_cast<std::int64_t>(sc.set.rotations.size()));
        check(report.classes[2], sc.set.log_scales.data(), analytic.d_log_scales.data(),
              static_cast<std::int64_t>(sc.set.log_scales.size()));
        check(report.classes[3], sc.set.opacity_logits.data(), analytic.d_opacity_logits.data(),
              static_cast<std::int64_t>(sc.set.opacity_logits.size()));
        check(report.classes[4], sc.set.sh.data(), analytic.d_sh.data(),
              static_cast<std::int64_t>(sc.set.sh.size()));
        check(report.classes[5], sc.set.embeddings.data(), analytic.d_embeddings.data(),
              static_cast<std::int64_t>(sc.set.embeddings.size()));

        auto check_linear = [&](LinearT<double>& layer, const LinearT<double>& grad) {
            check(report.classes[6], layer.w.data(), grad.w.data(), layer.w.size());
            check(report.classes[6], layer.b.data(), grad.b.data(), layer.b.size());
        };
        check_linear(sc.field.trunk1, analytic.mlp.trunk1);
        check_linear(sc.field.trunk2, analytic.mlp.trunk2);
        for (int h = 0; h < kNumDeformHeads; ++h)
            if (sc.field.heads[h]) check_linear(*sc.field.heads[h], *analytic.mlp.heads[h]);

        check(report.classes[7], sc.drive.audio.data(), analytic.mlp.d_audio.data(),
              sc.drive.audio.size());
        check(report.classes[8], sc.drive.expression.data(), analytic.mlp.d_expression.data(),
              sc.drive.expression.size());
    }

    for (auto& res : report.classes) {
        res.pass = res.max_rel_err <= cfg.rel_tol && res.max_abs_err <= cfg.abs_tol;
        report.pass = report.pass && res.pass;
    }
    return report;
}

}  // namespace dsplat
