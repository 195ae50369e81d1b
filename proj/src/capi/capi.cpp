#include "dsplat/dsplat.h"

#include "core/gradcheck.hpp"
#include "core/optim.hpp"
#include "core/pipeline.hpp"

#include <chrono>
#include <cstring>
#include <filesystem>

using namespace dsplat;

namespace {

thread_local std::string g_last_error;

dsplat_status status_of(ErrorCode code) {
    switch (code) {
        case ErrorCode::invalid_argument: return DSPLAT_ERR_INVALID;
        case ErrorCode::io: return DSPLAT_ERR_IO;
        case ErrorCode::numeric: return DSPLAT_ERR_NUMERIC;
    }
    return DSPLAT_ERR_INVALID;
}

template <class Fn>
dsplat_status wrap(Fn&& fn) {
    try {
        fn();
        return DSPLAT_OK;
    } catch (const Error& e) {
        g_last_error = e.what();
        return status_of(e.code());
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return DSPLAT_ERR_INVALID;
    }
}

struct ConfigKey {
    const char* name;
    const char* default_value;
};

// every tunable, one key per RunConfig field
constexpr ConfigKey kConfigKeys[] = {
    {"iterations", "8000"},
    {"seed", "42"},
    {"deterministic", "1"},
    {"threads", "0"},
    {"sh_degree", "1"},
    {"emb_dim", "32"},
    {"deform_attrs", "mu,alpha"},
    {"hidden", "64"},
    {"enc_z_freqs", "4"},
    {"enc_e_freqs", "2"},
    {"pos_enc", "1"},
    {"emb_reg", "1"},
    {"lambda_face", "0.01"},
    {"lambda_mouth", "0.002"},
    {"lambda_opa", "0.0001"},
    {"lambda_w", "2000"},
    {"knn_k", "20"},
    {"lr_centers", "0.00016"},
    {"lr_center_decay", "0.01"},
    {"lr_rotations", "0.001"},
    {"lr_scales", "0.005"},
    {"lr_opacities", "0.05"},
    {"lr_sh", "0.0025"},
    {"lr_embeddings", "0.001"},
    {"lr_mlp", "0.0005"},
    {"densify_interval", "100"},
    {"densify_start", "500"},
    {"densify_stop", "0"},
    {"grad_threshold", "0.0002"},
    {"split_scale_frac", "0.01"},
    {"prune_opacity", "0.005"},
    {"max_gaussians", "6000"},
    {"clone_offset_frac", "0.05"},
    {"split_scale_shrink", "1.6"},
    {"max_points", "100000"},
    {"init_opacity", "0.1"},
    {"fallback_scale", "0.1"},
    {"eval_interval", "1000"},
    {"checkpoint_interval", "0"},
    {"synth_frames", "220"},
    {"synth_width", "80"},
    {"synth_height", "80"},
    {"synth_audio_dim", "8"},
    {"synth_split_ratio", "10"},
    {"synth_face_radius", "0.8"},
    {"synth_max_gap", "0.3"},
    {"synth_brow_amplitude", "0.06"},
    {"synth_static", "0"},
};

}  // namespace

struct dsplat_config {
    std::vector<std::pair<std::string, std::string>> values;

    dsplat_config() {
        for (const auto& k : kConfigKeys) values.emplace_back(k.name, k.default_value);
    }
    std::string* find(const std::string& key) {
        for (auto& [k, v] : values)
            if (k == key) return &v;
        return nullptr;
    }
    const std::string& get(const std::string& key) const {
        for (const auto& [k, v] : values)
            if (k == key) return v;
        fail(ErrorCode::invalid_argument, "unknown config key: " + key);
    }
    double num(const std::string& key) const {
        try {
            size_t pos = 0;
            const double v = std::stod(get(key), &pos);
            require(pos == get(key).size(), ErrorCode::invalid_argument, "");
            return v;
        } catch (const std::logic_error&) {
            fail(ErrorCode::invalid_argument, "config key '" + key + "' is not a number: " + get(key));
        }
    }
    int integer(const std::string& key) const { return static_cast<int>(num(key)); }
    bool flag(const std::string& key) const { return num(key) != 0; }
};

struct dsplat_dataset {
    FrameDataset ds;
};

struct dsplat_model {
    Checkpoint ckpt;
};

namespace {

TrainConfig train_config_of(const dsplat_config& c) {
    TrainConfig t;
    t.iterations = c.integer("iterations");
    t.seed = static_cast<std::uint64_t>(c.num("seed"));
    t.deterministic = c.flag("deterministic");
    t.threads = c.integer("threads");
    t.sh_degree = c.integer("sh_degree");
    t.embed_dim = c.integer("emb_dim");
    t.deform_attrs = c.get("deform_attrs") == "none" ? "" : c.get("deform_attrs");
    t.hidden = c.integer("hidden");
    t.enc_z_freqs = c.integer("enc_z_freqs");
    t.enc_e_freqs = c.integer("enc_e_freqs");
    t.pos_enc = c.flag("pos_enc");
    t.emb_reg = c.flag("emb_reg");
    t.loss_weights.face = static_cast<float>(c.num("lambda_face"));
    t.loss_weights.mouth = static_cast<float>(c.num("lambda_mouth"));
    t.loss_weights.opacity = static_cast<float>(c.num("lambda_opa"));
    t.lambda_w = static_cast<float>(c.num("lambda_w"));
    t.knn_k = c.integer("knn_k");
    t.lr_centers = static_cast<float>(c.num("lr_centers"));
    t.lr_center_decay = static_cast<float>(c.num("lr_center_decay"));
    t.lr_rotations = static_cast<float>(c.num("lr_rotations"));
    t.lr_scales = static_cast<float>(c.num("lr_scales"));
    t.lr_opacities = static_cast<float>(c.num("lr_opacities"));
    t.lr_sh = static_cast<float>(c.num("lr_sh"));
    t.lr_embeddings = static_cast<float>(c.num("lr_embeddings"));
    t.lr_mlp = static_cast<float>(c.num("lr_mlp"));
    t.densify.interval = c.integer("densify_interval");
    t.densify.start_iter = c.integer("densify_start");
    t.densify.stop_iter = c.integer("densify_stop");
    t.densify.grad_threshold = static_cast<float>(c.num("grad_threshold"));
    t.densify.split_scale_frac = static_cast<float>(c.num("split_scale_frac"));
    t.densify.prune_opacity = static_cast<float>(c.num("prune_opacity"));
    t.densify.max_gaussians = static_cast<std::int64_t>(c.num("max_gaussians"));
    t.densify.clone_offset_frac = static_cast<float>(c.num("clone_offset_frac"));
    t.densify.split_scale_shrink = static_cast<float>(c.num("split_scale_shrink"));
    t.max_points = static_cast<std::int64_t>(c.num("max_points"));
    t.init_opacity = static_cast<float>(c.num("init_opacity"));
    t.fallback_scale = static_cast<float>(c.num("fallback_scale"));
    t.eval_interval = c.integer("eval_interval");
    t.checkpoint_interval = c.integer("checkpoint_interval");
    return t;
}

SynthConfig synth_config_of(const dsplat_config& c) {
    SynthConfig s;
    s.frames = c.integer("synth_frames");
    s.width = c.integer("synth_width");
    s.height = c.integer("synth_height");
    s.audio_dim = c.integer("synth_audio_dim");
    s.seed = static_cast<std::uint64_t>(c.num("seed"));
    s.split_ratio = c.integer("synth_split_ratio");
    s.face_radius = static_cast<float>(c.num("synth_face_radius"));
    s.max_gap = static_cast<float>(c.num("synth_max_gap"));
    s.brow_amplitude = static_cast<float>(c.num("synth_brow_amplitude"));
    s.static_scene = c.flag("synth_static");
    s.render_threads = c.integer("threads");
    return s;
}

std::vector<int> split_indices(const FrameDataset& ds, const std::string& split) {
    if (split == "train") return ds.train_indices;
    if (split == "test") return ds.test_indices;
    if (split == "all") {
        std::vector<int> all(ds.frame_count);
        for (int i = 0; i < ds.frame_count; ++i) all[i] = i;
        return all;
    }
    fail(ErrorCode::invalid_argument, "split must be train, test or all, got: " + split);
}

GaussianSet bench_scene(std::int64_t n, std::uint64_t seed) {
    auto rng = seeded_rng(seed, 0xbe1c);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    GaussianSet set;
    set.sh_degree = 1;
    set.embed_dim = 1;
    set.resize(n);
    for (std::int64_t i = 0; i < n; ++i) {
        set.centers[3 * i + 0] = static_cast<float>(2 * u(rng) - 1);
        set.centers[3 * i + 1] = static_cast<float>(2 * u(rng) - 1);
        set.centers[3 * i + 2] = static_cast<float>(3.0 + 2 * u(rng));
        set.rotations[4 * i] = 1;
        for (int c = 0; c < 3; ++c)
            set.log_scales[3 * i + c] = static_cast<float>(std::log(0.02 + 0.05 * u(rng)));
        set.opacity_logits[i] = static_cast<float>(-1.5 + 2.0 * u(rng));
        for (int c = 0; c < 3; ++c)
            set.sh[static_cast<size_t>(set.sh_dim()) * i + c] =
                static_cast<float>((u(rng) - 0.5) / kShC0);
    }
    return set;
}

Camera framing_camera(const GaussianSet& set, int width, int height) {
    Vec3<float> centroid = Vec3<float>::Zero();
    for (std::int64_t i = 0; i < set.size(); ++i) centroid += set.center(i);
    if (set.size() > 0) centroid /= static_cast<float>(set.size());
    float extent = 0.1f;
    for (std::int64_t i = 0; i < set.size(); ++i)
        extent = std::max(extent, (set.center(i) - centroid).norm());
    Camera cam;
    cam.width = width;
    cam.height = height;
    const float dist = 2.5f * extent;
    cam.trans = Vec3<float>(0, 0, dist) - centroid;
    cam.fx = cam.fy = 0.4f * std::min(width, height) * dist / extent;
    cam.cx = width / 2.0f;
    cam.cy = height / 2.0f;
    cam.near_clip = 0.01f * dist;
    cam.far_clip = 100.0f * dist;
    return cam;
}

}  // namespace

extern "C" {

const char* dsplat_last_error(void) { return g_last_error.c_str(); }

dsplat_config* dsplat_config_create(void) { return new dsplat_config(); }

void dsplat_config_destroy(dsplat_config* cfg) { delete cfg; }

dsplat_status dsplat_config_set(dsplat_config* cfg, const char* key, const char* value) {
    return wrap([&] {
        require(cfg && key && value, ErrorCode::invalid_argument, "config_set: null argument");
        auto* slot = cfg->find(key);
        require(slot != nullptr, ErrorCode::invalid_argument,
                std::string("unknown config key: ") + key);
        *slot = value;
    });
}

dsplat_status dsplat_config_get(const dsplat_config* cfg, const char* key, char* buf,
                                int32_t bufsize) {
    return wrap([&] {
        require(cfg && key && buf && bufsize > 0, ErrorCode::invalid_argument,
                "config_get: bad arguments");
        const std::string& v = cfg->get(key);
        require(static_cast<int32_t>(v.size()) + 1 <= bufsize, ErrorCode::invalid_argument,
                "config_get: buffer too small");
        std::memcpy(buf, v.c_str(), v.size() + 1);
    });
}

dsplat_status dsplat_config_load_file(dsplat_config* cfg, const char* path) {
    return wrap([&] {
        require(cfg && path, ErrorCode::invalid_argument, "config_load_file: null argument");
        const auto kv = KeyValueFile::load(path);
        for (const auto& [k, v] : kv.entries) {
            auto* slot = cfg->find(k);
            require(slot != nullptr, ErrorCode::invalid_argument,
                    "unknown config key in " + std::string(path) + ": " + k);
            *slot = v;
        }
    });
}

int32_t dsplat_config_describe(const dsplat_config* cfg, char* buf, int32_t bufsize) {
    if (!cfg) return -1;
    std::string out;
    for (const auto& [k, v] : cfg->values) {
        out += k;
        out += ' ';
        out += v;
        out += '\n';
    }
    const int32_t needed = static_cast<int32_t>(out.size()) + 1;
    if (buf && bufsize >= needed) std::memcpy(buf, out.c_str(), needed);
    return needed;
}

dsplat_status dsplat_synth(const dsplat_config* cfg, const char* out_dir) {
    return wrap([&] {
        require(cfg && out_dir, ErrorCode::invalid_argument, "synth: null argument");
        synth_scene_generate(synth_config_of(*cfg), out_dir);
    });
}

dsplat_status dsplat_dataset_open(const char* dir, dsplat_dataset** out) {
    return wrap([&] {
        require(dir && out, ErrorCode::invalid_argument, "dataset_open: null argument");
        auto handle = std::make_unique<dsplat_dataset>();
        handle->ds = load_dataset(dir);
        *out = handle.release();
    });
}

void dsplat_dataset_close(dsplat_dataset* ds) { delete ds; }

dsplat_status dsplat_dataset_get_info(const dsplat_dataset* ds, dsplat_dataset_info* out) {
    return wrap([&] {
        require(ds && out, ErrorCode::invalid_argument, "dataset_get_info: null argument");
        out->frames = ds->ds.frame_count;
        out->width = ds->ds.width;
        out->height = ds->ds.height;
        out->audio_dim = ds->ds.audio_dim;
        out->train_frames = static_cast<int32_t>(ds->ds.train_indices.size());
        out->test_frames = static_cast<int32_t>(ds->ds.test_indices.size());
    });
}

dsplat_status dsplat_train(const dsplat_dataset* ds, const dsplat_config* cfg,
                           const char* checkpoint_path, const char* log_csv_path,
                           dsplat_progress_fn progress, void* user) {
    return wrap([&] {
        require(ds && cfg && checkpoint_path, ErrorCode::invalid_argument, "train: null argument");
        TrainConfig tc = train_config_of(*cfg);
        tc.checkpoint_path = checkpoint_path;
        if (log_csv_path) tc.log_path = log_csv_path;
        ProgressFn hook;
        if (progress)
            hook = [progress, user](int iter, int total, double loss) {
                progress(iter, total, loss, user);
            };
        train(ds->ds, tc, hook);
    });
}

dsplat_status dsplat_model_open(const char* checkpoint_path, dsplat_model** out) {
    return wrap([&] {
        require(checkpoint_path && out, ErrorCode::invalid_argument, "model_open: null argument");
        auto handle = std::make_unique<dsplat_model>();
        handle->ckpt = checkpoint_load(checkpoint_path);
        *out = handle.release();
    });
}

void dsplat_model_close(dsplat_model* model) { delete model; }

dsplat_status dsplat_model_gaussian_count(const dsplat_model* model, int64_t* out) {
    return wrap([&] {
        require(model && out, ErrorCode::invalid_argument, "model_gaussian_count: null argument");
        *out = model->ckpt.set.size();
    });
}

dsplat_status dsplat_render(const dsplat_model* model, const dsplat_dataset* ds,
                            int32_t frame_begin, int32_t frame_end, const char* out_dir,
                            int32_t write_f32_flag, int32_t threads) {
    return wrap([&] {
        require(model && ds && out_dir, ErrorCode::invalid_argument, "render: null argument");
        require(frame_begin >= 0 && frame_end <= ds->ds.frame_count && frame_begin < frame_end,
                ErrorCode::invalid_argument, "render: bad frame range");
        std::filesystem::create_directories(out_dir);
        const auto& set = model->ckpt.set;
        const auto& field = model->ckpt.field;
        for (int i = frame_begin; i < frame_end; ++i) {
            GaussianSet deformed = set;
            if (!field.mask.empty()) {
                const auto deltas =
                    deform_forward(field, set.embeddings.data(), set.size(), ds->ds.features[i]);
                deformed = apply_deltas(set, deltas, field.mask);
            }
            const auto fwd = rasterize_forward(deformed, ds->ds.camera, ds->ds.background, threads);
            char name[64];
            std::snprintf(name, sizeof(name), "/render_%05d", i);
            write_ppm(fwd.image, std::string(out_dir) + name + ".ppm");
            if (write_f32_flag) write_f32(fwd.image, std::string(out_dir) + name + ".f32");
        }
    });
}

dsplat_status dsplat_eval(const dsplat_model* model, const dsplat_dataset* ds, const char* split,
                          int32_t threads, dsplat_eval_result* out) {
    return wrap([&] {
        require(model && ds && split && out, ErrorCode::invalid_argument, "eval: null argument");
        const auto indices = split_indices(ds->ds, split);
        const auto summary =
            evaluate(model->ckpt.set, model->ckpt.field, ds->ds, indices, threads);
        out->mean_psnr = summary.mean_psnr;
        out->mean_ssim = summary.mean_ssim;
        out->gap_mae_px = summary.gap_mae_px;
        out->gap_range_px = summary.gap_range_px;
        out->gap_error_frac = summary.gap_error_frac;
        out->frames = summary.frames;
    });
}

dsplat_status dsplat_eval_frames(const dsplat_model* model, const dsplat_dataset* ds,
                                 const char* split, int32_t threads, dsplat_frame_metrics* buf,
                                 int32_t capacity, int32_t* out_count) {
    return wrap([&] {
        require(model && ds && split && out_count, ErrorCode::invalid_argument,
                "eval_frames: null argument");
        const auto indices = split_indices(ds->ds, split);
        const auto metrics =
            evaluate_frames(model->ckpt.set, model->ckpt.field, ds->ds, indices, threads);
        *out_count = static_cast<int32_t>(metrics.size());
        if (!buf) return;
        for (int32_t i = 0; i < capacity && i < *out_count; ++i) {
            buf[i].frame = metrics[i].frame;
            buf[i].psnr = metrics[i].psnr;
            buf[i].ssim = metrics[i].ssim;
            buf[i].gap_pred_px = metrics[i].gap_pred_px;
            buf[i].gap_gt_px = metrics[i].gap_gt_px;
        }
    });
}

dsplat_status dsplat_gradcheck(uint64_t seed, int32_t scenes, int32_t n_gaussians,
                               int32_t image_size, dsplat_gradcheck_result* out) {
    return wrap([&] {
        require(out, ErrorCode::invalid_argument, "gradcheck: null output");
        GradCheckConfig cfg;
        if (seed) cfg.seed = seed;
        if (scenes > 0) cfg.scenes = scenes;
        if (n_gaussians > 0) cfg.n_gaussians = std::clamp(static_cast<int>(n_gaussians), 2, 50);
        if (image_size > 0) cfg.image_size = std::clamp(static_cast<int>(image_size), 16, 32);
        const auto report = run_gradcheck(cfg);
        std::memset(out, 0, sizeof(*out));
        out->n_classes = static_cast<int32_t>(report.classes.size());
        for (size_t i = 0; i < report.classes.size() && i < DSPLAT_GRADCHECK_CLASSES; ++i) {
            std::snprintf(out->class_names[i], sizeof(out->class_names[i]), "%s",
                          report.classes[i].name.c_str());
            out->max_rel_err[i] = report.classes[i].max_rel_err;
            out->max_abs_err[i] = report.classes[i].max_abs_err;
            out->checked[i] = report.classes[i].checked;
        }
        out->pass = report.pass ? 1 : 0;
    });
}

dsplat_status dsplat_bench(const dsplat_model* model, int32_t width, int32_t height,
                           int32_t threads, int32_t frames, int64_t n_gaussians, uint64_t seed,
                           dsplat_bench_result* out) {
    return wrap([&] {
        require(out && width > 0 && height > 0 && frames > 0, ErrorCode::invalid_argument,
                "bench: bad arguments");
        const GaussianSet set =
            model ? model->ckpt.set : bench_scene(n_gaussians > 0 ? n_gaussians : 1000,
                                                  seed ? seed : 42);
        const Camera cam = framing_camera(set, width, height);
        const Image background(width, height, 0.1f);

        auto time_renders = [&](auto&& render_once) {
            render_once();  // warm up
            const auto t0 = std::chrono::steady_clock::now();
            for (int i = 0; i < frames; ++i) render_once();
            const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
            return frames / std::max(dt.count(), 1e-9);
        };
        out->tiled_fps =
            time_renders([&] { rasterize_forward(set, cam, background, threads); });
        out->brute_fps =
            time_renders([&] { rasterize_brute_force(set, cam, background, threads); });
        out->speedup = out->tiled_fps / out->brute_fps;
        out->frames = frames;
        out->width = width;
        out->height = height;
        out->n_gaussians = set.size();
    });
}

dsplat_status dsplat_model_size_report(const char* checkpoint_path, dsplat_size_report* out) {
    return wrap([&] {
        require(checkpoint_path && out, ErrorCode::invalid_argument,
                "model_size_report: null argument");
        const SizeReport r = model_size_report(checkpoint_path);
        out->n_gaussians = r.n_gaussians;
        out->sh_degree = r.sh_degree;
        out->embed_dim = r.embed_dim;
        out->floats_per_gaussian = r.floats_per_gaussian;
        out->header_bytes = r.header_bytes;
        out->attribute_bytes = r.attribute_bytes;
        out->embedding_bytes = r.embedding_bytes;
        out->mlp_bytes = r.mlp_bytes;
        out->payload_bytes = r.payload_bytes;
        out->file_bytes = r.file_bytes;
    });
}

}  // extern "C"
