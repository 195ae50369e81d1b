// dsplat command-line driver. Links only the public C API.

#include "dsplat/dsplat.h"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace {

struct ConfigHandle {
    dsplat_config* cfg;
    ConfigHandle() : cfg(dsplat_config_create()) {}
    ~ConfigHandle() { dsplat_config_destroy(cfg); }
};

struct DatasetHandle {
    dsplat_dataset* ds = nullptr;
    ~DatasetHandle() {
        if (ds) dsplat_dataset_close(ds);
    }
};

struct ModelHandle {
    dsplat_model* model = nullptr;
    ~ModelHandle() {
        if (model) dsplat_model_close(model);
    }
};

int report_failure(dsplat_status st, const char* what) {
    std::fprintf(stderr, "error: %s: %s\n", what, dsplat_last_error());
    return static_cast<int>(st);
}

#define CHECK_API(call, what)                                        \
    do {                                                             \
        const dsplat_status st__ = (call);                           \
        if (st__ != DSPLAT_OK) return report_failure(st__, (what)); \
    } while (0)

// key/default pairs from the engine, used to expose every RunConfig key as a
// CLI flag with its default visible in --help
std::vector<std::pair<std::string, std::string>> config_defaults() {
    ConfigHandle tmp;
    const int32_t needed = dsplat_config_describe(tmp.cfg, nullptr, 0);
    std::string buf(needed, '\0');
    dsplat_config_describe(tmp.cfg, buf.data(), needed);
    std::vector<std::pair<std::string, std::string>> out;
    size_t pos = 0;
    while (pos < buf.size()) {
        const size_t nl = buf.find('\n', pos);
        if (nl == std::string::npos) break;
        const std::string line = buf.substr(pos, nl - pos);
        pos = nl + 1;
        const size_t sp = line.find(' ');
        if (sp != std::string::npos) out.emplace_back(line.substr(0, sp), line.substr(sp + 1));
    }
    return out;
}

struct RunOptions {
    std::string config_file;
    std::shared_ptr<std::map<std::string, std::string>> overrides =
        std::make_shared<std::map<std::string, std::string>>();
};

void add_config_flags(CLI::App* cmd, RunOptions& opts) {
    cmd->add_option("--config", opts.config_file,
                    "key-value config file; explicit flags override its entries");
    for (const auto& [key, def] : config_defaults()) {
        std::string flag = "--" + key;
        std::string dashed = key;
        for (auto& c : dashed)
            if (c == '_') c = '-';
        if (dashed != key) flag += ",--" + dashed;
        auto overrides = opts.overrides;
        std::string key_copy = key;
        cmd->add_option_function<std::string>(
               flag,
               [overrides, key_copy](const std::string& v) { (*overrides)[key_copy] = v; },
               "config key " + key + " (default: " + def + ")")
            ->type_name("VALUE");
    }
    auto overrides = opts.overrides;
    cmd->add_flag_callback(
        "--no-pos-enc", [overrides] { (*overrides)["pos_enc"] = "0"; },
        "disable positional encodings (ablation)");
    cmd->add_flag_callback(
        "--no-emb-reg", [overrides] { (*overrides)["emb_reg"] = "0"; },
        "disable the embedding smoothness regularizer (ablation)");
}

int apply_config(dsplat_config* cfg, const RunOptions& opts) {
    if (!opts.config_file.empty()) {
        const dsplat_status st = dsplat_config_load_file(cfg, opts.config_file.c_str());
        if (st != DSPLAT_OK) return report_failure(st, "loading config file");
    }
    for (const auto& [k, v] : *opts.overrides) {
        const dsplat_status st = dsplat_config_set(cfg, k.c_str(), v.c_str());
        if (st != DSPLAT_OK) return report_failure(st, ("setting " + k).c_str());
    }
    return 0;
}

void progress_printer(int32_t iter, int32_t total, double loss, void*) {
    if (iter % 500 == 0 || iter == total)
        std::fprintf(stderr, "iter %d/%d loss %.6f\n", iter, total, loss);
}

std::string fmt_psnr(double v) {
    if (std::isinf(v)) return "inf";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dsplat: embedding-driven deformable Gaussian splatting engine"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic driven-aperture dataset");
    std::string synth_out;
    RunOptions synth_opts;
    synth->add_option("out_dir", synth_out, "output dataset directory")->required();
    add_config_flags(synth, synth_opts);

    // train
    auto* train = app.add_subcommand("train", "train a model on a dataset");
    std::string train_dataset, train_ckpt, train_log;
    RunOptions train_opts;
    train->add_option("dataset", train_dataset, "dataset directory")->required();
    train->add_option("checkpoint", train_ckpt, "output checkpoint path")->required();
    train->add_option("--log", train_log, "training CSV log path");
    add_config_flags(train, train_opts);

    // render
    auto* render = app.add_subcommand("render", "render driven frames from a checkpoint");
    std::string render_ckpt, render_dataset, render_out, render_range = "";
    bool render_f32 = false;
    int render_threads = 0;
    render->add_option("checkpoint", render_ckpt)->required();
    render->add_option("dataset", render_dataset)->required();
    render->add_option("out_dir", render_out)->required();
    render->add_option("--range", render_range, "frame range begin:end (default: all)");
    render->add_flag("--f32", render_f32, "also write float32 planar sidecars");
    render->add_option("--threads", render_threads, "rasterizer threads");

    // eval
    auto* eval = app.add_subcommand("eval", "PSNR/SSIM and aperture-gap metrics for a split");
    std::string eval_ckpt, eval_dataset, eval_split = "test";
    int eval_threads = 0;
    bool eval_table = false;
    eval->add_option("checkpoint", eval_ckpt)->required();
    eval->add_option("dataset", eval_dataset)->required();
    eval->add_option("--split", eval_split, "train, test or all (default test)");
    eval->add_option("--threads", eval_threads, "rasterizer threads");
    eval->add_flag("--per-frame", eval_table, "print the per-frame metric table");

    // gradcheck
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    std::uint64_t gc_seed = 7;
    int gc_scenes = 2, gc_gaussians = 30, gc_image = 32;
    gradcheck->add_option("--seed", gc_seed, "base scene seed (default 7)");
    gradcheck->add_option("--scenes", gc_scenes, "number of seeded scenes (default 2)");
    gradcheck->add_option("--gaussians", gc_gaussians, "Gaussians per scene, max 50 (default 30)");
    gradcheck->add_option("--image", gc_image, "image size, max 32 (default 32)");

    // bench
    auto* bench = app.add_subcommand("bench", "tiled vs brute-force renderer throughput");
    std::string bench_ckpt;
    int bench_w = 256, bench_h = 256, bench_threads = 0, bench_frames = 5;
    std::int64_t bench_gaussians = 1000;
    std::uint64_t bench_seed = 42;
    bench->add_option("--checkpoint", bench_ckpt, "benchmark this checkpoint's scene");
    bench->add_option("--width", bench_w);
    bench->add_option("--height", bench_h);
    bench->add_option("--threads", bench_threads);
    bench->add_option("--frames", bench_frames, "timed frames per renderer");
    bench->add_option("--gaussians", bench_gaussians, "scene size when no checkpoint is given");
    bench->add_option("--seed", bench_seed);

    // size
    auto* size = app.add_subcommand("size", "checkpoint byte accounting");
    std::string size_ckpt;
    size->add_option("checkpoint", size_ckpt)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (*synth) {
        ConfigHandle cfg;
        if (const int rc = apply_config(cfg.cfg, synth_opts)) return rc;
        CHECK_API(dsplat_synth(cfg.cfg, synth_out.c_str()), "synth");
        DatasetHandle ds;
        CHECK_API(dsplat_dataset_open(synth_out.c_str(), &ds.ds), "reopening dataset");
        dsplat_dataset_info info;
        CHECK_API(dsplat_dataset_get_info(ds.ds, &info), "dataset info");
        std::printf("RESULT synth dir=%s frames=%d width=%d height=%d train=%d test=%d\n",
                    synth_out.c_str(), info.frames, info.width, info.height, info.train_frames,
                    info.test_frames);
        return 0;
    }

    if (*train) {
        ConfigHandle cfg;
        if (const int rc = apply_config(cfg.cfg, train_opts)) return rc;
        DatasetHandle ds;
        CHECK_API(dsplat_dataset_open(train_dataset.c_str(), &ds.ds), "opening dataset");
        CHECK_API(dsplat_train(ds.ds, cfg.cfg, train_ckpt.c_str(),
                               train_log.empty() ? nullptr : train_log.c_str(), progress_printer,
                               nullptr),
                  "training");
        ModelHandle model;
        CHECK_API(dsplat_model_open(train_ckpt.c_str(), &model.model), "reading checkpoint");
        int64_t n = 0;
        CHECK_API(dsplat_model_gaussian_count(model.model, &n), "checkpoint stats");
        std::printf("RESULT train checkpoint=%s gaussians=%lld\n", train_ckpt.c_str(),
                    static_cast<long long>(n));
        return 0;
    }

    if (*render) {
        ModelHandle model;
        CHECK_API(dsplat_model_open(render_ckpt.c_str(), &model.model), "opening checkpoint");
        DatasetHandle ds;
        CHECK_API(dsplat_dataset_open(render_dataset.c_str(), &ds.ds), "opening dataset");
        dsplat_dataset_info info;
        CHECK_API(dsplat_dataset_get_info(ds.ds, &info), "dataset info");
        int begin = 0, end = info.frames;
        if (!render_range.empty()) {
            if (std::sscanf(render_range.c_str(), "%d:%d", &begin, &end) != 2) {
                std::fprintf(stderr, "error: --range expects begin:end\n");
                return 2;
            }
        }
        CHECK_API(dsplat_render(model.model, ds.ds, begin, end, render_out.c_str(),
                                render_f32 ? 1 : 0, render_threads),
                  "rendering");
        std::printf("RESULT render out=%s frames=%d\n", render_out.c_str(), end - begin);
        return 0;
    }

    if (*eval) {
        ModelHandle model;
        CHECK_API(dsplat_model_open(eval_ckpt.c_str(), &model.model), "opening checkpoint");
        DatasetHandle ds;
        CHECK_API(dsplat_dataset_open(eval_dataset.c_str(), &ds.ds), "opening dataset");
        if (eval_table) {
            int32_t count = 0;
            CHECK_API(dsplat_eval_frames(model.model, ds.ds, eval_split.c_str(), eval_threads,
                                         nullptr, 0, &count),
                      "eval");
            std::vector<dsplat_frame_metrics> rows(count);
            CHECK_API(dsplat_eval_frames(model.model, ds.ds, eval_split.c_str(), eval_threads,
                                         rows.data(), count, &count),
                      "eval");
            std::printf("frame,psnr,ssim,gap_pred_px,gap_gt_px\n");
            for (const auto& r : rows)
                std::printf("%d,%s,%.4f,%.3f,%.3f\n", r.frame, fmt_psnr(r.psnr).c_str(), r.ssim,
                            r.gap_pred_px, r.gap_gt_px);
        }
        dsplat_eval_result res;
        CHECK_API(dsplat_eval(model.model, ds.ds, eval_split.c_str(), eval_threads, &res), "eval");
        std::printf(
            "RESULT eval split=%s frames=%d psnr=%s ssim=%.4f gap_mae_px=%.3f gap_range_px=%.3f "
            "gap_err_pct=%.2f\n",
            eval_split.c_str(), res.frames, fmt_psnr(res.mean_psnr).c_str(), res.mean_ssim,
            res.gap_mae_px, res.gap_range_px, 100.0 * res.gap_error_frac);
        return 0;
    }

    if (*gradcheck) {
        dsplat_gradcheck_result res;
        CHECK_API(dsplat_gradcheck(gc_seed, gc_scenes, gc_gaussians, gc_image, &res), "gradcheck");
        double worst = 0;
        for (int i = 0; i < res.n_classes; ++i) {
            std::printf("gradcheck class=%s checked=%lld max_rel_err=%.3e max_abs_err=%.3e\n",
                        res.class_names[i], static_cast<long long>(res.checked[i]),
                        res.max_rel_err[i], res.max_abs_err[i]);
            worst = std::max(worst, res.max_rel_err[i]);
        }
        std::printf("RESULT gradcheck pass=%d worst_rel_err=%.3e\n", res.pass, worst);
        return res.pass ? 0 : 4;
    }

    if (*bench) {
        ModelHandle model;
        if (!bench_ckpt.empty())
            CHECK_API(dsplat_model_open(bench_ckpt.c_str(), &model.model), "opening checkpoint");
        dsplat_bench_result res;
        CHECK_API(dsplat_bench(model.model, bench_w, bench_h, bench_threads, bench_frames,
                               bench_gaussians, bench_seed, &res),
                  "bench");
        std::printf(
            "RESULT bench gaussians=%lld width=%d height=%d threads=%d tiled_fps=%.2f "
            "brute_fps=%.2f speedup=%.2f\n",
            static_cast<long long>(res.n_gaussians), res.width, res.height, bench_threads,
            res.tiled_fps, res.brute_fps, res.speedup);
        return 0;
    }

    if (*size) {
        dsplat_size_report r;
        CHECK_API(dsplat_model_size_report(size_ckpt.c_str(), &r), "size report");
        std::printf("gaussians %lld\nsh_degree %d\nembed_dim %d\nfloats_per_gaussian %d\n",
                    static_cast<long long>(r.n_gaussians), r.sh_degree, r.embed_dim,
                    r.floats_per_gaussian);
        std::printf("header_bytes %lld\nattribute_bytes %lld\nembedding_bytes %lld\nmlp_bytes %lld\n",
                    static_cast<long long>(r.header_bytes), static_cast<long long>(r.attribute_bytes),
                    static_cast<long long>(r.embedding_bytes), static_cast<long long>(r.mlp_bytes));
        std::printf("RESULT size payload_bytes=%lld file_bytes=%lld header_bytes=%lld\n",
                    static_cast<long long>(r.payload_bytes), static_cast<long long>(r.file_bytes),
                    static_cast<long long>(r.header_bytes));
        return 0;
    }
    return 2;
}
