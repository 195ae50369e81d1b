#include "core/scene_io.hpp"

#include "core/rasterizer.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>

using namespace dsplat;
using namespace dsplat::testutil;
namespace fs = std::filesystem;

namespace {

std::string temp_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "dsplat_tests" / name;
    fs::create_directories(dir);
    return dir.string();
}

std::vector<char> file_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

PointCloud random_cloud(std::int64_t n, std::uint64_t seed) {
    auto rng = seeded_rng(seed, 0xc10d);
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    std::uniform_int_distribution<int> byte(0, 255);
    PointCloud pc;
    pc.positions.resize(3 * n);
    pc.colors.resize(3 * n);
    for (auto& p : pc.positions) p = u(rng);
    for (auto& c : pc.colors) c = static_cast<std::uint8_t>(byte(rng));
    return pc;
}

}  // namespace

TEST_SUITE_BEGIN("scene_io");

TEST_CASE("ply: minimal ASCII file with one vertex") {
    const std::string path = temp_dir("ply") + "/one.ply";
    {
        std::ofstream f(path);
        f << "ply\nformat ascii 1.0\nelement vertex 1\n"
             "property float x\nproperty float y\nproperty float z\nend_header\n0 0 0\n";
    }
    const auto pc = load_ply(path);
    CHECK(pc.size() == 1);
    CHECK(pc.positions[0] == 0.0f);
    CHECK(pc.colors[0] == 255);  // default when no color properties present
}

TEST_CASE("ply: binary round-trip is bit identical") {
    const auto pc = random_cloud(1000, 1);
    const std::string path = temp_dir("ply") + "/round.ply";
    save_ply(pc, path, true);
    const auto loaded = load_ply(path);
    CHECK(loaded.positions == pc.positions);
    CHECK(loaded.colors == pc.colors);
}

TEST_CASE("ply: ASCII round-trip preserves positions exactly via %.9g") {
    const auto pc = random_cloud(50, 2);
    const std::string path = temp_dir("ply") + "/ascii.ply";
    save_ply(pc, path, false);
    const auto loaded = load_ply(path);
    CHECK(loaded.positions == pc.positions);
}

TEST_CASE("ply: truncated payload is a parse error") {
    const std::string path = temp_dir("ply") + "/trunc.ply";
    {
        std::ofstream f(path);
        f << "ply\nformat ascii 1.0\nelement vertex 5\n"
             "property float x\nproperty float y\nproperty float z\nend_header\n"
             "0 0 0\n1 1 1\n2 2 2\n3 3 3\n";
    }
    CHECK_THROWS_WITH_AS(load_ply(path), doctest::Contains("truncated"), Error);
}

TEST_CASE("ply: unsupported layouts are rejected with context") {
    const std::string path = temp_dir("ply") + "/faces.ply";
    {
        std::ofstream f(path);
        f << "ply\nformat ascii 1.0\nelement vertex 1\n"
             "property float x\nproperty float y\nproperty float z\n"
             "element face 2\nproperty list uchar int vertex_indices\nend_header\n0 0 0\n";
    }
    CHECK_THROWS_AS(load_ply(path), Error);
    const std::string path2 = temp_dir("ply") + "/bad_magic.ply";
    {
        std::ofstream f(path2);
        f << "plyx\n";
    }
    CHECK_THROWS_AS(load_ply(path2), Error);
}

TEST_CASE("downsample: small clouds pass through unchanged") {
    const auto pc = random_cloud(50, 3);
    const auto out = downsample_pointcloud(pc, 100, 9);
    CHECK(out.positions == pc.positions);
}

TEST_CASE("downsample: exact count, subset membership, determinism") {
    const auto pc = random_cloud(2000, 4);
    const auto a = downsample_pointcloud(pc, 1000, 9);
    const auto b = downsample_pointcloud(pc, 1000, 9);
    const auto c = downsample_pointcloud(pc, 1000, 10);
    CHECK(a.size() == 1000);
    CHECK(a.positions == b.positions);
    CHECK(a.positions != c.positions);

    // membership: every sampled point exists in the source
    std::vector<std::array<float, 3>> source(pc.size());
    for (std::int64_t i = 0; i < pc.size(); ++i)
        source[i] = {pc.positions[3 * i], pc.positions[3 * i + 1], pc.positions[3 * i + 2]};
    std::sort(source.begin(), source.end());
    for (std::int64_t i = 0; i < a.size(); ++i) {
        std::array<float, 3> p = {a.positions[3 * i], a.positions[3 * i + 1], a.positions[3 * i + 2]};
        CHECK(std::binary_search(source.begin(), source.end(), p));
    }
}

TEST_CASE("init_gaussians: single point falls back to the configured scale") {
    PointCloud pc;
    pc.positions = {0.5f, 0.25f, 2.0f};
    pc.colors = {255, 0, 0};
    InitOptions opts;
    opts.fallback_scale = 0.35f;
    const auto set = init_gaussians_from_cloud(pc, opts, 1);
    CHECK(set.size() == 1);
    CHECK(set.log_scales[0] == doctest::Approx(std::log(0.35f)).epsilon(1e-6));
    CHECK(set.rotations[0] == 1.0f);
    CHECK(set.opacity(0) == doctest::Approx(0.1f).epsilon(1e-6));
}

TEST_CASE("init_gaussians: grid spacing sets the scale") {
    PointCloud pc;
    const float h = 0.2f;
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) {
            pc.positions.insert(pc.positions.end(), {x * h, y * h, 0.0f});
            pc.colors.insert(pc.colors.end(), {128, 128, 128});
        }
    const auto set = init_gaussians_from_cloud(pc, {}, 1);
    for (std::int64_t i = 0; i < set.size(); ++i) {
        const float scale = std::exp(set.log_scales[3 * i]);
        CHECK(scale >= 0.9f * h);
        CHECK(scale <= 1.25f * h);
    }
}

TEST_CASE("init_gaussians: pure red points activate to red") {
    PointCloud pc;
    pc.positions = {0, 0, 0, 1, 0, 0};
    pc.colors = {255, 0, 0, 255, 0, 0};
    const auto set = init_gaussians_from_cloud(pc, {}, 1);
    const Vec3<float> rgb =
        eval_sh_color(set.sh_ptr(0), set.sh_dim(), Vec3<float>(0, 0, 1), set.sh_degree);
    CHECK(rgb[0] == doctest::Approx(1.0f).epsilon(1e-5));
    CHECK(rgb[1] == doctest::Approx(0.0f).scale(1).epsilon(1e-5));
    CHECK(rgb[2] == doctest::Approx(0.0f).scale(1).epsilon(1e-5));
}

TEST_CASE("ppm round-trip reproduces 8-bit quantized values; f32 is exact") {
    const auto img = smooth_background<float>(24, 16, 5);
    const std::string base = temp_dir("img") + "/img";
    write_ppm(img, base + ".ppm");
    const auto ppm = read_ppm(base + ".ppm");
    for (size_t i = 0; i < img.data.size(); ++i) {
        const float quantized = std::lround(std::clamp(img.data[i], 0.0f, 1.0f) * 255.0f) / 255.0f;
        CHECK(ppm.data[i] == doctest::Approx(quantized).epsilon(1e-6));
    }
    write_f32(img, base + ".f32");
    const auto f32 = read_f32(base + ".f32", 24, 16);
    CHECK(f32.data == img.data);
}

TEST_CASE("manifest camera serialization round-trips") {
    Camera cam;
    cam.width = 64;
    cam.height = 48;
    cam.fx = 93.75f;
    cam.fy = 92.5f;
    cam.cx = 31.5f;
    cam.cy = 24.5f;
    cam.near_clip = 0.125f;
    cam.far_clip = 64.0f;
    KeyValueFile kv;
    kv.set("frames", "1");
    kv.set("width", "64");
    kv.set("height", "48");
    kv.set("d_a", "8");
    kv.set("split_ratio", "10");
    kv.set("background", "background.ppm");
    kv.set("camera.fx", "93.75");
    kv.set("camera.fy", "92.5");
    kv.set("camera.cx", "31.5");
    kv.set("camera.cy", "24.5");
    kv.set("camera.near", "0.125");
    kv.set("camera.far", "64");
    kv.set("camera.w2c", "1 0 0 0 0 1 0 0 0 0 1 0");
    const std::string path = temp_dir("manifest") + "/manifest.txt";
    kv.save(path);
    const auto loaded = KeyValueFile::load(path);
    CHECK(loaded.get("camera.w2c") == "1 0 0 0 0 1 0 0 0 0 1 0");
    CHECK(loaded.get_number("camera.fx") == 93.75);
}

TEST_CASE("synth: static driver produces identical frames") {
    SynthConfig cfg;
    cfg.frames = 22;
    cfg.width = 40;
    cfg.height = 40;
    cfg.seed = 6;
    cfg.static_scene = true;
    const std::string dir = temp_dir("static_ds");
    synth_scene_generate(cfg, dir);
    const auto first = file_bytes(dir + "/frames/frame_00000.f32");
    for (int i = 1; i < cfg.frames; ++i)
        CHECK(file_bytes(dir + "/frames/frame_" + std::string(i < 10 ? "0000" : "000") +
                         std::to_string(i) + ".f32") == first);
}

TEST_CASE("synth: same seed regenerates a bit-identical dataset") {
    SynthConfig cfg;
    cfg.frames = 22;
    cfg.width = 40;
    cfg.height = 40;
    cfg.seed = 7;
    const std::string a = temp_dir("det_a");
    const std::string b = temp_dir("det_b");
    synth_scene_generate(cfg, a);
    synth_scene_generate(cfg, b);
    for (const auto* name :
         {"manifest.txt", "features.csv", "mouth_rects.csv", "points.ply", "background.f32",
          "frames/frame_00000.f32", "frames/frame_00021.f32", "frames/frame_00011.ppm"})
        CHECK(file_bytes(a + "/" + name) == file_bytes(b + "/" + name));
}

TEST_CASE("synth: dataset round-trip preserves feature tracks bit-exactly") {
    SynthConfig cfg;
    cfg.frames = 22;
    cfg.width = 40;
    cfg.height = 40;
    cfg.seed = 8;
    const std::string dir = temp_dir("roundtrip_ds");
    synth_scene_generate(cfg, dir);
    const auto ds = load_dataset(dir);
    const auto drive = synth_driving_signals(cfg);
    REQUIRE(ds.features.size() == drive.size());
    for (size_t i = 0; i < drive.size(); ++i) {
        for (int j = 0; j < cfg.audio_dim; ++j) CHECK(ds.features[i].audio[j] == drive[i].audio[j]);
        for (int j = 0; j < 6; ++j) CHECK(ds.features[i].expression[j] == drive[i].expression[j]);
    }
    CHECK(ds.train_indices.size() == 20);
    CHECK(ds.test_indices.size() == 2);
    CHECK(ds.test_indices[0] == 10);
    CHECK(ds.test_indices[1] == 21);
}

TEST_CASE("synth: emitted frames are reproducible from the scene plus analytic deformation") {
    SynthConfig cfg;
    cfg.frames = 22;
    cfg.width = 40;
    cfg.height = 40;
    cfg.seed = 9;
    const std::string dir = temp_dir("rerender_ds");
    synth_scene_generate(cfg, dir);
    const auto ds = load_dataset(dir);
    const auto scene = synth_build_scene(cfg);
    const auto drive = synth_driving_signals(cfg);
    const auto cam_d = scene.camera.cast<double>();
    const auto bg_d = scene.background.cast<double>();
    for (int i : {0, 7, 21}) {
        const auto frame_set = synth_deformed_scene(scene, cfg, drive[i]);
        const auto img = rasterize_brute_force(frame_set.cast<double>(), cam_d, bg_d);
        double max_diff = 0;
        for (std::int64_t p = 0; p < img.pixels() * 3; ++p)
            max_diff = std::max(max_diff, std::abs(img.data[p] - ds.images[i].data[p]));
        CHECK(max_diff <= 1e-6);
    }
}

TEST_CASE("synth: strictly increasing aperture reads back strictly increasing") {
    SynthConfig cfg;
    cfg.frames = 22;
    cfg.width = 48;
    cfg.height = 48;
    cfg.seed = 10;
    const auto scene = synth_build_scene(cfg);
    const auto cam_d = scene.camera.cast<double>();
    const auto bg_d = scene.background.cast<double>();
    // start from a quarter-open aperture: below that the lip tails swallow
    // sub-pixel slits and the soft measure sits at its floor
    double prev = -1;
    for (int step = 0; step < 8; ++step) {
        DrivingFeatures drive;
        drive.audio = VecX<float>::Zero(cfg.audio_dim);
        drive.audio[0] = -0.1f + 1.0f * step / 7.0f;
        drive.expression = VecX<float>::Constant(6, 2.5f);
        const auto frame_set = synth_deformed_scene(scene, cfg, drive);
        const auto img = rasterize_brute_force(frame_set.cast<double>(), cam_d, bg_d);
        const double gap =
            measure_aperture_gap(img.cast<float>(), scene.background, scene.mouth_rect);
        CHECK(gap > prev);
        prev = gap;
    }
}

TEST_CASE("synth: mouth rect contains the projected lip centers") {
    SynthConfig cfg;
    cfg.frames = 22;
    cfg.width = 48;
    cfg.height = 48;
    cfg.seed = 11;
    const auto scene = synth_build_scene(cfg);
    const auto drive = synth_driving_signals(cfg);
    int inside = 0, total = 0;
    for (int t : {0, 10, 21}) {
        const auto frame_set = synth_deformed_scene(scene, cfg, drive[t]);
        for (int side = 0; side < 2; ++side)
            for (auto gi : side == 0 ? scene.upper_lip : scene.lower_lip) {
                const auto uvz = project_point(Vec3<float>(frame_set.center(gi)), scene.camera);
                ++total;
                if (uvz[0] >= scene.mouth_rect.x && uvz[0] < scene.mouth_rect.x + scene.mouth_rect.w &&
                    uvz[1] >= scene.mouth_rect.y && uvz[1] < scene.mouth_rect.y + scene.mouth_rect.h)
                    ++inside;
            }
    }
    CHECK(inside >= static_cast<int>(0.9 * total));
}

TEST_CASE("synth: frame count below 22 is rejected before generation") {
    SynthConfig cfg;
    cfg.frames = 10;
    CHECK_THROWS_AS(synth_build_scene(cfg), Error);
}

TEST_CASE("checkpoint: round-trip is bit identical") {
    Checkpoint ckpt;
    ckpt.set = random_scene<float>(37, 12, 0.8, 2, 16);
    ckpt.field.embed_dim = 16;
    ckpt.field.audio_dim = 8;
    ckpt.field.hidden = 24;
    ckpt.field.sh_dim = ckpt.set.sh_dim();
    ckpt.field.mask = AttrMask::parse("mu,alpha,f");
    ckpt.field.init(3);
    // non-trivial weights
    auto rng = seeded_rng(13, 0);
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    for (Eigen::Index i = 0; i < ckpt.field.trunk1.w.size(); ++i)
        ckpt.field.trunk1.w.data()[i] = u(rng);
    ckpt.seed = 99;
    ckpt.iteration = 1234;

    const std::string path = temp_dir("ckpt") + "/round.spld";
    checkpoint_save(ckpt, path);
    const auto loaded = checkpoint_load(path);
    CHECK(loaded.set.centers == ckpt.set.centers);
    CHECK(loaded.set.rotations == ckpt.set.rotations);
    CHECK(loaded.set.log_scales == ckpt.set.log_scales);
    CHECK(loaded.set.opacity_logits == ckpt.set.opacity_logits);
    CHECK(loaded.set.sh == ckpt.set.sh);
    CHECK(loaded.set.embeddings == ckpt.set.embeddings);
    CHECK(loaded.field.trunk1.w == ckpt.field.trunk1.w);
    CHECK(loaded.field.mask.bits == ckpt.field.mask.bits);
    CHECK(loaded.seed == 99);
    CHECK(loaded.iteration == 1234);

    // a second save of the loaded checkpoint produces the same bytes
    const std::string path2 = temp_dir("ckpt") + "/round2.spld";
    checkpoint_save(loaded, path2);
    CHECK(file_bytes(path) == file_bytes(path2));
}

TEST_CASE("checkpoint: wrong magic is rejected") {
    const std::string path = temp_dir("ckpt") + "/magic.spld";
    {
        std::ofstream f(path, std::ios::binary);
        f << "XXXX";
        const std::uint32_t version = 1;
        f.write(reinterpret_cast<const char*>(&version), 4);
    }
    CHECK_THROWS_WITH_AS(checkpoint_load(path), doctest::Contains("magic"), Error);
}

TEST_CASE("checkpoint: truncated payload names the expected byte count") {
    Checkpoint ckpt;
    ckpt.set = random_scene<float>(10, 14, 0.8);
    ckpt.field.embed_dim = ckpt.set.embed_dim;
    ckpt.field.audio_dim = 4;
    ckpt.field.hidden = 8;
    ckpt.field.sh_dim = ckpt.set.sh_dim();
    ckpt.field.mask = AttrMask::parse("mu");
    ckpt.field.init(4);
    const std::string path = temp_dir("ckpt") + "/trunc.spld";
    checkpoint_save(ckpt, path);
    auto bytes = file_bytes(path);
    bytes.resize(bytes.size() - 10);
    {
        std::ofstream f(path, std::ios::binary);
        f.write(bytes.data(), bytes.size());
    }
    CHECK_THROWS_WITH_AS(checkpoint_load(path), doctest::Contains("size mismatch"), Error);
}

TEST_SUITE_END();
