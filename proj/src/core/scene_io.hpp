#pragma once

#include "core/camera.hpp"
#include "core/deform.hpp"
#include "core/gaussian.hpp"
#include "core/image.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace dsplat {

struct PointCloud {
    std::vector<float> positions;       // 3 per point
    std::vector<std::uint8_t> colors;   // 3 per point, RGB
    std::int64_t size() const { return static_cast<std::int64_t>(positions.size()) / 3; }
};

PointCloud load_ply(const std::string& path);
void save_ply(const PointCloud& pc, const std::string& path, bool binary = true);

PointCloud downsample_pointcloud(const PointCloud& pc, std::int64_t max_points, std::uint64_t seed);

struct InitOptions {
    int sh_degree = 1;
    int embed_dim = 32;
    float init_opacity = 0.1f;
    float fallback_scale = 0.1f;     // used when there are no neighbours
    float embed_stddev = 0.1f;       // normal(0, 0.01) variance convention
};

GaussianSet init_gaussians_from_cloud(const PointCloud& pc, const InitOptions& opts,
                                      std::uint64_t seed);

// --- images ---------------------------------------------------------------

void write_ppm(const Image& img, const std::string& path);
Image read_ppm(const std::string& path);
// Raw float32 planar sidecar (R plane, G plane, B plane), no header.
void write_f32(const Image& img, const std::string& path);
Image read_f32(const std::string& path, int width, int height);

// --- key-value files (manifest and run configs share the format) ----------

struct KeyValueFile {
    std::vector<std::pair<std::string, std::string>> entries;

    bool has(const std::string& key) const;
    const std::string& get(const std::string& key) const;
    std::string get_or(const std::string& key, const std::string& fallback) const;
    double get_number(const std::string& key) const;
    void set(const std::string& key, const std::string& value);

    static KeyValueFile load(const std::string& path);
    void save(const std::string& path) const;
};

// --- dataset ---------------------------------------------------------------

struct FrameDataset {
    std::string dir;
    int frame_count = 0;
    int width = 0, height = 0;
    int audio_dim = 0;
    int split_ratio = 10;  // train:test
    Camera camera;
    Image background;
    std::vector<Image> images;              // float32 sidecar when present, else PPM
    std::vector<DrivingFeatures> features;
    std::vector<Rect> mouth_rects;
    std::vector<int> train_indices, test_indices;
};

FrameDataset load_dataset(const std::string& dir);

// --- synthetic deforming scene ---------------------------------------------

struct SynthConfig {
    int frames = 220;
    int width = 80, height = 80;
    int audio_dim = 8;
    std::uint64_t seed = 1;
    int split_ratio = 10;
    float face_radius = 0.8f;       // world units
    float max_gap = 0.3f;           // aperture opening, world units
    float brow_amplitude = 0.06f;   // world units per unit expression swing
    bool static_scene = false;      // freeze all driving signals at their mean
    int render_threads = 0;
};

// Ground-truth scene the generator animates analytically. `base` is the
// mean-pose (canonical) configuration.
struct SynthScene {
    GaussianSet base;
    std::vector<std::int64_t> upper_lip, lower_lip, brow;
    float gap_mean = 0;   // world-unit aperture at mean pose
    float lip_z = 0;
    Camera camera;
    Image background;
    Rect mouth_rect;
};

SynthScene synth_build_scene(const SynthConfig& cfg);

// Per-frame driving signals; a[0] opens the aperture, e[0] shifts the brows.
std::vector<DrivingFeatures> synth_driving_signals(const SynthConfig& cfg);

// Applies the analytic deformation for one frame's signals.
GaussianSet synth_deformed_scene(const SynthScene& scene, const SynthConfig& cfg,
                                 const DrivingFeatures& drive);

// Writes manifest, background, frames (PPM + float32), feature tracks, mouth
// rectangles and the canonical point cloud. Frames come from the
// double-precision brute-force renderer.
void synth_scene_generate(const SynthConfig& cfg, const std::string& out_dir);

// Column-averaged count of mouth-rect pixels where the background shows
// through, with a soft threshold so the measure responds to sub-pixel motion.
double measure_aperture_gap(const Image& img, const Image& background, const Rect& rect,
                            double tol = 0.25);

// --- checkpoints -----------------------------------------------------------

constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    GaussianSet set;
    DeformField field;
    std::uint64_t seed = 0;
    std::uint64_t iteration = 0;
};

void checkpoint_save(const Checkpoint& ckpt, const std::string& path);
Checkpoint checkpoint_load(const std::string& path);

struct SizeReport {
    std::int64_t n_gaussians = 0;
    int sh_degree = 0;
    int embed_dim = 0;
    std::int64_t header_bytes = 0;
    std::int64_t attribute_bytes = 0;   // centers/rotations/scales/opacities/SH
    std::int64_t embedding_bytes = 0;
    std::int64_t mlp_bytes = 0;
    std::int64_t payload_bytes = 0;     // attribute + embedding + mlp
    std::int64_t file_bytes = 0;
    int floats_per_gaussian = 0;        // 11 + 3(d+1)^2 + embed_dim
};

SizeReport model_size_report(const std::string& checkpoint_path);

}  // namespace dsplat
