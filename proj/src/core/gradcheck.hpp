#pragma once

#include "core/pipeline.hpp"

#include <string>
#include <vector>

namespace dsplat {

struct GradCheckConfig {
    std::uint64_t seed = 7;
    int scenes = 2;
    int n_gaussians = 30;
    int image_size = 32;
    int sh_degree = 2;
    int embed_dim = 8;
    int audio_dim = 4;
    int hidden = 16;
    std::string deform_attrs = "mu,alpha,r,s,f";  // exercise every head
    double step = 1e-6;
    double rel_tol = 1e-3;
    double abs_tol = 1e-6;
    double small_grad = 1e-4;  // below this magnitude the absolute tolerance applies
    int max_seed_trials = 64;
};

struct GradCheckClassResult {
    std::string name;
    double max_rel_err = 0;
    double max_abs_err = 0;
    std::int64_t checked = 0;
    bool pass = true;
};

struct GradCheckReport {
    std::vector<GradCheckClassResult> classes;  // aggregated over scenes
    std::vector<std::uint64_t> scene_seeds;
    bool pass = true;
};

// A random double-precision scene whose forward pass stays clear of every
// discrete branch boundary, so central differences see a smooth function.
struct FdScene {
    GaussianSetT<double> set;
    DeformFieldT<double> field;
    DrivingFeaturesT<double> drive;
    CameraT<double> cam;
    ImageT<double> background;
    ImageT<double> gt;
    Rect mouth;
    KnnIndexT<double> knn;
    LossWeightsT<double> weights;
    std::uint64_t seed = 0;  // the accepted seed after margin screening
};

FdScene build_fd_scene(const GradCheckConfig& cfg, std::uint64_t base_seed);

GradCheckReport run_gradcheck(const GradCheckConfig& cfg);

}  // namespace dsplat
