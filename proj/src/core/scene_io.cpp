#include "core/scene_io.hpp"

#include "core/losses.hpp"
#include "core/rasterizer.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace dsplat {

namespace {

std::string fmt_float(float v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(v));
    return buf;
}

std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok) out.push_back(tok);
    return out;
}

}  // namespace

// --- PLY --------------------------------------------------------------------

namespace {

struct PlyProperty {
    std::string type;
    std::string name;
};

int ply_scalar_size(const std::string& type, int line_no) {
    if (type == "char" || type == "uchar" || type == "int8" || type == "uint8") return 1;
    if (type == "short" || type == "ushort" || type == "int16" || type == "uint16") return 2;
    if (type == "int" || type == "uint" || type == "int32" || type == "uint32" || type == "float" ||
        type == "float32")
        return 4;
    if (type == "double" || type == "float64") return 8;
    fail(ErrorCode::io, "ply: unsupported property type '" + type + "' at header line " +
                            std::to_string(line_no));
}

template <class T>
T read_le(const char* p) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    return v;
}

double decode_scalar(const char* p, const std::string& type) {
    if (type == "float" || type == "float32") return read_le<float>(p);
    if (type == "double" || type == "float64") return read_le<double>(p);
    if (type == "uchar" || type == "uint8") return static_cast<unsigned char>(*p);
    if (type == "char" || type == "int8") return static_cast<signed char>(*p);
    if (type == "short" || type == "int16") return read_le<std::int16_t>(p);
    if (type == "ushort" || type == "uint16") return read_le<std::uint16_t>(p);
    if (type == "int" || type == "int32") return read_le<std::int32_t>(p);
    if (type == "uint" || type == "uint32") return read_le<std::uint32_t>(p);
    return 0;
}

}  // namespace

PointCloud load_ply(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    require(f.good(), ErrorCode::io, "ply: cannot open " + path);

    std::string line;
    int line_no = 0;
    auto next_line = [&]() {
        require(static_cast<bool>(std::getline(f, line)), ErrorCode::io,
                "ply: truncated header at line " + std::to_string(line_no + 1));
        if (!line.empty() && line.back() == '\r') line.pop_back();
        ++line_no;
    };

    next_line();
    require(line == "ply", ErrorCode::io, "ply: missing magic at line 1");
    next_line();
    bool binary;
    if (line == "format ascii 1.0") binary = false;
    else if (line == "format binary_little_endian 1.0") binary = true;
    else fail(ErrorCode::io, "ply: unsupported format at line 2: " + line);

    std::int64_t vertex_count = -1;
    std::vector<PlyProperty> props;
    bool in_vertex_element = false;
    while (true) {
        next_line();
        if (line == "end_header") break;
        const auto toks = split_ws(line);
        if (toks.empty() || toks[0] == "comment" || toks[0] == "obj_info") continue;
        if (toks[0] == "element") {
            require(toks.size() == 3, ErrorCode::io, "ply: bad element at line " + std::to_string(line_no));
            if (toks[1] == "vertex") {
                vertex_count = std::stoll(toks[2]);
                in_vertex_element = true;
            } else {
                require(std::stoll(toks[2]) == 0, ErrorCode::io,
                        "ply: unsupported element '" + toks[1] + "' at line " + std::to_string(line_no));
                in_vertex_element = false;
            }
        } else if (toks[0] == "property") {
            if (!in_vertex_element) continue;
            require(toks.size() == 3, ErrorCode::io,
                    "ply: unsupported property layout at line " + std::to_string(line_no) +
                        " (lists are not supported)");
            props.push_back({toks[1], toks[2]});
        } else {
            fail(ErrorCode::io, "ply: malformed header line " + std::to_string(line_no) + ": " + line);
        }
    }
    require(vertex_count >= 0, ErrorCode::io, "ply: no vertex element declared");

    int ix = -1, iy = -1, iz = -1, ir = -1, ig = -1, ib = -1;
    for (size_t i = 0; i < props.size(); ++i) {
        if (props[i].name == "x") ix = static_cast<int>(i);
        else if (props[i].name == "y") iy = static_cast<int>(i);
        else if (props[i].name == "z") iz = static_cast<int>(i);
        else if (props[i].name == "red") ir = static_cast<int>(i);
        else if (props[i].name == "green") ig = static_cast<int>(i);
        else if (props[i].name == "blue") ib = static_cast<int>(i);
    }
    require(ix >= 0 && iy >= 0 && iz >= 0, ErrorCode::io, "ply: vertex element lacks x/y/z");
    const bool has_color = ir >= 0 && ig >= 0 && ib >= 0;

    PointCloud pc;
    pc.positions.resize(3 * vertex_count);
    pc.colors.assign(3 * vertex_count, 255);

    if (!binary) {
        for (std::int64_t v = 0; v < vertex_count; ++v) {
            next_line();
            const auto toks = split_ws(line);
            require(toks.size() >= props.size(), ErrorCode::io,
                    "ply: truncated vertex at line " + std::to_string(line_no));
            pc.positions[3 * v + 0] = std::stof(toks[ix]);
            pc.positions[3 * v + 1] = std::stof(toks[iy]);
            pc.positions[3 * v + 2] = std::stof(toks[iz]);
            if (has_color) {
                pc.colors[3 * v + 0] = static_cast<std::uint8_t>(std::stoi(toks[ir]));
                pc.colors[3 * v + 1] = static_cast<std::uint8_t>(std::stoi(toks[ig]));
                pc.colors[3 * v + 2] = static_cast<std::uint8_t>(std::stoi(toks[ib]));
            }
        }
    } else {
        int stride = 0;
        std::vector<int> offsets(props.size());
        for (size_t i = 0; i < props.size(); ++i) {
            offsets[i] = stride;
            stride += ply_scalar_size(props[i].type, line_no);
        }
        std::vector<char> row(stride);
        for (std::int64_t v = 0; v < vertex_count; ++v) {
            f.read(row.data(), stride);
            require(f.gcount() == stride, ErrorCode::io,
                    "ply: truncated payload at byte offset " +
                        std::to_string(static_cast<std::int64_t>(f.tellg()) < 0
                                           ? -1
                                           : static_cast<std::int64_t>(f.tellg())) +
                        " (vertex " + std::to_string(v) + " of " + std::to_string(vertex_count) + ")");
            pc.positions[3 * v + 0] = static_cast<float>(decode_scalar(row.data() + offsets[ix], props[ix].type));
            pc.positions[3 * v + 1] = static_cast<float>(decode_scalar(row.data() + offsets[iy], props[iy].type));
            pc.positions[3 * v + 2] = static_cast<float>(decode_scalar(row.data() + offsets[iz], props[iz].type));
            if (has_color) {
                pc.colors[3 * v + 0] = static_cast<std::uint8_t>(decode_scalar(row.data() + offsets[ir], props[ir].type));
                pc.colors[3 * v + 1] = static_cast<std::uint8_t>(decode_scalar(row.data() + offsets[ig], props[ig].type));
                pc.colors[3 * v + 2] = static_cast<std::uint8_t>(decode_scalar(row.data() + offsets[ib], props[ib].type));
            }
        }
    }
    for (float p : pc.positions)
        require(std::isfinite(p), ErrorCode::io, "ply: non-finite position in " + path);
    return pc;
}

void save_ply(const PointCloud& pc, const std::string& path, bool binary) {
    std::ofstream f(path, std::ios::binary);
    require(f.good(), ErrorCode::io, "ply: cannot write " + path);
    f << "ply\n"
      << (binary ? "format binary_little_endian 1.0\n" : "format ascii 1.0\n")
      << "element vertex " << pc.size() << "\n"
      << "property float x\nproperty float y\nproperty float z\n"
      << "property uchar red\nproperty uchar green\nproperty uchar blue\n"
      << "end_header\n";
    if (binary) {
        for (std::int64_t i = 0; i < pc.size(); ++i) {
            f.write(reinterpret_cast<const char*>(pc.positions.data() + 3 * i), 3 * sizeof(float));
            f.write(reinterpret_cast<const char*>(pc.colors.data() + 3 * i), 3);
        }
    } else {
        for (std::int64_t i = 0; i < pc.size(); ++i) {
            f << fmt_float(pc.positions[3 * i]) << ' ' << fmt_float(pc.positions[3 * i + 1]) << ' '
              << fmt_float(pc.positions[3 * i + 2]) << ' ' << int(pc.colors[3 * i]) << ' '
              << int(pc.colors[3 * i + 1]) << ' ' << int(pc.colors[3 * i + 2]) << '\n';
        }
    }
    require(f.good(), ErrorCode::io, "ply: write failed for " + path);
}

PointCloud downsample_pointcloud(const PointCloud& pc, std::int64_t max_points, std::uint64_t seed) {
    require(max_points >= 1, ErrorCode::invalid_argument, "downsample: max_points must be >= 1");
    if (pc.size() <= max_points) return pc;
    // seeded Fisher-Yates prefix over the index set
    std::vector<std::int64_t> idx(pc.size());
    for (std::int64_t i = 0; i < pc.size(); ++i) idx[i] = i;
    auto rng = seeded_rng(seed, 0xd05a);
    for (std::int64_t i = 0; i < max_points; ++i) {
        std::uniform_int_distribution<std::int64_t> dist(i, pc.size() - 1);
        std::swap(idx[i], idx[dist(rng)]);
    }
    idx.resize(max_points);
    std::sort(idx.begin(), idx.end());
    PointCloud out;
    out.positions.resize(3 * max_points);
    out.colors.resize(3 * max_points);
    for (std::int64_t i = 0; i < max_points; ++i) {
        for (int c = 0; c < 3; ++c) {
            out.positions[3 * i + c] = pc.positions[3 * idx[i] + c];
            out.colors[3 * i + c] = pc.colors[3 * idx[i] + c];
        }
    }
    return out;
}

GaussianSet init_gaussians_from_cloud(const PointCloud& pc, const InitOptions& opts,
                                      std::uint64_t seed) {
    const std::int64_t n = pc.size();
    require(n >= 1, ErrorCode::invalid_argument, "init_gaussians_from_cloud: empty point cloud");
    GaussianSet set;
    set.sh_degree = opts.sh_degree;
    set.embed_dim = opts.embed_dim;
    set.resize(n);

    std::copy(pc.positions.begin(), pc.positions.end(), set.centers.begin());

    // isotropic scale from mean distance to the 3 nearest neighbours
    for (std::int64_t i = 0; i < n; ++i) {
        float scale = opts.fallback_scale;
        if (n > 1) {
            const Eigen::Map<const Vec3<float>> pi(pc.positions.data() + 3 * i);
            float best[3] = {1e30f, 1e30f, 1e30f};
            for (std::int64_t j = 0; j < n; ++j) {
                if (j == i) continue;
                const Eigen::Map<const Vec3<float>> pj(pc.positions.data() + 3 * j);
                float d = (pj - pi).norm();
                for (int t = 0; t < 3; ++t)
                    if (d < best[t]) std::swap(d, best[t]);
            }
            const int k = static_cast<int>(std::min<std::int64_t>(3, n - 1));
            float mean = 0;
            for (int t = 0; t < k; ++t) mean += best[t];
            mean /= k;
            scale = std::max(mean, 1e-7f);
        }
        const float ls = std::log(scale);
        set.log_scales[3 * i] = set.log_scales[3 * i + 1] = set.log_scales[3 * i + 2] = ls;
    }

    for (std::int64_t i = 0; i < n; ++i) {
        set.rotations[4 * i] = 1;  // identity (w,x,y,z)
        set.opacity_logits[i] = logit(opts.init_opacity);
    }

    // SH DC from colors, inverse of the eval convention (0.5 offset, C0 scale)
    const int sh_dim = set.sh_dim();
    for (std::int64_t i = 0; i < n; ++i)
        for (int c = 0; c < 3; ++c)
            set.sh[static_cast<size_t>(sh_dim) * i + c] =
                (pc.colors[3 * i + c] / 255.0f - 0.5f) / static_cast<float>(kShC0);

    auto rng = seeded_rng(seed, 0xe0b0);
    std::normal_distribution<double> dist(0.0, opts.embed_stddev);
    for (auto& z : set.embeddings) z = static_cast<float>(dist(rng));
    return set;
}

// --- images -----------------------------------------------------------------

void write_ppm(const Image& img, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    require(f.good(), ErrorCode::io, "ppm: cannot write " + path);
    f << "P6\n" << img.width << ' ' << img.height << "\n255\n";
    std::vector<std::uint8_t> row(static_cast<size_t>(img.width) * 3);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) {
                const float v = std::clamp(img.at(x, y)[c], 0.0f, 1.0f);
                row[3 * x + c] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
            }
        f.write(reinterpret_cast<const char*>(row.data()), row.size());
    }
    require(f.good(), ErrorCode::io, "ppm: write failed for " + path);
}

Image read_ppm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    require(f.good(), ErrorCode::io, "ppm: cannot open " + path);
    std::string magic;
    f >> magic;
    require(magic == "P6", ErrorCode::io, "ppm: not a P6 file: " + path);
    auto next_int = [&]() {
        int v;
        while (true) {
            f >> std::ws;
            if (f.peek() == '#') {
                std::string comment;
                std::getline(f, comment);
                continue;
            }
            require(static_cast<bool>(f >> v), ErrorCode::io, "ppm: malformed header in " + path);
            return v;
        }
    };
    const int w = next_int(), h = next_int(), maxval = next_int();
    require(maxval == 255, ErrorCode::io, "ppm: only 8-bit supported: " + path);
    f.get();  // single whitespace after maxval
    Image img(w, h);
    std::vector<std::uint8_t> row(static_cast<size_t>(w) * 3);
    for (int y = 0; y < h; ++y) {
        f.read(reinterpret_cast<char*>(row.data()), row.size());
        require(f.gcount() == static_cast<std::streamsize>(row.size()), ErrorCode::io,
                "ppm: truncated pixel data in " + path);
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) img.at(x, y)[c] = row[3 * x + c] / 255.0f;
    }
    return img;
}

void write_f32(const Image& img, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    require(f.good(), ErrorCode::io, "f32: cannot write " + path);
    std::vector<float> plane(img.pixels());
    for (int c = 0; c < 3; ++c) {
        for (std::int64_t i = 0; i < img.pixels(); ++i) plane[i] = img.data[3 * i + c];
        f.write(reinterpret_cast<const char*>(plane.data()), plane.size() * sizeof(float));
    }
    require(f.good(), ErrorCode::io, "f32: write failed for " + path);
}

Image read_f32(const std::string& path, int width, int height) {
    std::ifstream f(path, std::ios::binary);
    require(f.good(), ErrorCode::io, "f32: cannot open " + path);
    Image img(width, height);
    std::vector<float> plane(img.pixels());
    for (int c = 0; c < 3; ++c) {
        f.read(reinterpret_cast<char*>(plane.data()), plane.size() * sizeof(float));
        require(f.gcount() == static_cast<std::streamsize>(plane.size() * sizeof(float)),
                ErrorCode::io, "f32: truncated data in " + path);
        for (std::int64_t i = 0; i < img.pixels(); ++i) img.data[3 * i + c] = plane[i];
    }
    return img;
}

// --- key-value files ----------------------------------------------------------

bool KeyValueFile::has(const std::string& key) const {
    for (const auto& [k, v] : entries)
        if (k == key) return true;
    return false;
}

const std::string& KeyValueFile::get(const std::string& key) const {
    for (const auto& [k, v] : entries)
        if (k == key) return v;
    fail(ErrorCode::invalid_argument, "missing key: " + key);
}

std::string KeyValueFile::get_or(const std::string& key, const std::string& fallback) const {
    return has(key) ? get(key) : fallback;
}

double KeyValueFile::get_number(const std::string& key) const {
    try {
        return std::stod(get(key));
    } catch (const std::logic_error&) {
        fail(ErrorCode::invalid_argument, "key '" + key + "' is not a number");
    }
}

void KeyValueFile::set(const std::string& key, const std::string& value) {
    for (auto& [k, v] : entries)
        if (k == key) {
            v = value;
            return;
        }
    entries.emplace_back(key, value);
}

KeyValueFile KeyValueFile::load(const std::string& path) {
    std::ifstream f(path);
    require(f.good(), ErrorCode::io, "cannot open " + path);
    KeyValueFile kv;
    std::string line;
    int line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto sp = line.find(' ');
        require(sp != std::string::npos, ErrorCode::io,
                path + ":" + std::to_string(line_no) + ": expected 'key value'");
        kv.entries.emplace_back(line.substr(0, sp), line.substr(sp + 1));
    }
    return kv;
}

void KeyValueFile::save(const std::string& path) const {
    std::ofstream f(path);
    require(f.good(), ErrorCode::io, "cannot write " + path);
    for (const auto& [k, v] : entries) f << k << ' ' << v << '\n';
    require(f.good(), ErrorCode::io, "write failed for " + path);
}

// --- dataset ------------------------------------------------------------------

namespace {

std::string frame_name(int i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "frame_%05d", i);
    return buf;
}

Camera camera_from_kv(const KeyValueFile& kv) {
    Camera cam;
    cam.fx = static_cast<float>(kv.get_number("camera.fx"));
    cam.fy = static_cast<float>(kv.get_number("camera.fy"));
    cam.cx = static_cast<float>(kv.get_number("camera.cx"));
    cam.cy = static_cast<float>(kv.get_number("camera.cy"));
    cam.near_clip = static_cast<float>(kv.get_number("camera.near"));
    cam.far_clip = static_cast<float>(kv.get_number("camera.far"));
    const auto toks = split_ws(kv.get("camera.w2c"));
    require(toks.size() == 12, ErrorCode::io, "manifest: camera.w2c needs 12 values");
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) cam.rot(r, c) = std::stof(toks[4 * r + c]);
        cam.trans[r] = std::stof(toks[4 * r + 3]);
    }
    return cam;
}

void camera_to_kv(const Camera& cam, KeyValueFile& kv) {
    kv.set("camera.fx", fmt_float(cam.fx));
    kv.set("camera.fy", fmt_float(cam.fy));
    kv.set("camera.cx", fmt_float(cam.cx));
    kv.set("camera.cy", fmt_float(cam.cy));
    kv.set("camera.near", fmt_float(cam.near_clip));
    kv.set("camera.far", fmt_float(cam.far_clip));
    std::string w2c;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 4; ++c) {
            if (!w2c.empty()) w2c += ' ';
            w2c += fmt_float(c < 3 ? cam.rot(r, c) : cam.trans[r]);
        }
    kv.set("camera.w2c", w2c);
}

}  // namespace

FrameDataset load_dataset(const std::string& dir) {
    FrameDataset ds;
    ds.dir = dir;
    const auto kv = KeyValueFile::load(dir + "/manifest.txt");
    ds.frame_count = static_cast<int>(kv.get_number("frames"));
    ds.width = static_cast<int>(kv.get_number("width"));
    ds.height = static_cast<int>(kv.get_number("height"));
    ds.audio_dim = static_cast<int>(kv.get_number("d_a"));
    ds.split_ratio = static_cast<int>(kv.get_number("split_ratio"));
    require(ds.frame_count > 0 && ds.width > 0 && ds.height > 0 && ds.audio_dim > 0,
            ErrorCode::io, "manifest: bad dimensions");
    ds.camera = camera_from_kv(kv);
    ds.camera.width = ds.width;
    ds.camera.height = ds.height;
    ds.camera.validate();

    const std::string bg = kv.get("background");
    const std::string bg_f32 = dir + "/" + bg.substr(0, bg.rfind('.')) + ".f32";
    ds.background = fs::exists(bg_f32) ? read_f32(bg_f32, ds.width, ds.height)
                                       : read_ppm(dir + "/" + bg);

    // feature tracks
    {
        std::ifstream f(dir + "/features.csv");
        require(f.good(), ErrorCode::io, "dataset: missing features.csv");
        std::string line;
        while (std::getline(f, line)) {
            if (line.empty()) continue;
            std::replace(line.begin(), line.end(), ',', ' ');
            const auto toks = split_ws(line);
            require(static_cast<int>(toks.size()) == ds.audio_dim + 6, ErrorCode::io,
                    "features.csv: wrong column count");
            DrivingFeatures dr;
            dr.audio.resize(ds.audio_dim);
            dr.expression.resize(6);
            for (int j = 0; j < ds.audio_dim; ++j) dr.audio[j] = std::stof(toks[j]);
            for (int j = 0; j < 6; ++j) dr.expression[j] = std::stof(toks[ds.audio_dim + j]);
            ds.features.push_back(std::move(dr));
        }
        require(static_cast<int>(ds.features.size()) == ds.frame_count, ErrorCode::io,
                "features.csv: row count does not match frame count");
    }
    {
        std::ifstream f(dir + "/mouth_rects.csv");
        require(f.good(), ErrorCode::io, "dataset: missing mouth_rects.csv");
        std::string line;
        while (std::getline(f, line)) {
            if (line.empty()) continue;
            std::replace(line.begin(), line.end(), ',', ' ');
            const auto toks = split_ws(line);
            require(toks.size() == 4, ErrorCode::io, "mouth_rects.csv: expected x,y,w,h");
            ds.mouth_rects.push_back({std::stoi(toks[0]), std::stoi(toks[1]), std::stoi(toks[2]),
                                      std::stoi(toks[3])});
        }
        require(static_cast<int>(ds.mouth_rects.size()) == ds.frame_count, ErrorCode::io,
                "mouth_rects.csv: row count does not match frame count");
    }

    ds.images.reserve(ds.frame_count);
    for (int i = 0; i < ds.frame_count; ++i) {
        const std::string base = dir + "/frames/" + frame_name(i);
        ds.images.push_back(fs::exists(base + ".f32") ? read_f32(base + ".f32", ds.width, ds.height)
                                                      : read_ppm(base + ".ppm"));
    }

    for (int i = 0; i < ds.frame_count; ++i) {
        if (i % (ds.split_ratio + 1) == ds.split_ratio) ds.test_indices.push_back(i);
        else ds.train_indices.push_back(i);
    }
    return ds;
}

// --- synthetic scene -----------------------------------------------------------

namespace {

// Smooth band-limited signal in [-1, 1]: three seeded low-frequency sines.
struct BandSignal {
    double amp[3], cycles[3], phase[3], norm;

    static BandSignal make(std::mt19937_64& rng) {
        BandSignal s{};
        std::uniform_real_distribution<double> u(0.0, 1.0);
        double total = 0;
        for (int j = 0; j < 3; ++j) {
            s.amp[j] = 0.3 + 0.7 * u(rng);
            s.cycles[j] = 0.5 + 3.5 * u(rng);
            s.phase[j] = 2.0 * M_PI * u(rng);
            total += s.amp[j];
        }
        s.norm = 1.0 / total;
        return s;
    }
    double eval(double t01) const {
        double v = 0;
        for (int j = 0; j < 3; ++j) v += amp[j] * std::sin(2.0 * M_PI * cycles[j] * t01 + phase[j]);
        return v * norm;
    }
};

void append_gaussian(GaussianSet& set, const Vec3<float>& center, float scale, float opacity,
                     const Vec3<float>& color) {
    set.centers.insert(set.centers.end(), {center[0], center[1], center[2]});
    set.rotations.insert(set.rotations.end(), {1.f, 0.f, 0.f, 0.f});
    const float ls = std::log(scale);
    set.log_scales.insert(set.log_scales.end(), {ls, ls, ls});
    set.opacity_logits.push_back(logit(opacity));
    std::vector<float> sh(set.sh_dim(), 0.0f);
    for (int c = 0; c < 3; ++c) sh[c] = (color[c] - 0.5f) / static_cast<float>(kShC0);
    set.sh.insert(set.sh.end(), sh.begin(), sh.end());
}

}  // namespace

SynthScene synth_build_scene(const SynthConfig& cfg) {
    require(cfg.frames >= 22, ErrorCode::invalid_argument,
            "synth: need at least 22 frames for a 10:1 split");
    require(cfg.width >= 32 && cfg.height >= 32, ErrorCode::invalid_argument,
            "synth: image must be at least 32x32");

    SynthScene scene;
    auto rng = seeded_rng(cfg.seed, 0x5ce0e);
    std::uniform_real_distribution<double> u(0.0, 1.0);

    const float r = cfg.face_radius;
    const float face_z = 2.5f;
    scene.lip_z = 2.45f;
    const float mouth_y = 0.45f * r;   // image y grows downward
    const float brow_y = -0.45f * r;
    const float mouth_half_w = 0.5f * r;
    const float lip_sigma = 0.02f * r;
    // vertical layout: the aperture can open to +-max_gap/2; the moving lips
    // seal everything from the aperture edge out past the static mouth frame,
    // which in turn hands over to the face disk
    const float aperture_half = 0.5f * cfg.max_gap;
    const int n_strips = 6;
    const int n_frame_rows = 4;
    const float frame_span = (1.4f + 1.5f * (n_frame_rows - 1) + 2.0f) * lip_sigma;
    const float exclusion_half = aperture_half + frame_span + 0.06f * r;

    scene.base.sh_degree = 1;
    scene.base.embed_dim = 0;

    // face disk with a hole at the mouth zone
    const int n_face = 240;
    const Vec3<float> skin(0.85f, 0.64f, 0.52f);
    int placed = 0;
    while (placed < n_face) {
        const float a = static_cast<float>(2.0 * M_PI * u(rng));
        const float rad = static_cast<float>(std::sqrt(u(rng)));
        const float x = rad * r * 0.95f * std::cos(a);
        const float y = rad * r * 1.05f * std::sin(a);
        if (std::abs(x) < mouth_half_w + 0.1f * r && std::abs(y - mouth_y) < exclusion_half) continue;
        Vec3<float> col = skin;
        for (int c = 0; c < 3; ++c)
            col[c] = std::clamp(col[c] + static_cast<float>(0.16 * (u(rng) - 0.5)), 0.05f, 0.95f);
        const float z = face_z + static_cast<float>(0.04 * (u(rng) - 0.5));
        const float scale = r * (0.075f + 0.03f * static_cast<float>(u(rng)));
        append_gaussian(scene.base, {x, y, z}, scale, 0.7f + 0.2f * static_cast<float>(u(rng)), col);
        ++placed;
    }

    const float lip_dx = 1.2f * lip_sigma;
    // static mouth frame: sharp skin-toned rows just outside the widest
    // aperture, sealing the hand-off to the soft face disk
    {
        const Vec3<float> frame_color(0.78f, 0.55f, 0.45f);
        for (int side = 0; side < 2; ++side) {
            const float sign = side == 0 ? -1.0f : 1.0f;
            for (int row = 0; row < n_frame_rows; ++row) {
                const float y = mouth_y + sign * (aperture_half + (1.4f + 1.5f * row) * lip_sigma);
                for (float x = -mouth_half_w - 0.06f * r; x <= mouth_half_w + 0.06f * r; x += lip_dx) {
                    Vec3<float> col = frame_color;
                    for (int c = 0; c < 3; ++c)
                        col[c] = std::clamp(col[c] + static_cast<float>(0.1 * (u(rng) - 0.5)),
                                            0.05f, 0.95f);
                    append_gaussian(scene.base, {x, y, face_z - 0.025f}, lip_sigma, 0.92f, col);
                }
            }
        }
        // vertical seals left and right of the lip span
        for (int side = 0; side < 2; ++side) {
            const float sign = side == 0 ? -1.0f : 1.0f;
            for (float y = mouth_y - aperture_half; y <= mouth_y + aperture_half;
                 y += 1.4f * lip_sigma) {
                for (int col_i = 0; col_i < 3; ++col_i) {
                    const float x = sign * (mouth_half_w + (1.4f + 1.5f * col_i) * lip_sigma);
                    append_gaussian(scene.base, {x, y, face_z - 0.025f}, lip_sigma, 0.92f,
                                    {0.8f, 0.58f, 0.47f});
                }
            }
        }
    }

    {
        // replicate the a-signal stream to compute the mean of gap(t)
        auto sig_rng = seeded_rng(cfg.seed, 0xa0d10);
        BandSignal a1 = BandSignal::make(sig_rng);
        double mean = 0;
        for (int t = 0; t < cfg.frames; ++t) {
            const double x = cfg.frames > 1 ? static_cast<double>(t) / (cfg.frames - 1) : 0.0;
            const double a = cfg.static_scene ? 0.0 : a1.eval(x);
            mean += cfg.max_gap * (0.5 + 0.5 * a);
        }
        scene.gap_mean = static_cast<float>(mean / cfg.frames);
    }

    // lips: stacked strips of small sharp Gaussians; the inner strip sits
    // 1.4 sigma behind the aperture edge so an open slit actually clears, and
    // the stack is long enough to seal the frame rows when closed
    const Vec3<float> lip_color(0.82f, 0.42f, 0.48f);
    for (int side = 0; side < 2; ++side) {  // 0 = upper, 1 = lower
        const float sign = side == 0 ? -1.0f : 1.0f;
        for (int strip = 0; strip < n_strips; ++strip) {
            const float off = (1.4f + 1.5f * strip) * lip_sigma;
            for (float x = -mouth_half_w + lip_dx / 2; x <= mouth_half_w - lip_dx / 2; x += lip_dx) {
                const float y = mouth_y + sign * (scene.gap_mean / 2 + off);
                Vec3<float> col = lip_color;
                for (int c = 0; c < 3; ++c)
                    col[c] = std::clamp(col[c] + static_cast<float>(0.08 * (u(rng) - 0.5)), 0.05f, 0.95f);
                const float z = scene.lip_z + static_cast<float>(0.02 * (u(rng) - 0.5));
                append_gaussian(scene.base, {x, y, z}, lip_sigma, 0.9f, col);
                (side == 0 ? scene.upper_lip : scene.lower_lip).push_back(scene.base.size() - 1);
            }
        }
    }

    // brow cluster driven by the expression signal
    const Vec3<float> brow_color(0.35f, 0.22f, 0.18f);
    const int n_brow = 36;
    for (int i = 0; i < n_brow; ++i) {
        const float x = static_cast<float>((u(rng) * 2 - 1) * 0.55 * r);
        const float y = brow_y + static_cast<float>((u(rng) * 2 - 1) * 0.06 * r);
        const float z = 2.48f + static_cast<float>(0.02 * (u(rng) - 0.5));
        append_gaussian(scene.base, {x, y, z}, r * 0.05f, 0.85f, brow_color);
        scene.brow.push_back(scene.base.size() - 1);
    }
    scene.base.validate();

    // camera: identity rotation at the origin, face fills ~75% of the frame
    scene.camera.width = cfg.width;
    scene.camera.height = cfg.height;
    scene.camera.fx = scene.camera.fy = 0.75f * (std::min(cfg.width, cfg.height) / 2.0f) * face_z / r;
    scene.camera.cx = cfg.width / 2.0f;
    scene.camera.cy = cfg.height / 2.0f;
    scene.camera.near_clip = 0.1f;
    scene.camera.far_clip = 100.0f;
    scene.camera.validate();

    // background plate: dark smooth gradient with seeded blotches
    scene.background = Image(cfg.width, cfg.height);
    const double bx = u(rng), by = u(rng);
    for (int y = 0; y < cfg.height; ++y)
        for (int x = 0; x < cfg.width; ++x) {
            const double fx = static_cast<double>(x) / cfg.width;
            const double fy = static_cast<double>(y) / cfg.height;
            const double wob = 0.03 * std::sin(6.0 * (fx + bx)) * std::cos(5.0 * (fy + by));
            float* p = scene.background.at(x, y);
            p[0] = static_cast<float>(0.07 + 0.04 * fx + wob);
            p[1] = static_cast<float>(0.09 + 0.03 * fy + wob);
            p[2] = static_cast<float>(0.14 + 0.05 * fy - wob);
        }

    // mouth rectangle: projected extent of the lip strips over the full gap
    // range, padded and clamped to at least the SSIM window
    {
        float min_u = 1e9f, max_u = -1e9f, min_v = 1e9f, max_v = -1e9f;
        for (int side = 0; side < 2; ++side) {
            const auto& ids = side == 0 ? scene.upper_lip : scene.lower_lip;
            const float sign = side == 0 ? -1.0f : 1.0f;
            for (auto gi : ids) {
                for (float gap : {0.0f, cfg.max_gap}) {
                    Vec3<float> c = scene.base.center(gi);
                    c[1] += sign * (gap - scene.gap_mean) / 2;
                    const auto uvz = project_point(c, scene.camera);
                    min_u = std::min(min_u, uvz[0]);
                    max_u = std::max(max_u, uvz[0]);
                    min_v = std::min(min_v, uvz[1]);
                    max_v = std::max(max_v, uvz[1]);
                }
            }
        }
        const int pad = 3;
        Rect rect;
        rect.x = std::max(0, static_cast<int>(std::floor(min_u)) - pad);
        rect.y = std::max(0, static_cast<int>(std::floor(min_v)) - pad);
        rect.w = std::min(cfg.width - rect.x, static_cast<int>(std::ceil(max_u)) - rect.x + 2 * pad);
        rect.h = std::min(cfg.height - rect.y, static_cast<int>(std::ceil(max_v)) - rect.y + 2 * pad);
        const int min_side = 16;  // keep the SSIM window applicable
        if (rect.w < min_side) rect.w = std::min(min_side, cfg.width - rect.x);
        if (rect.h < min_side) rect.h = std::min(min_side, cfg.height - rect.y);
        scene.mouth_rect = rect;
    }
    return scene;
}

std::vector<DrivingFeatures> synth_driving_signals(const SynthConfig& cfg) {
    auto rng = seeded_rng(cfg.seed, 0xa0d10);
    BandSignal a1 = BandSignal::make(rng);
    std::vector<BandSignal> a_rest, e_all;
    for (int j = 1; j < cfg.audio_dim; ++j) a_rest.push_back(BandSignal::make(rng));
    for (int j = 0; j < 6; ++j) e_all.push_back(BandSignal::make(rng));

    std::vector<DrivingFeatures> out(cfg.frames);
    for (int t = 0; t < cfg.frames; ++t) {
        const double x = cfg.frames > 1 ? static_cast<double>(t) / (cfg.frames - 1) : 0.0;
        auto& dr = out[t];
        dr.audio.resize(cfg.audio_dim);
        dr.expression.resize(6);
        dr.audio[0] = cfg.static_scene ? 0.0f : static_cast<float>(a1.eval(x));
        for (int j = 1; j < cfg.audio_dim; ++j)
            dr.audio[j] = cfg.static_scene ? 0.0f : static_cast<float>(a_rest[j - 1].eval(x));
        for (int j = 0; j < 6; ++j)
            dr.expression[j] =
                cfg.static_scene ? 2.5f : static_cast<float>(2.5 + 2.5 * e_all[j].eval(x));
    }
    return out;
}

GaussianSet synth_deformed_scene(const SynthScene& scene, const SynthConfig& cfg,
                                 const DrivingFeatures& drive) {
    GaussianSet out = scene.base;
    const float gap = cfg.max_gap * (0.5f + 0.5f * drive.audio[0]);
    const float lip_shift = (gap - scene.gap_mean) / 2;
    for (auto gi : scene.upper_lip) out.centers[3 * gi + 1] -= lip_shift;
    for (auto gi : scene.lower_lip) out.centers[3 * gi + 1] += lip_shift;
    const float brow_shift = cfg.brow_amplitude * (drive.expression[0] - 2.5f) / 2.5f;
    for (auto gi : scene.brow) out.centers[3 * gi + 1] += brow_shift;
    return out;
}

void synth_scene_generate(const SynthConfig& cfg, const std::string& out_dir) {
    const SynthScene scene = synth_build_scene(cfg);
    const auto drive = synth_driving_signals(cfg);

    fs::create_directories(out_dir + "/frames");

    KeyValueFile kv;
    kv.set("frames", std::to_string(cfg.frames));
    kv.set("width", std::to_string(cfg.width));
    kv.set("height", std::to_string(cfg.height));
    kv.set("d_a", std::to_string(cfg.audio_dim));
    kv.set("split_ratio", std::to_string(cfg.split_ratio));
    kv.set("background", "background.ppm");
    camera_to_kv(scene.camera, kv);
    kv.save(out_dir + "/manifest.txt");

    write_ppm(scene.background, out_dir + "/background.ppm");
    write_f32(scene.background, out_dir + "/background.f32");

    const auto cam_d = scene.camera.cast<double>();
    const auto bg_d = scene.background.cast<double>();
    for (int t = 0; t < cfg.frames; ++t) {
        const GaussianSet frame_set = synth_deformed_scene(scene, cfg, drive[t]);
        const ImageD img =
            rasterize_brute_force(frame_set.cast<double>(), cam_d, bg_d, cfg.render_threads);
        const Image img_f = img.cast<float>();
        const std::string base = out_dir + "/frames/" + frame_name(t);
        write_ppm(img_f, base + ".ppm");
        write_f32(img_f, base + ".f32");
    }

    {
        std::ofstream f(out_dir + "/features.csv");
        require(f.good(), ErrorCode::io, "synth: cannot write features.csv");
        for (const auto& dr : drive) {
            for (int j = 0; j < dr.audio.size(); ++j) f << (j ? "," : "") << fmt_float(dr.audio[j]);
            for (int j = 0; j < 6; ++j) f << ',' << fmt_float(dr.expression[j]);
            f << '\n';
        }
    }
    {
        std::ofstream f(out_dir + "/mouth_rects.csv");
        require(f.good(), ErrorCode::io, "synth: cannot write mouth_rects.csv");
        const auto& r = scene.mouth_rect;
        for (int t = 0; t < cfg.frames; ++t)
            f << r.x << ',' << r.y << ',' << r.w << ',' << r.h << '\n';
    }

    // canonical (mean-pose) point cloud for initialization
    PointCloud pc;
    pc.positions = scene.base.centers;
    pc.colors.resize(3 * scene.base.size());
    for (std::int64_t i = 0; i < scene.base.size(); ++i) {
        const Vec3<float> dir(0, 0, 1);
        const Vec3<float> rgb = eval_sh_color(scene.base.sh_ptr(i), scene.base.sh_dim(), dir,
                                              scene.base.sh_degree);
        for (int c = 0; c < 3; ++c)
            pc.colors[3 * i + c] =
                static_cast<std::uint8_t>(std::lround(std::clamp(rgb[c], 0.0f, 1.0f) * 255.0f));
    }
    save_ply(pc, out_dir + "/points.ply", true);
}

double measure_aperture_gap(const Image& img, const Image& background, const Rect& rect,
                            double tol) {
    require(img.same_shape(background), ErrorCode::invalid_argument,
            "measure_aperture_gap: shape mismatch");
    require(rect.x >= 0 && rect.y >= 0 && rect.w > 0 && rect.h > 0 &&
                rect.x + rect.w <= img.width && rect.y + rect.h <= img.height,
            ErrorCode::invalid_argument, "measure_aperture_gap: rect out of bounds");
    double total = 0;
    for (int x = rect.x; x < rect.x + rect.w; ++x) {
        double col = 0;
        for (int y = rect.y; y < rect.y + rect.h; ++y) {
            const float* p = img.at(x, y);
            const float* b = background.at(x, y);
            const double dist =
                (std::abs(p[0] - b[0]) + std::abs(p[1] - b[1]) + std::abs(p[2] - b[2])) / 3.0;
            col += std::clamp(1.0 - dist / tol, 0.0, 1.0);
        }
        total += col;
    }
    return total / rect.w;
}

// --- checkpoints -----------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'S', 'P', 'L', 'D'};

template <class T>
void put(std::ostream& f, T v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T take(std::istream& f, const char* what) {
    T v;
    f.read(reinterpret_cast<char*>(&v), sizeof(T));
    require(f.gcount() == sizeof(T), ErrorCode::io, std::string("checkpoint: truncated ") + what);
    return v;
}

std::vector<const LinearT<float>*> layer_list(const DeformField& field) {
    std::vector<const LinearT<float>*> layers = {&field.trunk1, &field.trunk2};
    for (int h = 0; h < kNumDeformHeads; ++h)
        if (field.heads[h]) layers.push_back(&*field.heads[h]);
    return layers;
}

}  // namespace

void checkpoint_save(const Checkpoint& ckpt, const std::string& path) {
    ckpt.set.validate();
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary);
        require(f.good(), ErrorCode::io, "checkpoint: cannot write " + tmp);
        f.write(kMagic, 4);
        put<std::uint32_t>(f, kCheckpointVersion);
        put<std::uint64_t>(f, static_cast<std::uint64_t>(ckpt.set.size()));
        put<std::uint32_t>(f, static_cast<std::uint32_t>(ckpt.set.sh_degree));
        put<std::uint32_t>(f, static_cast<std::uint32_t>(ckpt.set.embed_dim));
        put<std::uint32_t>(f, static_cast<std::uint32_t>(ckpt.field.audio_dim));
        put<std::uint32_t>(f, static_cast<std::uint32_t>(ckpt.field.hidden));
        put<std::uint32_t>(f, static_cast<std::uint32_t>(ckpt.field.enc_z.freqs));
        put<std::uint32_t>(f, static_cast<std::uint32_t>(ckpt.field.enc_e.freqs));
        put<std::uint32_t>(f, ckpt.field.mask.bits);
        put<std::uint64_t>(f, ckpt.seed);
        put<std::uint64_t>(f, ckpt.iteration);

        const auto layers = layer_list(ckpt.field);
        put<std::uint32_t>(f, static_cast<std::uint32_t>(layers.size()));
        for (const auto* l : layers) {
            put<std::uint32_t>(f, static_cast<std::uint32_t>(l->w.rows()));
            put<std::uint32_t>(f, static_cast<std::uint32_t>(l->w.cols()));
        }

        auto put_floats = [&](const std::vector<float>& v) {
            f.write(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(float));
        };
        put_floats(ckpt.set.centers);
        put_floats(ckpt.set.rotations);
        put_floats(ckpt.set.log_scales);
        put_floats(ckpt.set.opacity_logits);
        put_floats(ckpt.set.sh);
        put_floats(ckpt.set.embeddings);
        for (const auto* l : layers) {
            f.write(reinterpret_cast<const char*>(l->w.data()), l->w.size() * sizeof(float));
            f.write(reinterpret_cast<const char*>(l->b.data()), l->b.size() * sizeof(float));
        }
        require(f.good(), ErrorCode::io, "checkpoint: write failed for " + tmp);
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    require(!ec, ErrorCode::io, "checkpoint: rename to " + path + " failed: " + ec.message());
}

Checkpoint checkpoint_load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    require(f.good(), ErrorCode::io, "checkpoint: cannot open " + path);
    char magic[4];
    f.read(magic, 4);
    require(f.gcount() == 4 && std::memcmp(magic, kMagic, 4) == 0, ErrorCode::io,
            "checkpoint: bad magic in " + path);
    const auto version = take<std::uint32_t>(f, "version");
    require(version == kCheckpointVersion, ErrorCode::io,
            "checkpoint: unsupported version " + std::to_string(version));

    Checkpoint ckpt;
    const auto n = take<std::uint64_t>(f, "gaussian count");
    ckpt.set.sh_degree = static_cast<int>(take<std::uint32_t>(f, "sh degree"));
    ckpt.set.embed_dim = static_cast<int>(take<std::uint32_t>(f, "embed dim"));
    ckpt.field.audio_dim = static_cast<int>(take<std::uint32_t>(f, "audio dim"));
    ckpt.field.hidden = static_cast<int>(take<std::uint32_t>(f, "hidden"));
    ckpt.field.enc_z.freqs = static_cast<int>(take<std::uint32_t>(f, "enc_z freqs"));
    ckpt.field.enc_e.freqs = static_cast<int>(take<std::uint32_t>(f, "enc_e freqs"));
    ckpt.field.mask.bits = take<std::uint32_t>(f, "mask");
    ckpt.seed = take<std::uint64_t>(f, "seed");
    ckpt.iteration = take<std::uint64_t>(f, "iteration");
    ckpt.field.embed_dim = ckpt.set.embed_dim;
    ckpt.field.sh_dim = 3 * sh_coeff_count(ckpt.set.sh_degree);

    const auto n_layers = take<std::uint32_t>(f, "layer count");
    std::vector<std::pair<std::uint32_t, std::uint32_t>> dims(n_layers);
    for (auto& d : dims) {
        d.first = take<std::uint32_t>(f, "layer rows");
        d.second = take<std::uint32_t>(f, "layer cols");
    }

    ckpt.set.resize(static_cast<std::int64_t>(n));
    auto take_floats = [&](std::vector<float>& v, const char* what) {
        f.read(reinterpret_cast<char*>(v.data()), v.size() * sizeof(float));
        require(f.gcount() == static_cast<std::streamsize>(v.size() * sizeof(float)), ErrorCode::io,
                std::string("checkpoint: size mismatch reading ") + what + " (expected " +
                    std::to_string(v.size() * sizeof(float)) + " bytes, got " +
                    std::to_string(f.gcount()) + ")");
    };
    take_floats(ckpt.set.centers, "centers");
    take_floats(ckpt.set.rotations, "rotations");
    take_floats(ckpt.set.log_scales, "log scales");
    take_floats(ckpt.set.opacity_logits, "opacity logits");
    take_floats(ckpt.set.sh, "SH coefficients");
    take_floats(ckpt.set.embeddings, "embeddings");

    std::vector<LinearT<float>*> slots = {&ckpt.field.trunk1, &ckpt.field.trunk2};
    for (int h = 0; h < kNumDeformHeads; ++h)
        if (ckpt.field.mask.has(kHeadOrder[h])) {
            ckpt.field.heads[h].emplace();
            slots.push_back(&*ckpt.field.heads[h]);
        }
    require(slots.size() == n_layers, ErrorCode::io,
            "checkpoint: layer count does not match attribute mask");
    for (size_t i = 0; i < slots.size(); ++i) {
        slots[i]->w.resize(dims[i].first, dims[i].second);
        slots[i]->b.resize(dims[i].first);
        f.read(reinterpret_cast<char*>(slots[i]->w.data()), slots[i]->w.size() * sizeof(float));
        require(f.gcount() == static_cast<std::streamsize>(slots[i]->w.size() * sizeof(float)),
                ErrorCode::io, "checkpoint: size mismatch reading MLP weights");
        f.read(reinterpret_cast<char*>(slots[i]->b.data()), slots[i]->b.size() * sizeof(float));
        require(f.gcount() == static_cast<std::streamsize>(slots[i]->b.size() * sizeof(float)),
                ErrorCode::io, "checkpoint: size mismatch reading MLP bias");
    }
    f.peek();
    require(f.eof(), ErrorCode::io, "checkpoint: trailing bytes in " + path);

    // derive trunk input dim consistency
    require(ckpt.field.trunk1.w.cols() == ckpt.field.input_dim(), ErrorCode::io,
            "checkpoint: trunk input dimension mismatch");
    return ckpt;
}

SizeReport model_size_report(const std::string& checkpoint_path) {
    const Checkpoint ckpt = checkpoint_load(checkpoint_path);
    SizeReport r;
    r.n_gaussians = ckpt.set.size();
    r.sh_degree = ckpt.set.sh_degree;
    r.embed_dim = ckpt.set.embed_dim;
    const int attr_floats = 11 + ckpt.set.sh_dim();
    r.floats_per_gaussian = attr_floats + ckpt.set.embed_dim;
    r.attribute_bytes = r.n_gaussians * attr_floats * 4;
    r.embedding_bytes = r.n_gaussians * ckpt.set.embed_dim * 4;
    r.mlp_bytes = ckpt.field.param_count() * 4;
    r.payload_bytes = r.attribute_bytes + r.embedding_bytes + r.mlp_bytes;

    const auto layers = layer_list(ckpt.field);
    r.header_bytes = 4 + 4 + 8 + 4 * 7 + 8 + 8 + 4 + static_cast<std::int64_t>(layers.size()) * 8;
    std::error_code ec;
    r.file_bytes = static_cast<std::int64_t>(fs::file_size(checkpoint_path, ec));
    require(!ec, ErrorCode::io, "model_size_report: cannot stat " + checkpoint_path);
    return r;
}

}  // namespace dsplat
