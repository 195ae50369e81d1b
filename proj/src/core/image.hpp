#pragma once

#include "core/common.hpp"

namespace dsplat {

// RGB image, row-major, channel-interleaved, values nominally in [0,1].
template <class T>
struct ImageT {
    int width = 0;
    int height = 0;
    std::vector<T> data;  // size = width * height * 3

    ImageT() = default;
    ImageT(int w, int h, T fill = T(0)) : width(w), height(h), data(static_cast<size_t>(w) * h * 3, fill) {
        require(w >= 0 && h >= 0, ErrorCode::invalid_argument, "image dimensions must be non-negative");
    }

    std::int64_t pixels() const { return static_cast<std::int64_t>(width) * height; }
    T* at(int x, int y) { return data.data() + (static_cast<size_t>(y) * width + x) * 3; }
    const T* at(int x, int y) const { return data.data() + (static_cast<size_t>(y) * width + x) * 3; }

    bool same_shape(const ImageT& o) const { return width == o.width && height == o.height; }

    template <class U>
    ImageT<U> cast() const {
        ImageT<U> out(width, height);
        for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }
};

using Image = ImageT<float>;
using ImageD = ImageT<double>;

// Axis-aligned pixel rectangle, [x, x+w) x [y, y+h).
struct Rect {
    int x = 0, y = 0, w = 0, h = 0;
};

template <class T>
ImageT<T> crop_region(const ImageT<T>& img, const Rect& r) {
    require(r.w > 0 && r.h > 0, ErrorCode::invalid_argument, "crop rect must be non-empty");
    require(r.x >= 0 && r.y >= 0 && r.x + r.w <= img.width && r.y + r.h <= img.height,
            ErrorCode::invalid_argument, "crop rect out of bounds");
    ImageT<T> out(r.w, r.h);
    for (int y = 0; y < r.h; ++y)
        for (int x = 0; x < r.w; ++x) {
            const T* src = img.at(r.x + x, r.y + y);
            T* dst = out.at(x, y);
            dst[0] = src[0];
            dst[1] = src[1];
            dst[2] = src[2];
        }
    return out;
}

}  // namespace dsplat
