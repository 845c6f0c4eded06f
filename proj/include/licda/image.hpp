#pragma once

#include <string>
#include <vector>

#include "licda/error.hpp"
#include "licda/tensor.hpp"

namespace licda {

// RGB image, channel-major float planes in [0,1].
struct Image {
    int height = 0;
    int width = 0;
    std::vector<float> pixels;  // 3 * height * width, CHW
    std::string source_path;
    int domain_label = -1;  // -1 when unknown

    std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
    float& at(int c, int y, int x) { return pixels[(static_cast<std::size_t>(c) * height + y) * width + x]; }
    float at(int c, int y, int x) const { return pixels[(static_cast<std::size_t>(c) * height + y) * width + x]; }
};

inline Image make_image(int h, int w, float fill = 0.0f) {
    Image img;
    img.height = h;
    img.width = w;
    img.pixels.assign(3 * static_cast<std::size_t>(h) * w, fill);
    return img;
}

inline void validate_image(const Image& img) {
    if (img.height <= 0 || img.width <= 0 ||
        img.pixels.size() != 3 * static_cast<std::size_t>(img.height) * img.width)
        throw DataError("image buffer does not match its dimensions");
    for (float p : img.pixels)
        if (!(p >= 0.0f && p <= 1.0f)) throw DataError("pixel outside [0,1] in " + img.source_path);
}

// Clamp to [0,1]; the +0.0f canonicalizes -0.0 so bit comparisons are stable.
inline float clamp01(float v) { return std::min(1.0f, std::max(0.0f, v)) + 0.0f; }

inline int mirror_index(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    int m = ((i % period) + period) % period;
    return m < n ? m : period - m;
}

// Reflect-pad so both sides are multiples of `multiple` and at least `min_side`.
inline Image reflect_pad(const Image& img, int multiple = 16, int min_side = 64) {
    auto target = [&](int d) {
        int t = std::max(d, min_side);
        return (t + multiple - 1) / multiple * multiple;
    };
    const int H = target(img.height), W = target(img.width);
    if (H == img.height && W == img.width) return img;
    Image out = make_image(H, W);
    out.source_path = img.source_path;
    out.domain_label = img.domain_label;
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < H; ++y) {
            const int sy = mirror_index(y, img.height);
            for (int x = 0; x < W; ++x) out.at(c, y, x) = img.at(c, sy, mirror_index(x, img.width));
        }
    return out;
}

inline Image crop_top_left(const Image& img, int h, int w) {
    if (h > img.height || w > img.width) throw DimError("crop larger than image");
    Image out = make_image(h, w);
    out.source_path = img.source_path;
    out.domain_label = img.domain_label;
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) out.at(c, y, x) = img.at(c, y, x);
    return out;
}

template <class S>
Tensor<S> image_to_tensor(const Image& img) {
    std::vector<S> v(img.pixels.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<S>(img.pixels[i]);
    return Tensor<S>::from({1, 3, img.height, img.width}, std::move(v));
}

// Converts a [1,3,H,W] (or [3,H,W]) tensor back to an Image, clamping to [0,1].
template <class S>
Image tensor_to_image(const Tensor<S>& t) {
    Shape sh = t.shape();
    if (sh.size() == 4 && sh[0] == 1) sh.erase(sh.begin());
    if (sh.size() != 3 || sh[0] != 3) throw DimError("tensor_to_image expects [3,H,W], got " + shape_str(t.shape()));
    Image img = make_image(sh[1], sh[2]);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = clamp01(static_cast<float>(t.values()[i]));
    return img;
}

// PNG I/O (src/image_png.cpp). Non-RGB inputs are converted; grayscale is
// expanded, alpha stripped, palettes resolved.
Image read_png(const std::string& path);
void write_png(const std::string& path, const Image& img);

}  // namespace licda
