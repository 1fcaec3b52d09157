#pragma once

#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

#include "cadis/tensor.hpp"

namespace cadis {

// H x W x C image, values in [0,1], interleaved RGB (or single channel).
struct Image {
    int h = 0, w = 0, c = 0;
    std::vector<double> data;  // h*w*c, HWC layout

    Image() = default;
    Image(int h_, int w_, int c_) : h(h_), w(w_), c(c_) {
        data.assign(static_cast<std::size_t>(h) * w * c, 0.0);
    }

    double& at(int y, int x, int ch) {
        return data[(static_cast<std::size_t>(y) * w + x) * c + ch];
    }
    double at(int y, int x, int ch) const {
        return data[(static_cast<std::size_t>(y) * w + x) * c + ch];
    }

    std::size_t numel() const { return data.size(); }

    void clamp01() {
        for (auto& v : data) v = std::clamp(v, 0.0, 1.0);
    }
};

inline double image_mse(const Image& a, const Image& b) {
    if (a.h != b.h || a.w != b.w || a.c != b.c)
        throw std::invalid_argument("image_mse: shape mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        double d = a.data[i] - b.data[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.data.size());
}

// Rec.601 luma.
inline std::vector<double> to_gray(const Image& img) {
    std::vector<double> g(static_cast<std::size_t>(img.h) * img.w);
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x) {
            if (img.c >= 3)
                g[static_cast<std::size_t>(y) * img.w + x] =
                    0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) + 0.114 * img.at(y, x, 2);
            else
                g[static_cast<std::size_t>(y) * img.w + x] = img.at(y, x, 0);
        }
    return g;
}

// Pack images into a (B, C, H, W) tensor.
inline Tensor to_tensor(const std::vector<Image>& imgs) {
    if (imgs.empty()) throw std::invalid_argument("to_tensor: empty batch");
    int h = imgs[0].h, w = imgs[0].w, c = imgs[0].c;
    Tensor t({static_cast<std::int64_t>(imgs.size()), c, h, w});
    for (std::size_t b = 0; b < imgs.size(); ++b) {
        const Image& im = imgs[b];
        if (im.h != h || im.w != w || im.c != c)
            throw std::invalid_argument("to_tensor: inconsistent batch shapes");
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) t.at4(static_cast<std::int64_t>(b), ch, y, x) = im.at(y, x, ch);
    }
    return t;
}

inline Image from_tensor(const Tensor& t, int batch_index) {
    if (t.ndim() != 4) throw std::invalid_argument("from_tensor: expects 4-D tensor");
    int c = static_cast<int>(t.dim(1)), h = static_cast<int>(t.dim(2)), w = static_cast<int>(t.dim(3));
    Image im(h, w, c);
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) im.at(y, x, ch) = t.at4(batch_index, ch, y, x);
    return im;
}

// Bilinear resize to (oh, ow); identity when sizes already match.
inline Image resize_bilinear(const Image& img, int oh, int ow) {
    if (img.h == oh && img.w == ow) return img;
    Image out(oh, ow, img.c);
    double sy = static_cast<double>(img.h) / oh;
    double sx = static_cast<double>(img.w) / ow;
    for (int y = 0; y < oh; ++y) {
        double fy = (y + 0.5) * sy - 0.5;
        int y0 = static_cast<int>(std::floor(fy));
        double wy = fy - y0;
        int y0c = std::clamp(y0, 0, img.h - 1), y1c = std::clamp(y0 + 1, 0, img.h - 1);
        for (int x = 0; x < ow; ++x) {
            double fx = (x + 0.5) * sx - 0.5;
            int x0 = static_cast<int>(std::floor(fx));
            double wx = fx - x0;
            int x0c = std::clamp(x0, 0, img.w - 1), x1c = std::clamp(x0 + 1, 0, img.w - 1);
            for (int ch = 0; ch < img.c; ++ch) {
                double top = (1 - wx) * img.at(y0c, x0c, ch) + wx * img.at(y0c, x1c, ch);
                double bot = (1 - wx) * img.at(y1c, x0c, ch) + wx * img.at(y1c, x1c, ch);
                out.at(y, x, ch) = (1 - wy) * top + wy * bot;
            }
        }
    }
    return out;
}

inline Image flip_horizontal(const Image& img) {
    Image out(img.h, img.w, img.c);
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            for (int ch = 0; ch < img.c; ++ch) out.at(y, x, ch) = img.at(y, img.w - 1 - x, ch);
    return out;
}

// Disk I/O (implemented with OpenCV imgcodecs).
Image load_image(const std::string& path);
void save_png(const Image& img, const std::string& path);
// Encode to JPEG at the given quality and decode back; used by the jpeg
// degradation kind (the result is stored losslessly as PNG).
Image jpeg_roundtrip(const Image& img, int quality);

}  // namespace cadis
