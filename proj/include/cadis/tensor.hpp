#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace cadis {

// Dense row-major double tensor. Shapes follow (batch, channels, h, w) for
// feature maps, (rows, cols) for matrices.
struct Tensor {
    std::vector<std::int64_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::int64_t> s) : shape(std::move(s)) {
        data.assign(static_cast<std::size_t>(numel_of(shape)), 0.0);
    }

    static std::int64_t numel_of(const std::vector<std::int64_t>& s) {
        std::int64_t n = 1;
        for (auto d : s) n *= d;
        return n;
    }

    static Tensor zeros(std::vector<std::int64_t> s) { return Tensor(std::move(s)); }

    static Tensor full(std::vector<std::int64_t> s, double v) {
        Tensor t(std::move(s));
        for (auto& x : t.data) x = v;
        return t;
    }

    static Tensor scalar(double v) {
        Tensor t({1});
        t.data[0] = v;
        return t;
    }

    std::size_t numel() const { return data.size(); }
    std::int64_t dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
    int ndim() const { return static_cast<int>(shape.size()); }

    double& at(std::int64_t i) { return data[static_cast<std::size_t>(i)]; }
    double at(std::int64_t i) const { return data[static_cast<std::size_t>(i)]; }

    // 4-D accessor for (b, c, y, x).
    double& at4(std::int64_t b, std::int64_t c, std::int64_t y, std::int64_t x) {
        return data[static_cast<std::size_t>(((b * shape[1] + c) * shape[2] + y) * shape[3] + x)];
    }
    double at4(std::int64_t b, std::int64_t c, std::int64_t y, std::int64_t x) const {
        return data[static_cast<std::size_t>(((b * shape[1] + c) * shape[2] + y) * shape[3] + x)];
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    std::string shape_str() const {
        std::string s = "(";
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape[i]);
        }
        return s + ")";
    }
};

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(what) + ": shape mismatch " + a.shape_str() +
                                    " vs " + b.shape_str());
}

}  // namespace cadis
