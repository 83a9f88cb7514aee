#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "saliex/errors.hpp"

namespace saliex {

// Dense n-dimensional array of doubles, row-major. Feature maps follow the
// [channels, height, width] convention.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;

    explicit Tensor(std::vector<int> s, double fill = 0.0) : shape(std::move(s)) {
        data.assign(static_cast<std::size_t>(count(shape)), fill);
    }

    static std::int64_t count(const std::vector<int>& s) {
        std::int64_t n = 1;
        for (int d : s) {
            if (d <= 0) throw contract_error("tensor dimensions must be positive");
            n *= d;
        }
        return n;
    }

    static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape); }

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    // Indexing helpers for cold paths and tests; hot loops use raw pointers.
    double& at(int c, int h, int w) {
        return data[(static_cast<std::size_t>(c) * shape[1] + h) * shape[2] + w];
    }
    double at(int c, int h, int w) const {
        return data[(static_cast<std::size_t>(c) * shape[1] + h) * shape[2] + w];
    }
    double& at(int h, int w) { return data[static_cast<std::size_t>(h) * shape[1] + w]; }
    double at(int h, int w) const { return data[static_cast<std::size_t>(h) * shape[1] + w]; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    std::string shape_str() const {
        std::string s = "[";
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape[i]);
        }
        return s + "]";
    }
};

// H x W boolean raster. Serves both as ground-truth mask (salient = true)
// and as a polarized saliency map.
struct BinaryMask {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> v;  // 0 or 1, row-major

    BinaryMask() = default;
    BinaryMask(int h, int w, std::uint8_t fill = 0)
        : height(h), width(w), v(static_cast<std::size_t>(h) * w, fill) {}

    bool at(int i, int j) const { return v[static_cast<std::size_t>(i) * width + j] != 0; }
    void set(int i, int j, bool b) { v[static_cast<std::size_t>(i) * width + j] = b ? 1 : 0; }
    std::int64_t count_true() const {
        std::int64_t n = 0;
        for (auto b : v) n += b;
        return n;
    }
    bool operator==(const BinaryMask& o) const {
        return height == o.height && width == o.width && v == o.v;
    }
};

// Per-pixel saliency probabilities, shape [1,H,W], every value in (0,1).
struct SaliencyMap {
    Tensor values;

    int height() const { return values.dim(1); }
    int width() const { return values.dim(2); }
};

// Trainable tensor with gradient and momentum state.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
    Tensor momentum;

    Parameter() = default;
    Parameter(std::string n, Tensor v)
        : name(std::move(n)), value(std::move(v)), grad(Tensor::zeros_like(value)),
          momentum(Tensor::zeros_like(value)) {}

    void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0); }
};

}  // namespace saliex
