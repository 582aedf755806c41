#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "handcontact/error.hpp"

namespace hc {

// Dense row-major f64 tensor. Rank 1..3 is all the network and the fitter
// need. Everything runs in double; gradient checks stay tight and desk
// scale makes f32 throughput irrelevant.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape, double fill = 0.0)
        : shape_(std::move(shape)), data_(checked_numel(shape_), fill) {}

    Tensor(std::vector<int> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (checked_numel(shape_) != data_.size())
            throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                                 " does not match shape");
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    static Tensor row_matrix(int rows, int cols, std::vector<double> data) {
        return Tensor({rows, cols}, std::move(data));
    }

    static Tensor identity(int n) {
        Tensor t({n, n});
        for (int i = 0; i < n; ++i) t.data_[static_cast<std::size_t>(i) * n + i] = 1.0;
        return t;
    }

    int rank() const { return static_cast<int>(shape_.size()); }
    const std::vector<int>& shape() const { return shape_; }
    int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
    std::size_t numel() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    int rows() const { return shape_.at(0); }
    int cols() const { return shape_.at(1); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& at2(int r, int c) { return data_[static_cast<std::size_t>(r) * cols() + c]; }
    double at2(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols() + c]; }

    double& at3(int i, int k, int c) {
        return data_[(static_cast<std::size_t>(i) * dim(1) + k) * dim(2) + c];
    }
    double at3(int i, int k, int c) const {
        return data_[(static_cast<std::size_t>(i) * dim(1) + k) * dim(2) + c];
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    std::string shape_string() const {
        std::string s = "[";
        for (std::size_t i = 0; i < shape_.size(); ++i) {
            if (i) s += "x";
            s += std::to_string(shape_[i]);
        }
        return s + "]";
    }

private:
    static std::size_t checked_numel(const std::vector<int>& shape) {
        if (shape.empty()) throw DimensionError("tensor rank 0 not supported");
        std::size_t n = 1;
        for (int d : shape) {
            if (d <= 0) throw DimensionError("non-positive dimension in tensor shape");
            n *= static_cast<std::size_t>(d);
        }
        return n;
    }

    std::vector<int> shape_;
    std::vector<double> data_;
};

}  // namespace hc
