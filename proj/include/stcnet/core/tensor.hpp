#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <vector>

#include "stcnet/core/error.hpp"

namespace stcnet {

/// Dense row-major tensor of doubles with shared-buffer copy semantics.
///
/// Copying a Tensor aliases the underlying storage; ops never mutate their
/// inputs, so sharing is safe everywhere except the optimizer, which owns
/// its parameters exclusively. Use clone() for a deep copy.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<int> shape) {
        Tensor t;
        t.shape_ = std::move(shape);
        t.buf_ = std::make_shared<std::vector<double>>(t.count(), 0.0);
        return t;
    }

    static Tensor full(std::vector<int> shape, double v) {
        Tensor t = zeros(std::move(shape));
        std::fill(t.buf_->begin(), t.buf_->end(), v);
        return t;
    }

    static Tensor scalar(double v) { return full({1}, v); }

    static Tensor from_vector(std::vector<int> shape, std::vector<double> values) {
        Tensor t;
        t.shape_ = std::move(shape);
        STC_CHECK(t.count() == values.size(), "shape/data size mismatch");
        t.buf_ = std::make_shared<std::vector<double>>(std::move(values));
        return t;
    }

    bool defined() const { return static_cast<bool>(buf_); }
    int ndim() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
    const std::vector<int>& shape() const { return shape_; }
    std::size_t numel() const { return buf_ ? buf_->size() : 0; }

    double* data() { return buf_->data(); }
    const double* data() const { return buf_->data(); }

    double& operator[](std::size_t i) { return (*buf_)[i]; }
    double operator[](std::size_t i) const { return (*buf_)[i]; }

    // CHW indexing helpers.
    double& at(int c, int y, int x) {
        return (*buf_)[(static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x];
    }
    double at(int c, int y, int x) const {
        return (*buf_)[(static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x];
    }
    double& at2(int r, int c) { return (*buf_)[static_cast<std::size_t>(r) * shape_[1] + c]; }
    double at2(int r, int c) const { return (*buf_)[static_cast<std::size_t>(r) * shape_[1] + c]; }

    Tensor clone() const {
        Tensor t;
        t.shape_ = shape_;
        t.buf_ = std::make_shared<std::vector<double>>(*buf_);
        return t;
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (double v : *buf_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    void fill(double v) { std::fill(buf_->begin(), buf_->end(), v); }

    /// Bitwise equality of shape and every element.
    bool equals(const Tensor& o) const {
        if (shape_ != o.shape_) return false;
        return std::equal(buf_->begin(), buf_->end(), o.buf_->begin());
    }

    double max_abs_diff(const Tensor& o) const {
        STC_CHECK(same_shape(o), "max_abs_diff: shape mismatch");
        double m = 0.0;
        for (std::size_t i = 0; i < numel(); ++i) m = std::max(m, std::abs((*buf_)[i] - (*o.buf_)[i]));
        return m;
    }

private:
    std::size_t count() const {
        std::size_t n = 1;
        for (int d : shape_) {
            STC_CHECK(d > 0, "non-positive tensor dimension");
            n *= static_cast<std::size_t>(d);
        }
        return shape_.empty() ? 0 : n;
    }

    std::vector<int> shape_;
    std::shared_ptr<std::vector<double>> buf_;
};

inline std::size_t spatial_size(const Tensor& t) {
    STC_CHECK(t.ndim() == 3, "expected CHW tensor");
    return static_cast<std::size_t>(t.dim(1)) * t.dim(2);
}

} // namespace stcnet
