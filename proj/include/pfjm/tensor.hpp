#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace pfjm {

/// Dense row-major tensor of doubles. Image volumes use shape {C, H, W}
/// with channel order (phase I, phase II, phase III); vectors use {N}.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0)
        : shape_(std::move(shape)), data_(count(shape_), fill) {}
    Tensor(std::vector<std::size_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != count(shape_))
            throw std::invalid_argument("Tensor: shape/data size mismatch");
    }

    static std::size_t count(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (auto s : shape) n *= s;
        return n;
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t size() const { return data_.size(); }
    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& raw() { return data_; }
    const std::vector<double>& raw() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    Tensor& operator+=(const Tensor& o) {
        require_same(o, "+=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }
    Tensor& operator-=(const Tensor& o) {
        require_same(o, "-=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
        return *this;
    }
    Tensor& operator*=(double k) {
        for (auto& v : data_) v *= k;
        return *this;
    }

    friend Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
    friend Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
    friend Tensor operator*(Tensor a, double k) { return a *= k; }
    friend Tensor operator*(double k, Tensor a) { return a *= k; }

    double norm2() const {
        double s = 0;
        for (auto v : data_) s += v * v;
        return std::sqrt(s);
    }

    bool all_finite() const {
        for (auto v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    std::string shape_str() const {
        std::string s = "[";
        for (std::size_t i = 0; i < shape_.size(); ++i)
            s += (i ? "x" : "") + std::to_string(shape_[i]);
        return s + "]";
    }

private:
    void require_same(const Tensor& o, const char* op) const {
        if (!same_shape(o))
            throw std::invalid_argument(std::string("Tensor") + op + ": shape mismatch " +
                                        shape_str() + " vs " + o.shape_str());
    }

    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

inline Tensor lerp(const Tensor& a, const Tensor& b, double t) {
    // (1-t)*a + t*b
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = (1.0 - t) * a[i] + t * b.raw()[i];
    return out;
}

}  // namespace pfjm
