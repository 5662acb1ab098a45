#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "ebit/core/error.hpp"

namespace ebit {

using Shape = std::vector<int>;

inline int64_t numel(const Shape& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << "]";
    return os.str();
}

// Dense row-major tensor. Plain value type: copy copies data.
template <class T>
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape) : shape_(std::move(shape)), v_(numel(shape_), T(0)) {}
    Tensor(Shape shape, T fill) : shape_(std::move(shape)), v_(numel(shape_), fill) {}
    Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), v_(std::move(data)) {
        if (static_cast<int64_t>(v_.size()) != numel(shape_))
            throw ShapeError("tensor data size does not match shape " + shape_str(shape_));
    }

    static Tensor scalar(T x) { return Tensor(Shape{1}, std::vector<T>{x}); }

    const Shape& shape() const { return shape_; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    int64_t size() const { return static_cast<int64_t>(v_.size()); }
    bool empty() const { return v_.empty(); }

    T* data() { return v_.data(); }
    const T* data() const { return v_.data(); }
    T& operator[](int64_t i) { return v_[static_cast<size_t>(i)]; }
    const T& operator[](int64_t i) const { return v_[static_cast<size_t>(i)]; }

    std::vector<T>& vec() { return v_; }
    const std::vector<T>& vec() const { return v_; }

    void fill(T x) { std::fill(v_.begin(), v_.end(), x); }

    Tensor reshaped(Shape s) const {
        if (numel(s) != size())
            throw ShapeError("reshape " + shape_str(shape_) + " -> " + shape_str(s));
        Tensor out = *this;
        out.shape_ = std::move(s);
        return out;
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (const T& x : v_)
            if (!std::isfinite(static_cast<double>(x))) return false;
        return true;
    }

private:
    Shape shape_;
    std::vector<T> v_;
};

template <class T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(what) + ": " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

}  // namespace ebit
