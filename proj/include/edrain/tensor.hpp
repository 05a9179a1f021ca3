#pragma once

// Dense row-major tensor. Image batches use NCHW layout throughout.

#include <cmath>
#include <cstddef>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace edrain {

template <typename T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape, T fill = T(0))
        : shape_(std::move(shape)), data_(checked_size(shape_), fill) {}

    static Tensor from_data(std::vector<int> shape, std::vector<T> data) {
        Tensor t;
        t.shape_ = std::move(shape);
        if (checked_size(t.shape_) != data.size())
            throw std::invalid_argument("Tensor: data length does not match shape " +
                                        shape_string(t.shape_));
        t.data_ = std::move(data);
        return t;
    }

    int rank() const { return static_cast<int>(shape_.size()); }

    int dim(int i) const {
        if (i < 0 || i >= rank())
            throw std::invalid_argument("Tensor: dim index out of range");
        return shape_[static_cast<std::size_t>(i)];
    }

    const std::vector<int>& shape() const { return shape_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    // NCHW element access
    T& at(int n, int c, int h, int w) { return data_[offset4(n, c, h, w)]; }
    const T& at(int n, int c, int h, int w) const { return data_[offset4(n, c, h, w)]; }

    // CHW / rank-3 access
    T& at(int c, int h, int w) { return data_[offset3(c, h, w)]; }
    const T& at(int c, int h, int w) const { return data_[offset3(c, h, w)]; }

    // HW / rank-2 access
    T& at(int h, int w) { return data_[offset2(h, w)]; }
    const T& at(int h, int w) const { return data_[offset2(h, w)]; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    void fill(T v) {
        for (auto& x : data_) x = v;
    }

    std::string shape_str() const { return shape_string(shape_); }

    static std::string shape_string(const std::vector<int>& s) {
        std::ostringstream os;
        os << "(";
        for (std::size_t i = 0; i < s.size(); ++i)
            os << (i ? "," : "") << s[i];
        os << ")";
        return os.str();
    }

private:
    static std::size_t checked_size(const std::vector<int>& shape) {
        std::size_t n = 1;
        for (int d : shape) {
            if (d <= 0)
                throw std::invalid_argument("Tensor: non-positive dimension in shape " +
                                            shape_string(shape));
            n *= static_cast<std::size_t>(d);
        }
        return shape.empty() ? 0 : n;
    }

    std::size_t offset4(int n, int c, int h, int w) const {
        return ((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w;
    }
    std::size_t offset3(int c, int h, int w) const {
        return (static_cast<std::size_t>(c) * shape_[1] + h) * shape_[2] + w;
    }
    std::size_t offset2(int h, int w) const {
        return static_cast<std::size_t>(h) * shape_[1] + w;
    }

    std::vector<int> shape_;
    std::vector<T> data_;
};

template <typename T>
bool all_finite(const Tensor<T>& t) {
    for (std::size_t i = 0; i < t.size(); ++i)
        if (!std::isfinite(static_cast<double>(t[i]))) return false;
    return true;
}

template <typename T, typename U>
Tensor<T> tensor_cast(const Tensor<U>& src) {
    Tensor<T> dst(src.shape());
    for (std::size_t i = 0; i < src.size(); ++i)
        dst[i] = static_cast<T>(src[i]);
    return dst;
}

} // namespace edrain
