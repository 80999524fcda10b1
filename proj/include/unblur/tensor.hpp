#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "unblur/common.hpp"

namespace unblur {

// Dense row-major tensor. The buffer is shared between copies; treat values
// as immutable once a tensor has been handed to the autograd tape. Parameter
// tensors are mutated in place by the optimizer only.
template <typename T>
struct Tensor {
    std::vector<int> shape;
    std::shared_ptr<std::vector<T>> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
        data = std::make_shared<std::vector<T>>(numel_of(shape), T(0));
    }
    Tensor(std::vector<int> s, std::shared_ptr<std::vector<T>> d) : shape(std::move(s)), data(std::move(d)) {}

    static std::size_t numel_of(const std::vector<int>& s) {
        std::size_t n = 1;
        for (int d : s) n *= static_cast<std::size_t>(d);
        return n;
    }

    std::size_t numel() const { return data ? data->size() : 0; }
    bool empty() const { return !data; }
    T* ptr() { return data->data(); }
    const T* ptr() const { return data->data(); }
    T& operator[](std::size_t i) { return (*data)[i]; }
    const T& operator[](std::size_t i) const { return (*data)[i]; }

    int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
    int rank() const { return static_cast<int>(shape.size()); }

    // Same buffer, new shape. Element count must match.
    Tensor reshaped(std::vector<int> s) const {
        if (numel_of(s) != numel()) throw ArgumentError("reshape element count mismatch");
        return Tensor(std::move(s), data);
    }

    Tensor clone() const {
        Tensor t;
        t.shape = shape;
        t.data = std::make_shared<std::vector<T>>(*data);
        return t;
    }

    void fill(T v) { std::fill(data->begin(), data->end(), v); }

    bool all_finite() const {
        for (const T& v : *data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> t;
        t.shape = shape;
        t.data = std::make_shared<std::vector<U>>(numel());
        for (std::size_t i = 0; i < numel(); ++i) (*t.data)[i] = static_cast<U>((*data)[i]);
        return t;
    }
};

template <typename T>
inline bool same_shape(const Tensor<T>& a, const Tensor<T>& b) {
    return a.shape == b.shape;
}

inline std::string shape_str(const std::vector<int>& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

}  // namespace unblur
