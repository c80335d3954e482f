#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "cesyn/error.hpp"
#include "cesyn/rng.hpp"

namespace cesyn {

using Shape = std::vector<int64_t>;

inline int64_t numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

// Dense N-d array over a shared contiguous buffer. Layout convention is
// [batch, channels, depth, height, width] with width innermost. `node` links
// the tensor to an autodiff tape; -1 means constant (no gradient flows).
template <typename T>
struct Tensor {
    Shape shape;
    std::shared_ptr<std::vector<T>> store;
    int node = -1;
    uint64_t tape_serial = 0;

    Tensor() = default;

    static Tensor zeros(const Shape& s) {
        Tensor t;
        t.shape = s;
        t.store = std::make_shared<std::vector<T>>(numel(s), T(0));
        return t;
    }

    static Tensor full(const Shape& s, T v) {
        Tensor t = zeros(s);
        std::fill(t.store->begin(), t.store->end(), v);
        return t;
    }

    static Tensor from_data(const Shape& s, std::vector<T> values) {
        require_shape(numel(s) == static_cast<int64_t>(values.size()),
                      "tensor data length " + std::to_string(values.size()) +
                          " does not match shape " + shape_str(s));
        Tensor t;
        t.shape = s;
        t.store = std::make_shared<std::vector<T>>(std::move(values));
        return t;
    }

    static Tensor scalar(T v) { return full({1}, v); }

    static Tensor randn(const Shape& s, Rng& rng, T stddev = T(1)) {
        Tensor t = zeros(s);
        for (auto& v : *t.store) v = static_cast<T>(rng.normal() * static_cast<double>(stddev));
        return t;
    }

    static Tensor rand_uniform(const Shape& s, Rng& rng, T lo = T(0), T hi = T(1)) {
        Tensor t = zeros(s);
        for (auto& v : *t.store) v = static_cast<T>(rng.uniform(lo, hi));
        return t;
    }

    int64_t size() const { return store ? static_cast<int64_t>(store->size()) : 0; }
    int64_t dim(size_t i) const { return shape[i]; }
    size_t rank() const { return shape.size(); }

    T* data() { return store->data(); }
    const T* data() const { return store->data(); }

    T& operator[](int64_t i) { return (*store)[i]; }
    const T& operator[](int64_t i) const { return (*store)[i]; }

    T item() const {
        require_shape(size() == 1, "item() requires a single-element tensor, got " + shape_str(shape));
        return (*store)[0];
    }

    bool all_finite() const {
        for (const T& v : *store)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    // Deep copy with no tape link.
    Tensor detached_copy() const {
        Tensor t;
        t.shape = shape;
        t.store = std::make_shared<std::vector<T>>(*store);
        return t;
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> t;
        t.shape = shape;
        t.store = std::make_shared<std::vector<U>>(store->size());
        for (size_t i = 0; i < store->size(); ++i) (*t.store)[i] = static_cast<U>((*store)[i]);
        return t;
    }
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

inline bool same_shape(const Shape& a, const Shape& b) { return a == b; }

}  // namespace cesyn
