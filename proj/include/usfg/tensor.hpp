#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "usfg/error.hpp"

namespace usfg {

// Dense row-major tensor, up to rank 4, batch outermost.
template <typename T>
struct Tensor {
    std::vector<int> dims;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> d) : dims(std::move(d)) {
        data.assign(count(), T(0));
    }

    size_t count() const {
        size_t n = 1;
        for (int d : dims) n *= static_cast<size_t>(d);
        return n;
    }

    void zero() { std::fill(data.begin(), data.end(), T(0)); }

    bool same_shape(const Tensor& other) const { return dims == other.dims; }

    bool operator==(const Tensor&) const = default;
};

// Reshapes only when needed so hot-path buffers are reused between calls.
// Existing contents are preserved on a shape match; callers overwrite fully.
template <typename T>
void ensure_shape(Tensor<T>& t, const std::vector<int>& dims) {
    if (t.dims == dims) return;
    t.dims = dims;
    t.data.assign(t.count(), T(0));
}

}  // namespace usfg
