#pragma once

#include <cstddef>
#include <vector>

namespace dj {

std::size_t shape_numel(const std::vector<int>& shape);

// Dense row-major array of 64-bit reals. The one value carrier for inputs,
// activations, weights and gradients.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;

    static Tensor zeros(std::vector<int> shape);
    // Validates shape/data consistency and finiteness.
    static Tensor from(std::vector<int> shape, std::vector<double> data);

    std::size_t numel() const { return data.size(); }
    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    bool all_finite() const;
};

} // namespace dj
