#include "dj/tensor.hpp"

#include <cmath>

#include "dj/error.hpp"

namespace dj {

std::size_t shape_numel(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw ShapeError("shape dimensions must be positive");
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

Tensor Tensor::zeros(std::vector<int> shape) {
    Tensor t;
    std::size_t n = shape_numel(shape);
    t.shape = std::move(shape);
    t.data.assign(n, 0.0);
    return t;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> data) {
    if (shape_numel(shape) != data.size())
        throw ShapeError("tensor data length does not match shape product");
    Tensor t;
    t.shape = std::move(shape);
    t.data = std::move(data);
    if (!t.all_finite()) throw ArgumentError("tensor contains non-finite entries");
    return t;
}

bool Tensor::all_finite() const {
    for (double v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

} // namespace dj
