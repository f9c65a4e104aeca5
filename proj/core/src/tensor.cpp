#include "soda2/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace soda2 {

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

Tensor::Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
    values.assign(shape_numel(shape), 0.0);
}

Tensor::Tensor(std::vector<std::size_t> s, std::vector<double> v)
    : shape(std::move(s)), values(std::move(v)) {}

void Tensor::alloc_grad() { grad.assign(values.size(), 0.0); }

void Tensor::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

bool Tensor::all_finite() const {
    return std::all_of(values.begin(), values.end(),
                       [](double v) { return std::isfinite(v); });
}

std::string Tensor::shape_str() const {
    std::string s = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + ")";
}

bool same_shape(const Tensor& a, const Tensor& b) { return a.shape == b.shape; }

Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }

Tensor full(std::vector<std::size_t> shape, double value) {
    Tensor t(std::move(shape));
    std::fill(t.values.begin(), t.values.end(), value);
    return t;
}

}  // namespace soda2
