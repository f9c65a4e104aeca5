#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace soda2 {

// Dense row-major tensor of 64-bit reals. `grad`, when non-empty, has the
// same length as `values` and accumulates d(loss)/d(values).
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> values;
    std::vector<double> grad;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> s);
    Tensor(std::vector<std::size_t> s, std::vector<double> v);

    std::size_t numel() const { return values.size(); }
    std::size_t dim(std::size_t i) const { return shape[i]; }

    double& operator[](std::size_t i) { return values[i]; }
    double operator[](std::size_t i) const { return values[i]; }

    void alloc_grad();          // allocate & zero the gradient buffer
    void zero_grad();
    bool all_finite() const;
    std::string shape_str() const;
};

std::size_t shape_numel(const std::vector<std::size_t>& shape);
bool same_shape(const Tensor& a, const Tensor& b);

Tensor zeros(std::vector<std::size_t> shape);
Tensor full(std::vector<std::size_t> shape, double value);

}  // namespace soda2
