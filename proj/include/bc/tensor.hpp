#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "bc/error.hpp"

namespace bc {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& s);
std::string shape_str(const Shape& s);

// Dense row-major 64-bit float array. Values are immutable by convention once
// an op has produced the tensor; ops return fresh tensors.
struct Tensor {
    Shape shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(Shape s, double fill = 0.0)
        : shape(std::move(s)), data(numel(shape), fill) {}
    Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        if (numel(shape) != data.size())
            throw ShapeError("tensor data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
    }

    static Tensor scalar(double v) { return Tensor{Shape{}, std::vector<double>{v}}; }

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    bool is_scalar() const { return data.size() == 1 && shape.empty(); }

    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    // 2-D accessors (r x c row-major)
    double& at(std::size_t r, std::size_t c) { return data[r * shape[1] + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * shape[1] + c]; }
};

bool same_shape(const Tensor& a, const Tensor& b);
bool all_finite(const Tensor& t);

} // namespace bc
