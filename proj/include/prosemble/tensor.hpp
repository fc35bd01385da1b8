#pragma once

#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "prosemble/common.hpp"

namespace prosemble {

inline int shape_numel(const std::vector<int>& shape) {
    int n = 1;
    for (int d : shape) {
        if (d < 0) throw std::invalid_argument("negative dimension in shape " + shape_string(shape));
        n *= d;
    }
    return n;
}

// Dense row-major tensor. Scalar type is a template parameter: training runs
// in float, gradient checking in double.
template <typename S>
struct Tensor {
    std::vector<int> shape;
    std::vector<S> values;
    std::vector<S> grad;  // optional; empty unless populated by an optimizer or test

    Tensor() = default;

    Tensor(std::vector<int> shp, std::vector<S> vals) : shape(std::move(shp)), values(std::move(vals)) {
        if (shape_numel(shape) != static_cast<int>(values.size())) {
            throw std::invalid_argument("tensor value count " + std::to_string(values.size()) +
                                        " does not match shape " + shape_string(shape));
        }
    }

    static Tensor zeros(std::vector<int> shp) {
        const int n = shape_numel(shp);
        return Tensor(std::move(shp), std::vector<S>(static_cast<std::size_t>(n), S(0)));
    }

    static Tensor full(std::vector<int> shp, S value) {
        const int n = shape_numel(shp);
        return Tensor(std::move(shp), std::vector<S>(static_cast<std::size_t>(n), value));
    }

    int numel() const { return static_cast<int>(values.size()); }

    int rows() const {
        if (shape.size() != 2) throw std::logic_error("rows() on non-2d tensor " + shape_string(shape));
        return shape[0];
    }

    int cols() const {
        if (shape.size() != 2) throw std::logic_error("cols() on non-2d tensor " + shape_string(shape));
        return shape[1];
    }

    S& at(int r, int c) { return values[static_cast<std::size_t>(r) * cols() + c]; }
    S at(int r, int c) const { return values[static_cast<std::size_t>(r) * cols() + c]; }
};

}  // namespace prosemble
