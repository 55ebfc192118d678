#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "holobench/core/error.hpp"

namespace holo::nn {

// A batch is a row-major matrix: one sample per row, features flattened in
// (channel, row, col) order.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

enum class Mode { train, eval };

struct Shape3 {
    int c = 1;
    int h = 1;
    int w = 1;

    int spatial() const { return h * w; }
    int size() const { return c * h * w; }
    bool operator==(const Shape3&) const = default;
};

// Trainable tensor with its gradient accumulator.
struct Param {
    std::string name;
    Matrix value;
    Matrix grad;

    Param() = default;
    Param(std::string n, Matrix v) : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}

    void zero_grad() { grad.setZero(); }
};

// Named view of every tensor that must survive a checkpoint: parameters and
// auxiliary state (batch-norm running stats, power-iteration vectors, ...).
using StateVisitor = std::function<void(const std::string& name, Matrix& tensor)>;

inline void check_finite(const Matrix& m, const std::string& what) {
    if (!m.allFinite()) throw NumericError("non-finite values in " + what);
}

inline void require_cols(const Matrix& x, Eigen::Index cols, const std::string& who) {
    if (x.cols() != cols)
        throw InvalidArgument(who + ": expected " + std::to_string(cols) + " features, got " +
                              std::to_string(x.cols()));
}

} // namespace holo::nn
