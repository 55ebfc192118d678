#pragma once

#include <algorithm>
#include <cmath>

#include "holobench/core/rng.hpp"
#include "holobench/nn/tensor.hpp"

namespace holo::nn {

inline constexpr double kSigmaFloor = 1e-12;

// Power-iteration estimate of the largest singular value of a weight matrix
// (rows = output units, cols = flattened inputs).
struct PowerIteration {
    Matrix u; // rows x 1
    Matrix v; // cols x 1
    double sigma = 1.0;

    PowerIteration() = default;
    PowerIteration(Eigen::Index rows, Eigen::Index cols, Rng& rng) : u(rows, 1), v(cols, 1) {
        for (Eigen::Index k = 0; k < rows; ++k) u(k, 0) = standard_normal(rng);
        u /= std::max(u.norm(), kSigmaFloor);
        v.setZero();
    }

    void step(const Matrix& W) {
        v.noalias() = W.transpose() * u;
        v /= std::max(v.norm(), kSigmaFloor);
        u.noalias() = W * v;
        u /= std::max(u.norm(), kSigmaFloor);
    }

    // Iterates until the estimate settles, so that training starts from the
    // true largest singular value; afterwards one step per update tracks it.
    void converge(const Matrix& W, int max_steps = 5000, double tol = 1e-12) {
        double prev = 0.0;
        for (int k = 0; k < max_steps; ++k) {
            step(W);
            sigma = estimate(W);
            if (std::abs(sigma - prev) <= tol * sigma) break;
            prev = sigma;
        }
    }

    double estimate(const Matrix& W) const {
        return std::max((u.transpose() * W * v)(0, 0), kSigmaFloor);
    }
};

// One power-iteration step, then W / sigma_hat with sigma_hat = u^T W v.
inline Matrix spectral_normalize(const Matrix& W, PowerIteration& state) {
    state.step(W);
    state.sigma = state.estimate(W);
    return W / state.sigma;
}

// Gradient w.r.t. the raw weight given the gradient w.r.t. the normalized one,
// with u and v held constant: dW = (G - <G, W_sn> u v^T) / sigma.
inline Matrix spectral_norm_backward(const Matrix& grad_normalized, const Matrix& W_normalized,
                                     const PowerIteration& state) {
    const double inner = (grad_normalized.array() * W_normalized.array()).sum();
    Matrix g = grad_normalized;
    g.noalias() -= inner * (state.u * state.v.transpose());
    return g / state.sigma;
}

} // namespace holo::nn
