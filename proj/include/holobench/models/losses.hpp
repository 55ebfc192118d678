#pragma once

#include <cmath>

#include "holobench/nn/tensor.hpp"

namespace holo::models {

using nn::Matrix;

// Mean over the batch of the squared l2 row difference.
inline double squared_error(const Matrix& target, const Matrix& estimate) {
    return (estimate - target).squaredNorm() / static_cast<double>(target.rows());
}

inline Matrix squared_error_grad(const Matrix& target, const Matrix& estimate) {
    return 2.0 * (estimate - target) / static_cast<double>(target.rows());
}

// KL(N(mu, exp(log_var)) || N(0, 1)), summed over latent dims, averaged over
// the batch.
inline double kl_divergence(const Matrix& mu, const Matrix& log_var) {
    const auto kl = 0.5 * (mu.array().square() + log_var.array().exp() - 1.0 - log_var.array());
    return kl.sum() / static_cast<double>(mu.rows());
}

struct KlGrad {
    Matrix d_mu;
    Matrix d_log_var;
};

inline KlGrad kl_divergence_grad(const Matrix& mu, const Matrix& log_var) {
    const double n = static_cast<double>(mu.rows());
    return {mu / n, 0.5 * (log_var.array().exp() - 1.0).matrix() / n};
}

// log(1 + e^x) without overflow.
inline double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// Binary cross-entropy of a logit column against a constant label, averaged
// over the batch: label 1 gives -log s(x) = softplus(-x), label 0 gives
// -log(1 - s(x)) = softplus(x).
inline double bce_with_logits(const Matrix& logits, bool label) {
    double sum = 0.0;
    for (Eigen::Index k = 0; k < logits.size(); ++k) sum += softplus(label ? -logits.data()[k] : logits.data()[k]);
    return sum / static_cast<double>(logits.rows());
}

inline Matrix bce_with_logits_grad(const Matrix& logits, bool label) {
    const double n = static_cast<double>(logits.rows());
    return logits.unaryExpr([&](double x) { return (sigmoid(x) - (label ? 1.0 : 0.0)) / n; });
}

} // namespace holo::models
