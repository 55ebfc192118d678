#pragma once

#include <algorithm>
#include <string>
#include <utility>

#include "holobench/nn/layers.hpp"

namespace holo::nn {

struct ConvGeometry {
    Shape3 in;
    int out_channels = 1;
    int kernel = 3;
    int stride = 1;
    int pad = 0;

    int out_h() const { return (in.h + 2 * pad - kernel) / stride + 1; }
    int out_w() const { return (in.w + 2 * pad - kernel) / stride + 1; }
    Shape3 out() const { return {out_channels, out_h(), out_w()}; }
    int patch() const { return in.c * kernel * kernel; }
};

namespace detail {

// Output positions [lo, hi) whose tap at kernel offset k lands inside [0, n).
inline std::pair<int, int> valid_range(int n, int out, int stride, int pad, int k) {
    int lo = 0;
    while (lo < out && lo * stride - pad + k < 0) ++lo;
    int hi = out;
    while (hi > lo && (hi - 1) * stride - pad + k >= n) --hi;
    return {lo, hi};
}

// Writes the patches of every sample into `cols` (patch x N*HWout); sample s
// owns columns [s*HWout, (s+1)*HWout).
inline void im2col(const Matrix& x, const ConvGeometry& g, Matrix& cols) {
    const int oh = g.out_h(), ow = g.out_w(), k = g.kernel, st = g.stride;
    const Eigen::Index hw = static_cast<Eigen::Index>(oh) * ow;
    const Eigen::Index N = x.rows();
    cols.resize(g.patch(), N * hw);
    for (int ki = 0; ki < k; ++ki) {
        const auto [ylo, yhi] = valid_range(g.in.h, oh, st, g.pad, ki);
        for (int kj = 0; kj < k; ++kj) {
            const auto [xlo, xhi] = valid_range(g.in.w, ow, st, g.pad, kj);
            for (int c = 0; c < g.in.c; ++c) {
                double* base = cols.data() + ((static_cast<Eigen::Index>(c) * k + ki) * k + kj) * cols.cols();
                for (Eigen::Index s = 0; s < N; ++s) {
                    const double* src = x.data() + s * x.cols() + static_cast<Eigen::Index>(c) * g.in.h * g.in.w;
                    double* dst = base + s * hw;
                    for (int oy = 0; oy < oh; ++oy) {
                        double* out = dst + oy * ow;
                        if (oy < ylo || oy >= yhi) {
                            std::fill(out, out + ow, 0.0);
                            continue;
                        }
                        const double* row = src + (oy * st - g.pad + ki) * g.in.w;
                        std::fill(out, out + xlo, 0.0);
                        for (int ox = xlo; ox < xhi; ++ox) out[ox] = row[ox * st - g.pad + kj];
                        std::fill(out + xhi, out + ow, 0.0);
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: scatters-adds patch columns back into images.
inline void col2im(const Matrix& cols, const ConvGeometry& g, Eigen::Index N, Matrix& x) {
    const int oh = g.out_h(), ow = g.out_w(), k = g.kernel, st = g.stride;
    const Eigen::Index hw = static_cast<Eigen::Index>(oh) * ow;
    x.setZero(N, g.in.size());
    for (int ki = 0; ki < k; ++ki) {
        const auto [ylo, yhi] = valid_range(g.in.h, oh, st, g.pad, ki);
        for (int kj = 0; kj < k; ++kj) {
            const auto [xlo, xhi] = valid_range(g.in.w, ow, st, g.pad, kj);
            for (int c = 0; c < g.in.c; ++c) {
                const double* base = cols.data() + ((static_cast<Eigen::Index>(c) * k + ki) * k + kj) * cols.cols();
                for (Eigen::Index s = 0; s < N; ++s) {
                    double* dst = x.data() + s * x.cols() + static_cast<Eigen::Index>(c) * g.in.h * g.in.w;
                    const double* src = base + s * hw;
                    for (int oy = ylo; oy < yhi; ++oy) {
                        double* row = dst + (oy * st - g.pad + ki) * g.in.w;
                        const double* in = src + oy * ow;
                        for (int ox = xlo; ox < xhi; ++ox) row[ox * st - g.pad + kj] += in[ox];
                    }
                }
            }
        }
    }
}

// (C x N*HW) channel-major block <-> batch rows of (C, HW).
inline Matrix channels_to_batch(const Matrix& m, Eigen::Index N, int C, Eigen::Index hw) {
    Matrix y(N, C * hw);
    for (Eigen::Index s = 0; s < N; ++s)
        for (int c = 0; c < C; ++c) y.row(s).segment(c * hw, hw) = m.row(c).segment(s * hw, hw);
    return y;
}

inline Matrix batch_to_channels(const Matrix& y, int C, Eigen::Index hw) {
    const Eigen::Index N = y.rows();
    Matrix m(C, N * hw);
    for (Eigen::Index s = 0; s < N; ++s)
        for (int c = 0; c < C; ++c) m.row(c).segment(s * hw, hw) = y.row(s).segment(c * hw, hw);
    return m;
}

} // namespace detail

// 2-D convolution (cross-correlation), weight (Cout x Cin*k*k).
class Conv2d final : public WeightedLayer {
public:
    Conv2d(ConvGeometry geom, Rng& rng, bool spectral = false, std::string name = "conv") : g_(geom) {
        const double fan_in = g_.patch();
        const double fan_out = static_cast<double>(g_.out_channels) * g_.kernel * g_.kernel;
        init_weights(xavier_uniform(g_.out_channels, g_.patch(), fan_in, fan_out, rng), g_.out_channels, spectral,
                     rng, name);
    }

    Matrix forward(const Matrix& x, Mode mode) override {
        require_cols(x, g_.in.size(), "conv2d");
        prepare_weight(mode);
        n_ = x.rows();
        detail::im2col(x, g_, cols_);
        Matrix out = w_eff_ * cols_;
        out.colwise() += bias_.value.row(0).transpose();
        return detail::channels_to_batch(out, n_, g_.out_channels, g_.out().spatial());
    }

    Matrix backward(const Matrix& g) override {
        const Matrix d = detail::batch_to_channels(g, g_.out_channels, g_.out().spatial());
        accumulate_weight_grad(d * cols_.transpose());
        bias_.grad.row(0) += d.rowwise().sum().transpose();
        if (!input_grad_) return {};
        const Matrix dcols = w_eff_.transpose() * d;
        Matrix dx;
        detail::col2im(dcols, g_, n_, dx);
        return dx;
    }

    std::string kind() const override { return "conv2d"; }
    const ConvGeometry& geometry() const { return g_; }
    // A first layer fed by data can skip the input gradient; backward then
    // returns an empty matrix.
    void set_input_grad(bool on) { input_grad_ = on; }
    Shape3 out_shape() const { return g_.out(); }

private:
    ConvGeometry g_;
    Eigen::Index n_ = 0;
    Matrix cols_;
    bool input_grad_ = true;
};

// Transposed convolution: the adjoint of Conv2d(adjoint_of) mapping
// adjoint_of.out() back to adjoint_of.in. Weight (Cin x Cout*k*k) where Cin is
// adjoint_of.out_channels and Cout is adjoint_of.in.c.
class ConvTranspose2d final : public WeightedLayer {
public:
    ConvTranspose2d(ConvGeometry adjoint_of, Rng& rng, bool spectral = false, std::string name = "tconv")
        : g_(adjoint_of) {
        const double fan_in = static_cast<double>(g_.out_channels) * g_.kernel * g_.kernel;
        const double fan_out = g_.patch();
        init_weights(xavier_uniform(g_.out_channels, g_.patch(), fan_in, fan_out, rng), g_.in.c, spectral, rng,
                     name);
    }

    Matrix forward(const Matrix& x, Mode mode) override {
        const Shape3 in = g_.out();
        require_cols(x, in.size(), "conv_transpose2d");
        prepare_weight(mode);
        x_channels_ = detail::batch_to_channels(x, in.c, in.spatial());
        const Matrix cols = w_eff_.transpose() * x_channels_;
        Matrix y;
        detail::col2im(cols, g_, x.rows(), y);
        const int P = g_.in.spatial();
        for (int c = 0; c < g_.in.c; ++c) y.middleCols(static_cast<Eigen::Index>(c) * P, P).array() += bias_.value(0, c);
        return y;
    }

    Matrix backward(const Matrix& g) override {
        const Shape3 in = g_.out();
        const int P = g_.in.spatial();
        for (int c = 0; c < g_.in.c; ++c) bias_.grad(0, c) += g.middleCols(static_cast<Eigen::Index>(c) * P, P).sum();
        Matrix gcols;
        detail::im2col(g, g_, gcols);
        accumulate_weight_grad(x_channels_ * gcols.transpose());
        const Matrix dx_channels = w_eff_ * gcols;
        return detail::channels_to_batch(dx_channels, g.rows(), in.c, in.spatial());
    }

    std::string kind() const override { return "conv_transpose2d"; }
    Shape3 out_shape() const { return g_.in; }

private:
    ConvGeometry g_;
    Matrix x_channels_;
};

} // namespace holo::nn
