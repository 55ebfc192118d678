#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "holobench/core/rng.hpp"
#include "holobench/nn/spectral_norm.hpp"
#include "holobench/nn/tensor.hpp"

namespace holo::nn {

class Layer {
public:
    virtual ~Layer() = default;

    virtual Matrix forward(const Matrix& x, Mode mode) = 0;
    // Gradient w.r.t. the input of the last forward call. Parameter gradients
    // are accumulated into Param::grad.
    virtual Matrix backward(const Matrix& grad_out) = 0;

    virtual std::string kind() const = 0;
    virtual void collect_params(std::vector<Param*>&) {}
    virtual void visit_state(const std::string&, const StateVisitor&) {}
    // Stops power-iteration updates and dropout resampling; used by gradient
    // checks and by frozen forward passes.
    virtual void set_frozen(bool) {}
};

// Glorot-uniform initialization, limit sqrt(6 / (fan_in + fan_out)).
inline Matrix xavier_uniform(Eigen::Index rows, Eigen::Index cols, double fan_in, double fan_out, Rng& rng) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    Matrix w(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) w(r, c) = uniform(rng, -limit, limit);
    return w;
}

// Shared weight handling for dense and convolutional layers: optional
// spectral normalization of the (out x in) weight matrix.
class WeightedLayer : public Layer {
public:
    void collect_params(std::vector<Param*>& out) override {
        out.push_back(&weight_);
        out.push_back(&bias_);
    }

    void visit_state(const std::string& prefix, const StateVisitor& visit) override {
        visit(prefix + ".weight", weight_.value);
        visit(prefix + ".bias", bias_.value);
        if (power_) {
            visit(prefix + ".sn_u", power_->u);
            visit(prefix + ".sn_v", power_->v);
        }
    }

    void set_frozen(bool frozen) override { frozen_ = frozen; }

    bool spectral() const { return power_.has_value(); }
    const PowerIteration* power_iteration() const { return power_ ? &*power_ : nullptr; }
    Param& weight() { return weight_; }
    Param& bias() { return bias_; }
    const Matrix& effective_weight() const { return w_eff_; }

protected:
    void init_weights(Matrix w, Eigen::Index bias_len, bool spectral, Rng& rng, const std::string& name) {
        weight_ = Param(name + ".weight", std::move(w));
        bias_ = Param(name + ".bias", Matrix::Zero(1, bias_len));
        if (spectral) {
            power_.emplace(weight_.value.rows(), weight_.value.cols(), rng);
            power_->converge(weight_.value);
        }
    }

    // Refreshes the weight actually used in the forward pass.
    void prepare_weight(Mode mode) {
        if (!power_) {
            w_eff_ = weight_.value;
            return;
        }
        if (mode == Mode::train && !frozen_) power_->step(weight_.value);
        power_->sigma = power_->estimate(weight_.value);
        w_eff_ = weight_.value / power_->sigma;
    }

    void accumulate_weight_grad(const Matrix& grad_eff) {
        if (power_) {
            weight_.grad += spectral_norm_backward(grad_eff, w_eff_, *power_);
        } else {
            weight_.grad += grad_eff;
        }
    }

    Param weight_;
    Param bias_;
    Matrix w_eff_;
    std::optional<PowerIteration> power_;
    bool frozen_ = false;
};

// y = x W^T + b, W is (out x in).
class Dense final : public WeightedLayer {
public:
    Dense(int in, int out, Rng& rng, bool spectral = false, std::string name = "dense") : in_(in), out_(out) {
        init_weights(xavier_uniform(out, in, in, out, rng), out, spectral, rng, name);
    }

    Matrix forward(const Matrix& x, Mode mode) override {
        require_cols(x, in_, "dense");
        prepare_weight(mode);
        x_ = x;
        Matrix y = x * w_eff_.transpose();
        y.rowwise() += bias_.value.row(0);
        return y;
    }

    Matrix backward(const Matrix& g) override {
        accumulate_weight_grad(g.transpose() * x_);
        bias_.grad.row(0) += g.colwise().sum();
        return g * w_eff_;
    }

    std::string kind() const override { return "dense"; }
    int in_features() const { return in_; }
    int out_features() const { return out_; }

private:
    int in_;
    int out_;
    Matrix x_;
};

class LeakyRelu final : public Layer {
public:
    explicit LeakyRelu(double slope = 0.2) : slope_(slope) {
        if (!(slope >= 0.0 && slope < 1.0)) throw InvalidArgument("leaky ReLU slope must lie in [0, 1)");
    }

    Matrix forward(const Matrix& x, Mode) override {
        x_ = x;
        // max(x, s x) equals the leaky ReLU for 0 <= s < 1.
        return x.array().max(slope_ * x.array());
    }

    Matrix backward(const Matrix& g) override {
        return g.array() * ((x_.array() > 0.0).cast<double>() * (1.0 - slope_) + slope_);
    }

    std::string kind() const override { return "leaky_relu"; }

private:
    double slope_;
    Matrix x_;
};

// Inverted dropout: training zeroes each unit with probability p and scales
// survivors by 1/(1-p); evaluation is the identity.
class Dropout final : public Layer {
public:
    Dropout(double rate, std::uint64_t seed) : rate_(rate), rng_(seed) {
        if (!(rate >= 0.0 && rate < 1.0)) throw InvalidArgument("dropout rate must lie in [0, 1)");
    }

    Matrix forward(const Matrix& x, Mode mode) override {
        if (mode == Mode::eval || rate_ == 0.0) {
            mask_ = Matrix::Ones(x.rows(), x.cols());
            return x;
        }
        if (!(frozen_ && mask_.rows() == x.rows() && mask_.cols() == x.cols())) {
            mask_.resize(x.rows(), x.cols());
            const double keep_scale = 1.0 / (1.0 - rate_);
            for (Eigen::Index k = 0; k < mask_.size(); ++k)
                mask_.data()[k] = uniform01(rng_) < rate_ ? 0.0 : keep_scale;
        }
        return x.cwiseProduct(mask_);
    }

    Matrix backward(const Matrix& g) override { return g.cwiseProduct(mask_); }

    std::string kind() const override { return "dropout"; }
    void set_frozen(bool frozen) override { frozen_ = frozen; }
    const Matrix& mask() const { return mask_; }

private:
    double rate_;
    Rng rng_;
    Matrix mask_;
    bool frozen_ = false;
};

// Batch normalization over the batch (and spatial positions for feature
// maps). Training uses biased batch statistics; evaluation uses running ones.
class BatchNorm final : public Layer {
public:
    explicit BatchNorm(Shape3 shape, std::string name = "bn", double momentum = 0.1, double eps = 1e-5)
        : shape_(shape), momentum_(momentum), eps_(eps), gamma_(name + ".gamma", Matrix::Ones(1, shape.c)),
          beta_(name + ".beta", Matrix::Zero(1, shape.c)), running_mean_(Matrix::Zero(1, shape.c)),
          running_var_(Matrix::Ones(1, shape.c)) {}

    Matrix forward(const Matrix& x, Mode mode) override {
        require_cols(x, shape_.size(), "batch_norm");
        const Eigen::Index N = x.rows();
        const int C = shape_.c;
        const int P = shape_.spatial();
        Matrix y(N, x.cols());
        xhat_.resize(N, x.cols());
        inv_std_.resize(1, C);
        if (mode == Mode::train) {
            if (N * P < 2) throw InvalidArgument("batch_norm: training needs more than one value per channel");
            const double count = static_cast<double>(N * P);
            for (int c = 0; c < C; ++c) {
                auto block = x.middleCols(static_cast<Eigen::Index>(c) * P, P);
                const double mean = block.sum() / count;
                const double var = (block.array() - mean).square().sum() / count;
                const double inv = 1.0 / std::sqrt(var + eps_);
                inv_std_(0, c) = inv;
                xhat_.middleCols(static_cast<Eigen::Index>(c) * P, P) = (block.array() - mean) * inv;
                running_mean_(0, c) = (1.0 - momentum_) * running_mean_(0, c) + momentum_ * mean;
                const double unbiased = count > 1 ? var * count / (count - 1) : var;
                running_var_(0, c) = (1.0 - momentum_) * running_var_(0, c) + momentum_ * unbiased;
            }
        } else {
            for (int c = 0; c < C; ++c) {
                const double inv = 1.0 / std::sqrt(running_var_(0, c) + eps_);
                inv_std_(0, c) = inv;
                xhat_.middleCols(static_cast<Eigen::Index>(c) * P, P) =
                    (x.middleCols(static_cast<Eigen::Index>(c) * P, P).array() - running_mean_(0, c)) * inv;
            }
        }
        train_ = mode == Mode::train;
        for (int c = 0; c < C; ++c)
            y.middleCols(static_cast<Eigen::Index>(c) * P, P) =
                xhat_.middleCols(static_cast<Eigen::Index>(c) * P, P).array() * gamma_.value(0, c) + beta_.value(0, c);
        return y;
    }

    Matrix backward(const Matrix& g) override {
        const Eigen::Index N = g.rows();
        const int C = shape_.c;
        const int P = shape_.spatial();
        const double count = static_cast<double>(N * P);
        Matrix dx(N, g.cols());
        for (int c = 0; c < C; ++c) {
            const auto gb = g.middleCols(static_cast<Eigen::Index>(c) * P, P);
            const auto xh = xhat_.middleCols(static_cast<Eigen::Index>(c) * P, P);
            const double sum_g = gb.sum();
            const double sum_gx = (gb.array() * xh.array()).sum();
            gamma_.grad(0, c) += sum_gx;
            beta_.grad(0, c) += sum_g;
            const double scale = gamma_.value(0, c) * inv_std_(0, c);
            if (train_) {
                dx.middleCols(static_cast<Eigen::Index>(c) * P, P) =
                    scale * (gb.array() - sum_g / count - xh.array() * (sum_gx / count));
            } else {
                dx.middleCols(static_cast<Eigen::Index>(c) * P, P) = scale * gb.array();
            }
        }
        return dx;
    }

    std::string kind() const override { return "batch_norm"; }

    void collect_params(std::vector<Param*>& out) override {
        out.push_back(&gamma_);
        out.push_back(&beta_);
    }

    void visit_state(const std::string& prefix, const StateVisitor& visit) override {
        visit(prefix + ".gamma", gamma_.value);
        visit(prefix + ".beta", beta_.value);
        visit(prefix + ".running_mean", running_mean_);
        visit(prefix + ".running_var", running_var_);
    }

    // Normalized activations of the last forward pass, before scale and shift.
    const Matrix& normalized() const { return xhat_; }

private:
    Shape3 shape_;
    double momentum_;
    double eps_;
    Param gamma_;
    Param beta_;
    Matrix running_mean_;
    Matrix running_var_;
    Matrix xhat_;
    Matrix inv_std_;
    bool train_ = true;
};

class Sequential {
public:
    Sequential() = default;
    Sequential(Sequential&&) = default;
    Sequential& operator=(Sequential&&) = default;

    template <typename L, typename... Args>
    L& add(Args&&... args) {
        auto layer = std::make_unique<L>(std::forward<Args>(args)...);
        L& ref = *layer;
        layers_.push_back(std::move(layer));
        return ref;
    }

    Matrix forward(const Matrix& x, Mode mode) {
        Matrix h = x;
        for (auto& l : layers_) h = l->forward(h, mode);
        return h;
    }

    Matrix backward(const Matrix& g) {
        Matrix d = g;
        for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) d = (*it)->backward(d);
        return d;
    }

    void collect_params(std::vector<Param*>& out) {
        for (auto& l : layers_) l->collect_params(out);
    }

    void visit_state(const std::string& prefix, const StateVisitor& visit) {
        for (std::size_t k = 0; k < layers_.size(); ++k)
            layers_[k]->visit_state(prefix + "." + std::to_string(k) + "." + layers_[k]->kind(), visit);
    }

    void set_frozen(bool frozen) {
        for (auto& l : layers_) l->set_frozen(frozen);
    }

    std::size_t size() const { return layers_.size(); }
    Layer& operator[](std::size_t k) { return *layers_[k]; }

private:
    std::vector<std::unique_ptr<Layer>> layers_;
};

} // namespace holo::nn
