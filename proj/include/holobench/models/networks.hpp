#pragma once

#include <array>
#include <optional>
#include <string>

#include "holobench/nn/conv.hpp"
#include "holobench/nn/layers.hpp"
#include "holobench/optics.hpp"

namespace holo::models {

using nn::Matrix;
using nn::Mode;

inline constexpr int kLatentDim = 16;
inline constexpr int kFeatures = 2 * kGridCells;
inline constexpr int kImageSide = 100;
inline constexpr int kImagePixels = kImageSide * kImageSide;
inline constexpr double kLeakySlope = 0.2;

// 100x100 -> 50x50 -> 25x25 -> 8x8, eight channels throughout.
inline std::array<nn::ConvGeometry, 3> conv_stack_geometry() {
    return {{
        {{1, 100, 100}, 8, 5, 2, 2},
        {{8, 50, 50}, 8, 3, 2, 1},
        {{8, 25, 25}, 8, 3, 3, 0},
    }};
}

inline constexpr int kConvFeatures = 8 * 8 * 8;

inline Matrix hconcat(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows(), a.cols() + b.cols());
    out << a, b;
    return out;
}

inline nn::Sequential conv_stack(Rng& rng, bool batch_norm, bool spectral, const std::string& name) {
    nn::Sequential s;
    const auto geoms = conv_stack_geometry();
    for (std::size_t k = 0; k < geoms.size(); ++k) {
        auto& conv = s.add<nn::Conv2d>(geoms[k], rng, spectral, name + ".conv" + std::to_string(k));
        if (k == 0) conv.set_input_grad(false);
        if (batch_norm) s.add<nn::BatchNorm>(geoms[k].out(), name + ".bn" + std::to_string(k));
        s.add<nn::LeakyRelu>(kLeakySlope);
    }
    return s;
}

// Scales each row to unit l2 norm. The hologram ignores positive gain, so
// this loses nothing the intensity depends on.
class L2Normalize final : public nn::Layer {
public:
    Matrix forward(const Matrix& x, Mode) override {
        norm_ = x.rowwise().norm().cwiseMax(1e-12);
        y_ = x.array().colwise() / norm_.array();
        return y_;
    }

    Matrix backward(const Matrix& g) override {
        const Eigen::VectorXd inner = (g.array() * y_.array()).rowwise().sum();
        return ((g - (y_.array().colwise() * inner.array()).matrix()).array().colwise() / norm_.array()).matrix();
    }

    std::string kind() const override { return "l2_normalize"; }

private:
    Eigen::VectorXd norm_;
    Matrix y_;
};

// y = g * x with a single learnable g.
class ScalarGain final : public nn::Layer {
public:
    ScalarGain(double init, const std::string& name) : gain_(name + ".gain", Matrix::Constant(1, 1, init)) {}

    Matrix forward(const Matrix& x, Mode) override {
        x_ = x;
        return gain_.value(0, 0) * x;
    }

    Matrix backward(const Matrix& g) override {
        gain_.grad(0, 0) += (g.array() * x_.array()).sum();
        return gain_.value(0, 0) * g;
    }

    std::string kind() const override { return "scalar_gain"; }
    void collect_params(std::vector<nn::Param*>& out) override { out.push_back(&gain_); }
    void visit_state(const std::string& prefix, const nn::StateVisitor& visit) override {
        visit(prefix + ".gain", gain_.value);
    }

private:
    nn::Param gain_;
    Matrix x_;
};

// Generator / decoder: conv stack on I, concatenated with z, then dense layers
// with batch norm and one dropout layer, ending in 128 Cartesian outputs.
class Generator {
public:
    Generator(Rng& rng, double dropout_rate, std::uint64_t dropout_seed)
        : conv_(conv_stack(rng, true, false, "gen")) {
        head_.add<nn::Dense>(kConvFeatures + kLatentDim, 512, rng, false, "gen.fc0");
        head_.add<nn::BatchNorm>(nn::Shape3{512, 1, 1}, "gen.bn_fc0");
        head_.add<nn::LeakyRelu>(kLeakySlope);
        head_.add<nn::Dropout>(dropout_rate, dropout_seed);
        head_.add<nn::Dense>(512, 256, rng, false, "gen.fc1");
        head_.add<nn::BatchNorm>(nn::Shape3{256, 1, 1}, "gen.bn_fc1");
        head_.add<nn::LeakyRelu>(kLeakySlope);
        head_.add<nn::Dense>(256, kFeatures, rng, false, "gen.out");
    }

    Matrix forward(const Matrix& intensity, const Matrix& z, Mode mode) {
        nn::require_cols(z, kLatentDim, "generator latent");
        return head_.forward(hconcat(conv_.forward(intensity, mode), z), mode);
    }

    // Accumulates parameter gradients and returns d/dz.
    Matrix backward(const Matrix& g) {
        const Matrix d = head_.backward(g);
        conv_.backward(d.leftCols(kConvFeatures));
        return d.rightCols(kLatentDim);
    }

    void collect_params(std::vector<nn::Param*>& out) {
        conv_.collect_params(out);
        head_.collect_params(out);
    }
    void visit_state(const std::string& prefix, const nn::StateVisitor& visit) {
        conv_.visit_state(prefix + ".conv", visit);
        head_.visit_state(prefix + ".head", visit);
    }
    void set_frozen(bool frozen) {
        conv_.set_frozen(frozen);
        head_.set_frozen(frozen);
    }

private:
    nn::Sequential conv_;
    nn::Sequential head_;
};

struct EncoderOutput {
    Matrix mu;
    Matrix log_var;
};

// q(z | f): dense 128 -> 128 -> 128 -> (mu, log var). With `sees_intensity`
// a batch-normalized conv stack on I is concatenated with f first.
class Encoder {
public:
    Encoder(Rng& rng, bool sees_intensity = false) {
        if (sees_intensity) conv_.emplace(conv_stack(rng, true, false, "enc"));
        const int in = kFeatures + (sees_intensity ? kConvFeatures : 0);
        net_.add<nn::Dense>(in, 128, rng, false, "enc.fc0");
        net_.add<nn::LeakyRelu>(kLeakySlope);
        net_.add<nn::Dense>(128, 128, rng, false, "enc.fc1");
        net_.add<nn::LeakyRelu>(kLeakySlope);
        net_.add<nn::Dense>(128, 2 * kLatentDim, rng, false, "enc.out");
    }

    bool sees_intensity() const { return conv_.has_value(); }

    EncoderOutput forward(const Matrix& f, const Matrix& intensity, Mode mode) {
        const Matrix h = net_.forward(conv_ ? hconcat(f, conv_->forward(intensity, mode)) : f, mode);
        return {h.leftCols(kLatentDim), h.rightCols(kLatentDim)};
    }

    // Accumulates parameter gradients and returns d/df.
    Matrix backward(const Matrix& d_mu, const Matrix& d_log_var) {
        const Matrix d = net_.backward(hconcat(d_mu, d_log_var));
        if (!conv_) return d;
        conv_->backward(d.rightCols(kConvFeatures));
        return d.leftCols(kFeatures);
    }

    void collect_params(std::vector<nn::Param*>& out) {
        if (conv_) conv_->collect_params(out);
        net_.collect_params(out);
    }
    void visit_state(const std::string& prefix, const nn::StateVisitor& visit) {
        if (conv_) conv_->visit_state(prefix + ".conv", visit);
        net_.visit_state(prefix, visit);
    }
    void set_frozen(bool frozen) {
        if (conv_) conv_->set_frozen(frozen);
        net_.set_frozen(frozen);
    }

private:
    std::optional<nn::Sequential> conv_;
    nn::Sequential net_;
};

// D(f, I): spectrally normalized conv stack on I and dense embedding of f,
// joined by a dense head to one logit. The f batch may hold several stacked
// blocks that all share the same intensity batch.
class Discriminator {
public:
    explicit Discriminator(Rng& rng) : conv_(conv_stack(rng, false, true, "disc")) {
        embed_.add<nn::Dense>(kFeatures, 128, rng, true, "disc.embed");
        embed_.add<nn::LeakyRelu>(kLeakySlope);
        head_.add<nn::Dense>(kConvFeatures + 128, 256, rng, true, "disc.fc0");
        head_.add<nn::LeakyRelu>(kLeakySlope);
        head_.add<nn::Dense>(256, 1, rng, true, "disc.out");
    }

    Matrix forward(const Matrix& f, const Matrix& intensity, Mode mode) {
        const Eigen::Index n = intensity.rows();
        if (n == 0 || f.rows() % n != 0) throw InvalidArgument("discriminator: f rows must be a multiple of I rows");
        copies_ = f.rows() / n;
        const Matrix feat = conv_.forward(intensity, mode);
        Matrix tiled(f.rows(), kConvFeatures);
        for (Eigen::Index c = 0; c < copies_; ++c) tiled.middleRows(c * n, n) = feat;
        return head_.forward(hconcat(tiled, embed_.forward(f, mode)), mode);
    }

    // Accumulates parameter gradients and returns d/df.
    Matrix backward(const Matrix& g) {
        const Matrix d = head_.backward(g);
        const Eigen::Index n = d.rows() / copies_;
        Matrix dfeat = Matrix::Zero(n, kConvFeatures);
        for (Eigen::Index c = 0; c < copies_; ++c) dfeat += d.block(c * n, 0, n, kConvFeatures);
        conv_.backward(dfeat);
        return embed_.backward(d.rightCols(128));
    }

    void collect_params(std::vector<nn::Param*>& out) {
        conv_.collect_params(out);
        embed_.collect_params(out);
        head_.collect_params(out);
    }
    void visit_state(const std::string& prefix, const nn::StateVisitor& visit) {
        conv_.visit_state(prefix + ".conv", visit);
        embed_.visit_state(prefix + ".embed", visit);
        head_.visit_state(prefix + ".head", visit);
    }
    void set_frozen(bool frozen) {
        conv_.set_frozen(frozen);
        embed_.set_frozen(frozen);
        head_.set_frozen(frozen);
    }

    // Every spectrally normalized layer, for inspection.
    template <typename Fn>
    void for_each_weighted(Fn&& fn) {
        for (nn::Sequential* s : {&conv_, &embed_, &head_})
            for (std::size_t k = 0; k < s->size(); ++k)
                if (auto* w = dynamic_cast<nn::WeightedLayer*>(&(*s)[k])) fn(*w);
    }

private:
    nn::Sequential conv_;
    nn::Sequential embed_;
    nn::Sequential head_;
    Eigen::Index copies_ = 1;
};

// Stride-10 transposed convolution from an 8x8 lattice to the 100x100 camera
// crop, so every lattice cell owns one spot position.
inline nn::ConvGeometry spot_lattice_geometry() { return {{1, 100, 100}, 8, 30, 10, 0}; }

// U(f) -> I: l2 normalization, dense 128 -> 512 -> 512 (= 8x8x8), then one
// transposed convolution on the spot lattice. Spectrally normalized
// throughout, followed by one learnable output gain.
class ForwardNet {
public:
    explicit ForwardNet(Rng& rng, double gain = 4.0) {
        net_.add<L2Normalize>();
        net_.add<nn::Dense>(kFeatures, 512, rng, true, "fwd.fc0");
        net_.add<nn::LeakyRelu>(kLeakySlope);
        net_.add<nn::Dense>(512, kConvFeatures, rng, true, "fwd.fc1");
        net_.add<nn::LeakyRelu>(kLeakySlope);
        net_.add<nn::ConvTranspose2d>(spot_lattice_geometry(), rng, true, "fwd.tconv");
        net_.add<ScalarGain>(gain, "fwd");
    }

    Matrix forward(const Matrix& f, Mode mode) { return net_.forward(f, mode); }
    Matrix backward(const Matrix& g) { return net_.backward(g); }

    void collect_params(std::vector<nn::Param*>& out) { net_.collect_params(out); }
    void visit_state(const std::string& prefix, const nn::StateVisitor& visit) { net_.visit_state(prefix, visit); }
    void set_frozen(bool frozen) { net_.set_frozen(frozen); }

private:
    nn::Sequential net_;
};

} // namespace holo::models
