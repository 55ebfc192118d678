#pragma once

// Inverting the noisy square y = x^2 + xi with small conditional generative
// models, with and without a loss passed through a learned forward net.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "holobench/models/losses.hpp"
#include "holobench/nn/layers.hpp"
#include "holobench/nn/optim.hpp"

namespace holo::toy {

using nn::Matrix;
using nn::Mode;

enum class ToyKind { cvae, cgan, cvae_forward, cgan_forward };

inline std::string to_string(ToyKind k) {
    switch (k) {
    case ToyKind::cvae: return "cvae";
    case ToyKind::cgan: return "cgan";
    case ToyKind::cvae_forward: return "cvae-forward";
    case ToyKind::cgan_forward: return "cgan-forward";
    }
    return "?";
}

inline ToyKind toy_kind_from_string(const std::string& s) {
    if (s == "cvae") return ToyKind::cvae;
    if (s == "cgan") return ToyKind::cgan;
    if (s == "cvae-forward" || s == "cvae_forward") return ToyKind::cvae_forward;
    if (s == "cgan-forward" || s == "cgan_forward") return ToyKind::cgan_forward;
    throw ConfigError("unknown toy model '" + s + "'");
}

inline bool is_gan(ToyKind k) { return k == ToyKind::cgan || k == ToyKind::cgan_forward; }
inline bool has_forward(ToyKind k) { return k == ToyKind::cvae_forward || k == ToyKind::cgan_forward; }

struct ToyConfig {
    double sigma = 0.05;
    int n_train = 4000;
    int n_test = 1000;
    int latent_dim = 1;
    double alpha = 1.0;
    double beta = 1.0;
    std::uint64_t seed = 42;
    bool symmetric_domain = false; // x in [-1, 1] instead of [0, 1]
    int epochs = 60;
    int forward_epochs = 60;
    int batch_size = 100;
    double learning_rate = 1e-3;
    double final_lr_fraction = 0.01; // geometric decay over each training phase
    int hidden = 64;
    int disc_updates_per_gen = 1;

    void validate() const {
        if (!(sigma >= 0.0)) throw ConfigError("toy sigma must be non-negative");
        if (n_train < 2 || n_test < 1) throw ConfigError("toy sample counts must be positive");
        if (latent_dim < 1) throw ConfigError("toy latent_dim must be positive");
        if (batch_size < 2) throw ConfigError("toy batch_size must be at least 2");
        if (epochs < 0 || forward_epochs < 0) throw ConfigError("toy epoch counts must be non-negative");
        if (!(learning_rate > 0.0)) throw ConfigError("toy learning rate must be positive");
        if (!(final_lr_fraction > 0.0 && final_lr_fraction <= 1.0))
            throw ConfigError("toy final_lr_fraction must lie in (0, 1]");
        if (hidden < 1 || disc_updates_per_gen < 1) throw ConfigError("toy sizes must be positive");
    }
};

struct ToyData {
    std::vector<double> x;
    std::vector<double> y;

    std::size_t size() const { return x.size(); }
};

inline constexpr std::uint64_t kTrainStream = 1;
inline constexpr std::uint64_t kTestStream = 2;

// x ~ U[0, 1] (or U[-1, 1]), y = x^2 + N(0, sigma^2).
inline ToyData make_toy_dataset(const ToyConfig& cfg, std::size_t n, std::uint64_t stream) {
    cfg.validate();
    Rng rng(substream(cfg.seed, stream, 0x70e1));
    ToyData d;
    for (std::size_t k = 0; k < n; ++k) {
        const double x = cfg.symmetric_domain ? uniform(rng, -1.0, 1.0) : uniform01(rng);
        d.x.push_back(x);
        d.y.push_back(x * x + cfg.sigma * standard_normal(rng));
    }
    return d;
}

inline nn::Sequential mlp(int in, int out, int hidden, Rng& rng, bool spectral, const std::string& name) {
    nn::Sequential s;
    int width = in;
    for (int k = 0; k < 3; ++k) {
        s.add<nn::Dense>(width, hidden, rng, spectral, name + ".fc" + std::to_string(k));
        s.add<nn::LeakyRelu>(0.2);
        width = hidden;
    }
    s.add<nn::Dense>(width, out, rng, spectral, name + ".out");
    return s;
}

inline Matrix column(const std::vector<double>& v, std::span<const std::size_t> idx) {
    Matrix m(static_cast<Eigen::Index>(idx.size()), 1);
    for (std::size_t k = 0; k < idx.size(); ++k) m(static_cast<Eigen::Index>(k), 0) = v[idx[k]];
    return m;
}

inline Matrix hcat(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows(), a.cols() + b.cols());
    out << a, b;
    return out;
}

// Three hidden layers of the configured width for every network. The
// discriminator is spectrally normalized; the forward net is not, since the
// square has slope up to 2.
class ToyModel {
public:
    ToyModel(ToyKind kind, ToyConfig cfg)
        : kind_(kind), cfg_((cfg.validate(), cfg)), rng_(substream(cfg.seed, static_cast<std::uint64_t>(kind), 0x70e2)),
          decoder_(mlp(1 + cfg.latent_dim, 1, cfg.hidden, rng_, false, "toy.dec")) {
        std::vector<nn::Param*> gen;
        decoder_.collect_params(gen);
        if (is_gan(kind_)) {
            disc_.emplace(mlp(2, 1, cfg.hidden, rng_, true, "toy.disc"));
            std::vector<nn::Param*> p;
            disc_->collect_params(p);
            disc_opt_.emplace(p, adam());
        } else {
            encoder_.emplace(mlp(1, 2 * cfg.latent_dim, cfg.hidden, rng_, false, "toy.enc"));
            encoder_->collect_params(gen);
        }
        gen_opt_.emplace(gen, adam());
        if (has_forward(kind_)) {
            forward_.emplace(mlp(1, 1, cfg.hidden, rng_, false, "toy.fwd"));
            std::vector<nn::Param*> p;
            forward_->collect_params(p);
            fwd_opt_.emplace(p, adam());
        }
    }

    ToyModel(const ToyModel&) = delete;
    ToyModel& operator=(const ToyModel&) = delete;

    ToyKind kind() const { return kind_; }
    const ToyConfig& config() const { return cfg_; }

    Matrix sample_latent(Eigen::Index n, Rng& rng) const {
        Matrix z(n, cfg_.latent_dim);
        for (Eigen::Index k = 0; k < z.size(); ++k)
            z.data()[k] = is_gan(kind_) ? uniform01(rng) : standard_normal(rng);
        return z;
    }

    // x-hat(z, y) for column y and latent rows z.
    Matrix generate(const Matrix& y, const Matrix& z) { return decoder_.forward(hcat(y, z), Mode::eval); }

    Matrix forward_net(const Matrix& x) {
        if (!forward_) throw InvalidArgument("toy model has no forward net");
        return forward_->forward(x, Mode::eval);
    }

    // Mean squared error of U on held-out pairs.
    double forward_mse(const ToyData& d) {
        std::vector<std::size_t> idx(d.size());
        std::iota(idx.begin(), idx.end(), 0);
        const Matrix pred = forward_net(column(d.x, idx));
        double s = 0.0;
        for (std::size_t k = 0; k < idx.size(); ++k) {
            const double x = d.x[k];
            s += std::pow(pred(static_cast<Eigen::Index>(k), 0) - x * x, 2);
        }
        return s / static_cast<double>(idx.size());
    }

    void train(const ToyData& data) {
        std::vector<std::size_t> order(data.size());
        std::iota(order.begin(), order.end(), 0);
        if (forward_) {
            for (int e = 0; e < cfg_.forward_epochs; ++e) {
                fwd_opt_->set_learning_rate(decayed_lr(e, cfg_.forward_epochs));
                for_each_batch(order, e, 0x70f0, [&](std::span<const std::size_t> b) {
                    forward_step(column(data.x, b), column(data.y, b));
                });
            }
        }
        for (int e = 0; e < cfg_.epochs; ++e) {
            const double lr = decayed_lr(e, cfg_.epochs);
            for (auto* opt : {&gen_opt_, &disc_opt_, &fwd_opt_})
                if (*opt) (*opt)->set_learning_rate(lr);
            for_each_batch(order, e, 0x70f1, [&](std::span<const std::size_t> b) {
                const Matrix x = column(data.x, b), y = column(data.y, b);
                if (is_gan(kind_)) {
                    gan_step(x, y);
                } else {
                    vae_step(x, y);
                }
                if (forward_) forward_step(x, y);
            });
        }
    }

private:
    nn::OptimizerConfig adam() const {
        nn::OptimizerConfig c;
        c.kind = nn::OptimizerKind::adam;
        c.learning_rate = cfg_.learning_rate;
        return c;
    }

    double decayed_lr(int epoch, int epochs) const {
        if (epochs <= 1) return cfg_.learning_rate;
        return cfg_.learning_rate * std::pow(cfg_.final_lr_fraction, static_cast<double>(epoch) / (epochs - 1));
    }

    template <typename Fn>
    void for_each_batch(std::vector<std::size_t>& order, int epoch, std::uint64_t tag, Fn&& fn) {
        Rng shuffle(substream(cfg_.seed, static_cast<std::uint64_t>(epoch), tag));
        std::shuffle(order.begin(), order.end(), shuffle);
        const auto bs = static_cast<std::size_t>(cfg_.batch_size);
        for (std::size_t s = 0; s + 2 <= order.size(); s += bs)
            fn(std::span<const std::size_t>(order.data() + s, std::min(bs, order.size() - s)));
    }

    void forward_step(const Matrix& x, const Matrix& y) {
        fwd_opt_->zero_grad();
        const Matrix pred = forward_->forward(x, Mode::train);
        forward_->backward(models::squared_error_grad(y, pred));
        fwd_opt_->step();
    }

    // Gradient of alpha * mean (y - U(x_hat))^2 w.r.t. x_hat with U frozen.
    Matrix forward_term_grad(const Matrix& xhat, const Matrix& y) {
        const Matrix pred = forward_->forward(xhat, Mode::eval);
        const Matrix d = forward_->backward(cfg_.alpha * models::squared_error_grad(y, pred));
        return d;
    }

    void vae_step(const Matrix& x, const Matrix& y) {
        const int l = cfg_.latent_dim;
        gen_opt_->zero_grad();
        const Matrix h = encoder_->forward(x, Mode::train);
        const Matrix mu = h.leftCols(l), lv = h.rightCols(l);
        Matrix eps(x.rows(), l);
        for (Eigen::Index k = 0; k < eps.size(); ++k) eps.data()[k] = standard_normal(rng_);
        const Matrix sigma = (0.5 * lv.array()).exp().matrix();
        const Matrix z = mu + sigma.cwiseProduct(eps);
        const Matrix xhat = decoder_.forward(hcat(y, z), Mode::train);
        Matrix d = cfg_.beta * models::squared_error_grad(x, xhat);
        if (forward_ && cfg_.alpha != 0.0) d += forward_term_grad(xhat, y);
        const Matrix dz = decoder_.backward(d).rightCols(l);
        const auto kg = models::kl_divergence_grad(mu, lv);
        encoder_->backward(hcat(dz + kg.d_mu, kg.d_log_var + 0.5 * dz.cwiseProduct(sigma).cwiseProduct(eps)));
        gen_opt_->step();
    }

    void gan_step(const Matrix& x, const Matrix& y) {
        const Matrix z = sample_latent(x.rows(), rng_);
        const Matrix xhat = decoder_.forward(hcat(y, z), Mode::train);
        Matrix pairs(2 * x.rows(), 2);
        pairs << hcat(x, y), hcat(xhat, y);
        for (int k = 0; k < cfg_.disc_updates_per_gen; ++k) {
            disc_opt_->zero_grad();
            const Matrix logits = disc_->forward(pairs, Mode::train);
            Matrix g(logits.rows(), 1);
            g << models::bce_with_logits_grad(logits.topRows(x.rows()), true),
                models::bce_with_logits_grad(logits.bottomRows(x.rows()), false);
            disc_->backward(g);
            disc_opt_->step();
        }
        gen_opt_->zero_grad();
        const Matrix logits = disc_->forward(hcat(xhat, y), Mode::eval);
        Matrix d = disc_->backward(models::bce_with_logits_grad(logits, true)).leftCols(1);
        d += cfg_.beta * models::squared_error_grad(x, xhat);
        if (forward_ && cfg_.alpha != 0.0) d += forward_term_grad(xhat, y);
        decoder_.backward(d);
        gen_opt_->step();
    }

    ToyKind kind_;
    ToyConfig cfg_;
    Rng rng_;
    nn::Sequential decoder_;
    std::optional<nn::Sequential> encoder_;
    std::optional<nn::Sequential> disc_;
    std::optional<nn::Sequential> forward_;
    std::optional<nn::Optimizer> gen_opt_;
    std::optional<nn::Optimizer> disc_opt_;
    std::optional<nn::Optimizer> fwd_opt_;
};

struct ToyPoint {
    double y = 0.0;
    double z = 0.0; // first latent coordinate
    double xhat = 0.0;
    double e_y = 0.0;
};

// Mean over test targets of (y - xhat(z, y)^2)^2 with one latent draw each.
inline double evaluate_toy(ToyModel& model, const ToyData& test, Rng& rng, std::vector<ToyPoint>* scatter = nullptr) {
    std::vector<std::size_t> idx(test.size());
    std::iota(idx.begin(), idx.end(), 0);
    const Matrix y = column(test.y, idx);
    const Matrix z = model.sample_latent(y.rows(), rng);
    const Matrix xhat = model.generate(y, z);
    double sum = 0.0;
    for (Eigen::Index k = 0; k < y.rows(); ++k) {
        const double e = std::pow(y(k, 0) - xhat(k, 0) * xhat(k, 0), 2);
        sum += e;
        if (scatter) scatter->push_back({y(k, 0), z(k, 0), xhat(k, 0), e});
    }
    return sum / static_cast<double>(y.rows());
}

// One seed of the study: fresh train/test sets, training, one draw per target.
inline double run_toy(ToyKind kind, const ToyConfig& cfg, std::vector<ToyPoint>* scatter = nullptr) {
    const ToyData train_set = make_toy_dataset(cfg, static_cast<std::size_t>(cfg.n_train), kTrainStream);
    const ToyData test_set = make_toy_dataset(cfg, static_cast<std::size_t>(cfg.n_test), kTestStream);
    ToyModel m(kind, cfg);
    m.train(train_set);
    Rng rng(substream(cfg.seed, 0, 0x70e3));
    return evaluate_toy(m, test_set, rng, scatter);
}

} // namespace holo::toy
