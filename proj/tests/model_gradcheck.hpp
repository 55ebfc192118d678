#pragma once

// Finite-difference checks for whole model objectives. Networks are too large
// for a full sweep, so a few random coordinates of every tensor are probed.

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "gradcheck.hpp"
#include "holobench/models/model.hpp"
#include "test_support.hpp"

namespace holo::oracle {

struct SubsetCheck {
    double error = 0.0; // worst per-tensor relative error
    std::size_t coords = 0;
};

// Central difference that does not straddle an activation kink. Two
// differences taken within one smooth piece agree to roundoff, so the step is
// quartered until consecutive estimates match. A bias in front of a wide
// layer moves tens of thousands of pre-activations at once, which can push
// the step down to ~1e-9.
struct Difference {
    double value;
    double step;
};

inline Difference kink_free_difference(double* x, const std::function<double()>& objective, double h, double loss) {
    const auto central = [&](double step) {
        const double saved = *x;
        *x = saved + step;
        const double lp = objective();
        *x = saved - step;
        const double lm = objective();
        *x = saved;
        return (lp - lm) / (2 * step);
    };
    const double roundoff = 16.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(loss));
    double prev = central(h);
    for (int k = 0; k < 8; ++k) {
        h /= 4;
        const double next = central(h);
        if (std::abs(next - prev) <= 1e-7 * std::abs(prev) + roundoff / h) return {prev, 4 * h};
        prev = next;
    }
    return {prev, h};
}

// `objective` must evaluate the loss and accumulate parameter gradients. A
// tensor whose analytic and numeric gradients both lie below the
// central-difference roundoff level (about eps |L| / step) counts as agreeing.
inline SubsetCheck check_param_subset(const std::vector<nn::Param*>& params, const std::function<double()>& objective,
                                      Rng& rng, int per_tensor = 4, double h = 1e-5) {
    for (auto* p : params) p->zero_grad();
    const double loss = objective();
    std::vector<Matrix> analytic;
    for (auto* p : params) analytic.push_back(p->grad);
    const double roundoff = 100.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(loss));

    SubsetCheck out;
    for (std::size_t t = 0; t < params.size(); ++t) {
        Matrix& v = params[t]->value;
        double diff = 0.0, na = 0.0, nn_ = 0.0, noise = 0.0;
        for (int q = 0; q < per_tensor; ++q) {
            const auto k = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(v.size()));
            const double a = analytic[t].data()[k];
            const auto [n, step] = kink_free_difference(v.data() + k, objective, h, loss);
            diff += (a - n) * (a - n);
            na += a * a;
            nn_ += n * n;
            noise += (roundoff / step) * (roundoff / step);
        }
        out.coords += static_cast<std::size_t>(per_tensor);
        const double scale = std::max(std::sqrt(na), std::sqrt(nn_));
        if (scale <= std::sqrt(noise)) continue;
        out.error = std::max(out.error, std::sqrt(diff) / scale);
    }
    return out;
}

// Dense random inputs for gradient checks: f ~ N(0, 1), I ~ U[0, 0.01).
// Rendered images are mostly dark, which crowds the first layer's
// pre-activations around the leaky-ReLU kink. The small intensity scale keeps
// the losses near their rendered-data magnitude, so roundoff stays low.
inline models::Batch random_batch(Rng& rng, int n = 4) {
    models::Batch b{random_matrix(n, models::kFeatures, rng), Matrix(n, models::kImagePixels)};
    for (Eigen::Index k = 0; k < b.intensity.size(); ++k) b.intensity.data()[k] = 0.01 * uniform01(rng);
    return b;
}

// Four rendered (f, I) pairs, as a training batch.
inline models::Batch rendered_batch(Rng& rng, int n = 4) {
    models::Batch b{Matrix(n, models::kFeatures), Matrix(n, models::kImagePixels)};
    const BenchConfig bench;
    for (int r = 0; r < n; ++r) {
        const FMatrix f = fixtures::random_fmatrix(rng, 1 + r % 4);
        const auto cart = f.to_cartesian();
        for (int k = 0; k < models::kFeatures; ++k) b.f(r, k) = cart[static_cast<std::size_t>(k)];
        b.intensity.row(r) = models::intensity_row(render(f, bench));
    }
    return b;
}

template <typename Net>
std::vector<nn::Param*> params_of(Net& net) {
    std::vector<nn::Param*> p;
    net.collect_params(p);
    return p;
}

// Freezes dropout masks, batch-norm running statistics and power iterations so
// that repeated evaluations see one fixed function.
inline void freeze_all(models::GenerativeModel& m, bool frozen = true) {
    m.generator().set_frozen(frozen);
    if (auto* e = m.encoder()) e->set_frozen(frozen);
    if (auto* d = m.discriminator()) d->set_frozen(frozen);
    if (auto* u = m.forward_net()) u->set_frozen(frozen);
}

// At Xavier init every bias is zero and dark camera pixels are ~1e-7, so
// many pre-activations sit within a finite-difference step of the leaky ReLU
// kink. Moving the vector-shaped parameters off zero removes that artefact.
template <typename Net>
void jitter_vectors(Net& net, Rng& rng, double scale = 0.1) {
    for (auto* p : params_of(net))
        if (p->value.rows() == 1)
            for (Eigen::Index k = 0; k < p->value.size(); ++k) p->value.data()[k] += scale * standard_normal(rng);
}

inline void jitter_all(models::GenerativeModel& m, Rng& rng) {
    jitter_vectors(m.generator(), rng);
    if (auto* e = m.encoder()) jitter_vectors(*e, rng);
    if (auto* d = m.discriminator()) jitter_vectors(*d, rng);
    if (auto* u = m.forward_net()) jitter_vectors(*u, rng);
}

struct ObjectiveChecks {
    double cvae = 0.0;
    double cvae_forward = 0.0;
    double forward_term_theta = 0.0;
    double generator = 0.0;
    double discriminator = 0.0;
    double forward_net = 0.0;
};

// Every model objective on a 4-sample batch.
inline ObjectiveChecks check_all_objectives(std::uint64_t seed, int per_tensor = 4, double h = 1e-4) {
    using models::GenerativeModel;
    using models::ModelKind;
    using models::TrainConfig;
    Rng rng(seed);
    const models::Batch b = random_batch(rng);
    const Matrix eps = random_matrix(b.f.rows(), models::kLatentDim, rng);
    ObjectiveChecks out;

    {
        GenerativeModel m(ModelKind::cvae, TrainConfig::defaults(ModelKind::cvae));
        freeze_all(m);
        jitter_all(m, rng);
        auto params = params_of(m.generator());
        m.encoder()->collect_params(params);
        out.cvae = check_param_subset(params, [&] { return m.cvae_objective(b, eps).total; }, rng, per_tensor, h).error;
    }
    {
        GenerativeModel m(ModelKind::cvae_forward, TrainConfig::defaults(ModelKind::cvae_forward));
        freeze_all(m);
        jitter_all(m, rng);
        auto params = params_of(m.generator());
        m.encoder()->collect_params(params);
        out.cvae_forward =
            check_param_subset(params, [&] { return m.cvae_objective(b, eps).total; }, rng, per_tensor, h).error;
    }
    {
        TrainConfig c = TrainConfig::defaults(ModelKind::cvae_forward);
        c.beta = 0.0;
        GenerativeModel m(ModelKind::cvae_forward, c);
        freeze_all(m);
        jitter_all(m, rng);
        // With beta = 0 the decoder sees only the forward term.
        out.forward_term_theta = check_param_subset(params_of(m.generator()),
                                                    [&] { return m.cvae_objective(b, eps).total; }, rng, per_tensor, h)
                                     .error;
        out.forward_net =
            check_param_subset(params_of(*m.forward_net()), [&] { return m.forward_objective(b); }, rng, per_tensor, h)
                .error;
    }
    {
        GenerativeModel m(ModelKind::cgan, TrainConfig::defaults(ModelKind::cgan));
        freeze_all(m);
        jitter_all(m, rng);
        Matrix z(b.f.rows(), models::kLatentDim);
        for (Eigen::Index k = 0; k < z.size(); ++k) z.data()[k] = uniform01(rng);
        out.generator = check_param_subset(params_of(m.generator()),
                                           [&] { return m.generator_objective(b, z).total; }, rng, per_tensor, h)
                            .error;
        const Matrix fake = m.generator().forward(b.intensity, z, nn::Mode::eval);
        out.discriminator = check_param_subset(params_of(*m.discriminator()),
                                               [&] { return m.discriminator_objective(b, fake); }, rng, per_tensor, h)
                                .error;
    }
    return out;
}

} // namespace holo::oracle
