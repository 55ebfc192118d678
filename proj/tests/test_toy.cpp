#include <gtest/gtest.h>

#include <cmath>
#include <memory>

#include "holobench/toy.hpp"

using namespace holo;
using namespace holo::toy;

namespace {

double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

// Trained once and shared by the checks on a plain cVAE.
ToyModel& trained_cvae() {
    static const auto m = [] {
        ToyConfig c;
        auto model = std::make_unique<ToyModel>(ToyKind::cvae, c);
        model->train(make_toy_dataset(c, static_cast<std::size_t>(c.n_train), kTrainStream));
        return model;
    }();
    return *m;
}

} // namespace

TEST(ToyData, NoiselessPairsLieOnTheParabola) {
    ToyConfig c;
    c.sigma = 0.0;
    const auto d = make_toy_dataset(c, 1000, kTrainStream);
    for (std::size_t k = 0; k < d.size(); ++k) {
        EXPECT_EQ(d.y[k], d.x[k] * d.x[k]);
        EXPECT_GE(d.x[k], 0.0);
        EXPECT_LE(d.x[k], 1.0);
    }
}

TEST(ToyData, NoiseLevel) {
    ToyConfig c;
    c.sigma = 0.05;
    const auto d = make_toy_dataset(c, 10000, kTrainStream);
    std::vector<double> r;
    for (std::size_t k = 0; k < d.size(); ++k) r.push_back(d.y[k] - d.x[k] * d.x[k]);
    const double m = mean(r);
    double ss = 0.0;
    for (double v : r) ss += (v - m) * (v - m);
    EXPECT_NEAR(std::sqrt(ss / static_cast<double>(r.size() - 1)), 0.05, 0.005);
}

TEST(ToyData, MeanOfY) {
    ToyConfig c;
    c.sigma = 0.05;
    const std::size_t n = 10000;
    const auto d = make_toy_dataset(c, n, kTrainStream);
    // Var(x^2) = 1/5 - 1/9 for x ~ U[0, 1].
    const double sd = std::sqrt(4.0 / 45.0 + c.sigma * c.sigma);
    EXPECT_NEAR(mean(d.y), 1.0 / 3.0, 3.0 * sd / std::sqrt(static_cast<double>(n)));
}

TEST(ToyData, SymmetricDomainAndStreams) {
    ToyConfig c;
    c.symmetric_domain = true;
    const auto d = make_toy_dataset(c, 2000, kTrainStream);
    int negative = 0;
    for (double x : d.x) {
        EXPECT_GE(x, -1.0);
        EXPECT_LE(x, 1.0);
        negative += x < 0.0;
    }
    EXPECT_GT(negative, 800);
    EXPECT_NE(make_toy_dataset(c, 10, kTrainStream).x, make_toy_dataset(c, 10, kTestStream).x);
    EXPECT_EQ(make_toy_dataset(c, 10, kTestStream).x, make_toy_dataset(c, 10, kTestStream).x);
}

TEST(ToyConfig, Validation) {
    ToyConfig c;
    c.sigma = -1.0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.n_train = 1;
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.learning_rate = 0.0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.final_lr_fraction = 0.0;
    EXPECT_THROW(c.validate(), ConfigError);
    EXPECT_EQ(toy_kind_from_string(to_string(ToyKind::cgan_forward)), ToyKind::cgan_forward);
    EXPECT_THROW(toy_kind_from_string("vae"), ConfigError);
}

TEST(ToyModel, BoundaryTargetGivesPosteriorMean) {
    // With x ~ U[0, 1] the posterior at y = 0 is proportional to
    // exp(-x^4 / (2 sigma^2)), whose mean is (2 sigma^2)^(1/4) G(1/2) / G(1/4).
    const double sigma = ToyConfig{}.sigma;
    const double posterior_mean = std::pow(2.0 * sigma * sigma, 0.25) * std::tgamma(0.5) / std::tgamma(0.25);
    ToyModel& m = trained_cvae();
    Matrix y = Matrix::Zero(5, 1);
    Rng rng(1);
    const Matrix xhat = m.generate(y, m.sample_latent(5, rng));
    for (Eigen::Index k = 0; k < xhat.rows(); ++k) EXPECT_NEAR(xhat(k, 0), posterior_mean, 0.04);
}

TEST(ToyModel, OneToOneBranchIgnoresLatentSign) {
    ToyModel& m = trained_cvae();
    Matrix y = Matrix::Constant(2, 1, 0.25);
    Matrix z(2, 1);
    z << -1.0, 1.0;
    const Matrix xhat = m.generate(y, z);
    EXPECT_NEAR(xhat(0, 0), 0.5, 0.1);
    EXPECT_NEAR(xhat(1, 0), 0.5, 0.1);
}

TEST(ToyModel, ForwardNetReachesNoiseFloor) {
    ToyConfig c;
    c.epochs = 0;
    ToyModel m(ToyKind::cvae_forward, c);
    m.train(make_toy_dataset(c, static_cast<std::size_t>(c.n_train), kTrainStream));
    EXPECT_LT(m.forward_mse(make_toy_dataset(c, 1000, kTestStream)), c.sigma * c.sigma + 0.01);
}

TEST(ToyModel, RunIsDeterministic) {
    ToyConfig c;
    c.n_train = 400;
    c.n_test = 100;
    c.epochs = 3;
    c.forward_epochs = 3;
    for (auto kind : {ToyKind::cvae, ToyKind::cgan, ToyKind::cvae_forward, ToyKind::cgan_forward}) {
        std::vector<ToyPoint> a, b;
        EXPECT_EQ(run_toy(kind, c, &a), run_toy(kind, c, &b)) << to_string(kind);
        ASSERT_EQ(a.size(), 100u);
        EXPECT_EQ(a.back().xhat, b.back().xhat);
    }
}

TEST(ToyModel, EvaluationMatchesDefinition) {
    ToyModel& m = trained_cvae();
    ToyConfig c;
    const auto test = make_toy_dataset(c, 50, kTestStream);
    Rng rng(5);
    std::vector<ToyPoint> pts;
    const double e = evaluate_toy(m, test, rng, &pts);
    double s = 0.0;
    for (std::size_t k = 0; k < pts.size(); ++k) {
        EXPECT_EQ(pts[k].y, test.y[k]);
        s += std::pow(test.y[k] - pts[k].xhat * pts[k].xhat, 2);
    }
    EXPECT_NEAR(e, s / 50.0, 1e-15);
}
