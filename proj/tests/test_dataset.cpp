#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "holobench/dataset.hpp"
#include "test_support.hpp"

using namespace holo;

namespace {

namespace fs = std::filesystem;

fs::path temp_file(const std::string& name) {
    return fs::temp_directory_path() / ("holobench_" + name);
}

std::vector<char> slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

// P(N = n) for N ~ Binomial(64, p), computed in log space.
double binomial_pmf(int n, int trials, double p) {
    const double logc = std::lgamma(trials + 1.0) - std::lgamma(n + 1.0) - std::lgamma(trials - n + 1.0);
    return std::exp(logc + n * std::log(p) + (trials - n) * std::log1p(-p));
}

} // namespace

TEST(SampleFMatrix, RejectsDegenerateThreshold) {
    SamplerConfig cfg;
    cfg.sparseness_threshold = 1.0;
    Rng rng(1);
    EXPECT_THROW(sample_fmatrix(cfg, rng), ConfigError);
    cfg.sparseness_threshold = 0.99; // 64 * 0.01 < 1
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg.sparseness_threshold = 0.95;
    cfg.n_patterns = 0;
    EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(SampleFMatrix, NonzeroCountMatchesConditionedBinomial) {
    SamplerConfig cfg;
    cfg.sparseness_threshold = 0.95;
    Rng rng(2024);
    constexpr int draws = 100'000;
    std::vector<int> hist(65, 0);
    double mean = 0.0;
    int over8 = 0;
    for (int t = 0; t < draws; ++t) {
        const FMatrix f = sample_fmatrix(cfg, rng);
        const int n = f.nonzero_count();
        ASSERT_GE(n, 1);
        for (int k = 0; k < kGridCells; ++k) {
            if (f.amp[k] == 0.0) {
                ASSERT_EQ(f.phase[k], 0.0);
            } else {
                ASSERT_LT(f.amp[k], 1.0);
                ASSERT_LT(f.phase[k], kTwoPi);
                ASSERT_EQ(static_cast<double>(static_cast<float>(f.amp[k])), f.amp[k]);
            }
        }
        ++hist[n];
        mean += n;
        if (n > 8) ++over8;
    }
    mean /= draws;

    // Resampling empty matrices conditions on N >= 1.
    const double p = 0.05;
    const double p0 = binomial_pmf(0, 64, p);
    const double conditioned_mean = 64 * p / (1.0 - p0);
    EXPECT_NEAR(mean, conditioned_mean, 0.1);
    EXPECT_NEAR(conditioned_mean, 3.3247, 1e-3);

    // Chi-square goodness of fit on n = 1..8 and a lumped tail; 1% critical
    // value for 8 degrees of freedom is 20.09.
    double chi2 = 0.0;
    double tail_expected = 1.0;
    int tail_observed = draws;
    for (int n = 1; n <= 8; ++n) {
        const double pn = binomial_pmf(n, 64, p) / (1.0 - p0);
        const double expected = pn * draws;
        chi2 += (hist[n] - expected) * (hist[n] - expected) / expected;
        tail_expected -= pn;
        tail_observed -= hist[n];
    }
    const double te = tail_expected * draws;
    chi2 += (tail_observed - te) * (tail_observed - te) / te;
    EXPECT_LT(chi2, 20.09);
    EXPECT_LT(static_cast<double>(over8) / draws, 0.01);
}

TEST(PhaseRedraw, KeepsAmplitudesAndSupport) {
    FMatrix f;
    f.set(2, 2, 0.5, 1.0);
    Rng rng(3);
    FMatrix g = phase_redraw(f, rng);
    EXPECT_EQ(g.amp, f.amp);
    EXPECT_NE(g.phase[FMatrix::index(2, 2)], f.phase[FMatrix::index(2, 2)]);
    for (int k = 0; k < kGridCells; ++k)
        if (k != FMatrix::index(2, 2)) EXPECT_EQ(g.phase[k], 0.0);

    Rng rng2(4);
    FMatrix h = fixtures::random_fmatrix(rng2, 5);
    const auto support = h.support();
    for (int t = 0; t < 50; ++t) {
        h = phase_redraw(h, rng2);
        ASSERT_EQ(h.support(), support);
    }
    EXPECT_THROW(phase_redraw(FMatrix{}, rng2), EmptyFMatrixError);
}

TEST(PhaseRedraw, SeededReproducibility) {
    Rng r1(77), r2(77);
    Rng src(5);
    const FMatrix f = fixtures::random_fmatrix(src, 4);
    EXPECT_EQ(phase_redraw(f, r1).phase, phase_redraw(f, r2).phase);
}

TEST(BuildDataset, SingleRecordRoundTripsBitExactly) {
    SamplerConfig cfg;
    cfg.n_patterns = 1;
    cfg.phase_redraws = 1;
    cfg.rng_seed = 8;
    const auto path = temp_file("one.holo");
    const auto header = build_dataset(cfg, BenchConfig{}, path);
    EXPECT_EQ(header.record_count, 1u);
    const Dataset ds = Dataset::load(path);
    ASSERT_EQ(ds.size(), 1u);
    const IntensityImage again = render(ds.fmatrix(0), ds.header().bench());
    const auto stored = ds.intensity_f32(0);
    for (std::size_t k = 0; k < stored.size(); ++k) ASSERT_EQ(stored[k], static_cast<float>(again.val[k]));
    fs::remove(path);
}

TEST(BuildDataset, RecordsShareAmplitudePatternsAndRoundTrip) {
    SamplerConfig cfg;
    cfg.n_patterns = 4;
    cfg.phase_redraws = 3;
    cfg.rng_seed = 99;
    const auto path = temp_file("small.holo");
    build_dataset(cfg, BenchConfig{}, path);
    const Dataset ds = Dataset::load(path);
    ASSERT_EQ(ds.size(), 12u);
    for (std::size_t p = 0; p < 4; ++p) {
        const FMatrix a = ds.fmatrix(3 * p);
        for (std::size_t r = 1; r < 3; ++r) EXPECT_EQ(ds.fmatrix(3 * p + r).amp, a.amp);
    }
    for (std::size_t r = 0; r < ds.size(); ++r) {
        const IntensityImage again = render(ds.fmatrix(r), ds.header().bench());
        const auto stored = ds.intensity_f32(r);
        for (std::size_t k = 0; k < stored.size(); ++k) ASSERT_EQ(stored[k], static_cast<float>(again.val[k]));
    }
    EXPECT_EQ(ds.header().sampler.rng_seed, 99u);
    EXPECT_EQ(ds.header().grid, FrequencyGrid::standard());
    fs::remove(path);
}

TEST(BuildDataset, SameSeedsGiveIdenticalBytesRegardlessOfThreads) {
    SamplerConfig cfg;
    cfg.n_patterns = 6;
    cfg.phase_redraws = 2;
    cfg.rng_seed = 5;
    const auto a = temp_file("det_a.holo");
    const auto b = temp_file("det_b.holo");
    const auto c = temp_file("det_c.holo");
    build_dataset(cfg, BenchConfig{}, a, 1);
    build_dataset(cfg, BenchConfig{}, b, 3);
    cfg.rng_seed = 6;
    build_dataset(cfg, BenchConfig{}, c, 1);
    EXPECT_EQ(slurp(a), slurp(b));
    EXPECT_EQ(file_hash(a), file_hash(b));
    const Dataset da = Dataset::load(a);
    const Dataset dc = Dataset::load(c);
    EXPECT_NE(da.fmatrix(0).amp, dc.fmatrix(0).amp);
    for (const auto& p : {a, b, c}) fs::remove(p);
}

TEST(BuildDataset, RejectsBadInput) {
    SamplerConfig cfg;
    cfg.n_patterns = 0;
    EXPECT_THROW(build_dataset(cfg, BenchConfig{}, temp_file("bad.holo")), ConfigError);
    EXPECT_THROW(Dataset::load(temp_file("does_not_exist.holo")), IoError);
    const auto junk = temp_file("junk.holo");
    {
        std::ofstream os(junk, std::ios::binary);
        os << "JUNKJUNK";
    }
    EXPECT_THROW(Dataset::load(junk), IoError);
    fs::remove(junk);
}

TEST(BuildDataset, ManifestEchoesConfiguration) {
    DatasetHeader h;
    h.record_count = 30;
    h.sampler.n_patterns = 10;
    const auto j = dataset_manifest(h, "abc");
    EXPECT_EQ(j.at("record_count"), 30);
    EXPECT_EQ(j.at("sampler").at("n_patterns"), 10);
    EXPECT_EQ(j.at("bench").at("grid").at("pad_size"), 1000);
    EXPECT_TRUE(j.contains("created_utc"));
}
