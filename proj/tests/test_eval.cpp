#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "holobench/eval.hpp"
#include "test_support.hpp"

using namespace holo;

namespace {

IntensityImage random_image(Rng& rng, int n = 100) {
    IntensityImage img(n);
    for (double& v : img.val) v = uniform01(rng);
    return img;
}

FMatrix rotate(const FMatrix& f, double theta) {
    FMatrix g;
    for (int k = 0; k < kGridCells; ++k)
        if (f.amp[k] != 0.0) g.set(k / kGridSide, k % kGridSide, f.amp[k], f.phase[k] + theta);
    return g;
}

// Always proposes the same f, whatever the latent draw.
Proposer constant_proposer(FMatrix f) {
    return {"constant", [f](const EvalTarget&, int k, Rng&) { return std::vector<FMatrix>(static_cast<std::size_t>(k), f); }};
}

// A fresh random f-matrix per draw, consuming the draw stream in order.
Proposer random_proposer() {
    return {"random", [](const EvalTarget&, int k, Rng& rng) {
                std::vector<FMatrix> fs;
                for (int d = 0; d < k; ++d) fs.push_back(fixtures::random_fmatrix(rng, 2));
                return fs;
            }};
}

std::vector<EvalTarget> rendered_targets(int n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<EvalTarget> out;
    for (int k = 0; k < n; ++k) {
        const FMatrix f = fixtures::random_fmatrix(rng, 1 + k % 3);
        out.push_back({static_cast<std::size_t>(k), render(f, BenchConfig{}), f});
    }
    return out;
}

} // namespace

TEST(IntensityError, ClosedForms) {
    Rng rng(1);
    const IntensityImage a = random_image(rng);
    EXPECT_EQ(intensity_error(a, a), 0.0);
    IntensityImage one(100), zero(100);
    one.at(3, 4) = 1.0;
    EXPECT_DOUBLE_EQ(intensity_error(one, zero), 1.0);
    EXPECT_THROW(intensity_error(zero, one), InvalidArgument);
    EXPECT_THROW(intensity_error(one, IntensityImage(50)), InvalidArgument);
}

TEST(IntensityError, MatchesBruteForce) {
    Rng rng(2);
    const IntensityImage a = random_image(rng), b = random_image(rng);
    double sq = 0.0, tot = 0.0;
    for (int r = 0; r < 100; ++r)
        for (int c = 0; c < 100; ++c) {
            sq += (a.at(r, c) - b.at(r, c)) * (a.at(r, c) - b.at(r, c));
            tot += a.at(r, c);
        }
    EXPECT_NEAR(intensity_error(a, b), sq / tot, 1e-12 * sq / tot);
}

TEST(FError, ClosedForms) {
    const FMatrix f = fixtures::single_element(2, 2);
    EXPECT_EQ(f_error(f, f), 0.0);
    EXPECT_NEAR(f_error(f, rotate(f, std::numbers::pi)), 4.0, 1e-12);
    EXPECT_THROW(f_error(FMatrix{}, f), InvalidArgument);
}

TEST(FError, MatchesBruteForce) {
    Rng rng(3);
    const FMatrix f = fixtures::random_fmatrix(rng, 5), g = fixtures::random_fmatrix(rng, 4);
    double sq = 0.0, tot = 0.0;
    for (int k = 0; k < kGridCells; ++k) {
        const double dr = f.amp[k] * std::cos(f.phase[k]) - g.amp[k] * std::cos(g.phase[k]);
        const double di = f.amp[k] * std::sin(f.phase[k]) - g.amp[k] * std::sin(g.phase[k]);
        sq += dr * dr + di * di;
        tot += f.amp[k];
    }
    EXPECT_NEAR(f_error(f, g), sq / tot, 1e-12);
}

TEST(EvalInvariants, GlobalPhaseMovesEfButNotEi) {
    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        const FMatrix f = fixtures::random_fmatrix(rng, 1 + trial % 5);
        const FMatrix g = rotate(f, uniform(rng, 0.5, 5.5));
        const IntensityImage target = render(f, BenchConfig{});
        EXPECT_LT(intensity_error(target, render(g, BenchConfig{})), 1e-9);
        EXPECT_GT(f_error(f, g), 1e-3);
    }
}

TEST(BestOfK, SingleDrawHasEqualMinAndMax) {
    const auto targets = rendered_targets(5, 5);
    Rng rng(6);
    for (const auto& t : targets) {
        const auto rec = best_of_k(random_proposer(), t, 1, BenchConfig{}, rng);
        EXPECT_EQ(rec.e_i_min(), rec.e_i_max());
    }
    EXPECT_THROW(best_of_k(random_proposer(), targets[0], 0, BenchConfig{}, rng), InvalidArgument);
}

TEST(BestOfK, DegenerateProposerGivesEqualDraws) {
    const auto targets = rendered_targets(3, 7);
    Rng rng(8);
    const auto rec = best_of_k(constant_proposer(fixtures::single_element(4, 4)), targets[1], 5, BenchConfig{}, rng);
    for (double e : rec.e_i) EXPECT_EQ(e, rec.e_i.front());
}

TEST(BestOfK, MinIsNonIncreasingInK) {
    const auto targets = rendered_targets(8, 9);
    for (const auto& t : targets) {
        double prev = INFINITY;
        for (int k = 1; k <= 6; ++k) {
            Rng rng(substream(42, t.id, kEvalTag));
            const auto rec = best_of_k(random_proposer(), t, k, BenchConfig{}, rng);
            EXPECT_LE(rec.e_i_min(), prev);
            prev = rec.e_i_min();
        }
    }
}

TEST(BestOfK, RecordsBestCandidate) {
    const auto targets = rendered_targets(4, 10);
    Rng rng(11);
    const auto rec = best_of_k(random_proposer(), targets[2], 5, BenchConfig{}, rng);
    EXPECT_EQ(intensity_error(targets[2].intensity, rec.best_intensity), rec.e_i_min());
    EXPECT_EQ(rec.e_f.size(), 5u);
}

TEST(Suite, IdentityReplayIsExact) {
    const auto targets = rendered_targets(30, 12);
    const auto rep = evaluate_suite(identity_replay_proposer(), targets, BenchConfig{}, 5, 42, "test");
    EXPECT_LE(rep.e_i_min().mean, 1e-9);
    EXPECT_THROW(evaluate_suite(identity_replay_proposer(), {{0, targets[0].intensity, {}}}, BenchConfig{}, 1, 42, "x"),
                 InvalidArgument);
}

TEST(Suite, MeanOfMinBelowMeanOfMax) {
    const auto rep = evaluate_suite(random_proposer(), rendered_targets(20, 13), BenchConfig{}, 5, 42, "test");
    EXPECT_LE(rep.e_i_min().mean, rep.e_i_max().mean);
    for (std::size_t k = 1; k < rep.records.size(); ++k)
        EXPECT_LT(rep.records[k - 1].target_id, rep.records[k].target_id);
}

TEST(Suite, ResultsIndependentOfTargetOrder) {
    auto targets = rendered_targets(10, 14);
    const auto a = evaluate_suite(random_proposer(), targets, BenchConfig{}, 3, 42, "test");
    std::reverse(targets.begin(), targets.end());
    const auto b = evaluate_suite(random_proposer(), targets, BenchConfig{}, 3, 42, "test");
    for (std::size_t k = 0; k < a.records.size(); ++k) EXPECT_EQ(a.records[k].e_i, b.records[k].e_i);
}

TEST(Synthetic, IsotropicSpotClosedForm) {
    SyntheticTargetSpec spec;
    spec.spots.push_back({100.0, 40.0, 55.0, 50.0, 50.0, 0.0});
    const IntensityImage img = render_synthetic(spec);
    EXPECT_NEAR(img.at(55, 40), 100.0 / 255.0, 1e-12);
    // One standard deviation away along x: sqrt(50) is not a pixel, so use the
    // Gaussian at an integer offset and compare against exp(-d^2 / (2 var)).
    EXPECT_NEAR(img.at(55, 47), 100.0 / 255.0 * std::exp(-49.0 / 100.0), 1e-12);
    EXPECT_NEAR(img.at(62, 40), 100.0 / 255.0 * std::exp(-49.0 / 100.0), 1e-12);
}

TEST(Synthetic, SamplerRespectsBounds) {
    Rng rng(15);
    std::array<int, 6> counts{};
    for (int n = 0; n < 10000; ++n) {
        const auto spec = sample_synthetic_spec(rng);
        const int np = spec.n_spots();
        ASSERT_GE(np, 1);
        ASSERT_LE(np, 5);
        ++counts[static_cast<std::size_t>(np)];
        const double a_max = 300.0 / std::sqrt(static_cast<double>(np));
        for (const auto& s : spec.spots) {
            EXPECT_GE(s.amplitude, 40.0);
            EXPECT_LE(s.amplitude, a_max);
            EXPECT_GE(s.mu_x, 20.0);
            EXPECT_LE(s.mu_x, 79.0);
            EXPECT_GE(s.mu_y, 20.0);
            EXPECT_LE(s.mu_y, 79.0);
            EXPECT_GE(s.var_x, 50.0);
            EXPECT_LE(s.var_x, 65.0);
            EXPECT_GE(s.var_y, 50.0);
            EXPECT_LE(s.var_y, 65.0);
            EXPECT_GT(s.var_x * s.var_y - s.cov_xy * s.cov_xy, 0.0);
        }
    }
    for (int np = 1; np <= 5; ++np) EXPECT_GT(counts[static_cast<std::size_t>(np)], 1800);
}

TEST(Synthetic, FiveSpotAmplitudeCap) {
    Rng rng(16);
    for (int n = 0; n < 2000; ++n) {
        const auto spec = sample_synthetic_spec(rng);
        if (spec.n_spots() != 5) continue;
        for (const auto& s : spec.spots) EXPECT_LE(s.amplitude, 134.17);
    }
}

TEST(Report, CsvSchema) {
    const auto rep = evaluate_suite(random_proposer(), rendered_targets(3, 17), BenchConfig{}, 2, 42, "test");
    const auto dir = std::filesystem::temp_directory_path() / "holobench_eval_csv";
    write_report_csv(rep, dir / "report.csv");
    std::ifstream is(dir / "report.csv");
    std::string header, line;
    std::getline(is, header);
    EXPECT_EQ(header, "target_id,model,e_i_min,e_i_max,e_f_min,e_f_max,e_i_draw_1,e_i_draw_2,e_f_draw_1,e_f_draw_2");
    int rows = 0;
    while (std::getline(is, line)) {
        std::stringstream ss(line);
        std::string cell;
        int cols = 0;
        while (std::getline(ss, cell, ',')) ++cols;
        EXPECT_EQ(cols, 10);
        EXPECT_EQ(line.substr(0, line.find(',')), std::to_string(rows));
        ++rows;
    }
    EXPECT_EQ(rows, 3);
    std::filesystem::remove_all(dir);
}

TEST(Report, SummaryFields) {
    const auto rep = evaluate_suite(random_proposer(), rendered_targets(6, 18), BenchConfig{}, 3, 42, "test");
    const auto j = report_summary(rep);
    EXPECT_EQ(j.at("targets"), 6);
    EXPECT_EQ(j.at("k"), 3);
    EXPECT_TRUE(j.contains("spread_fraction"));
    EXPECT_DOUBLE_EQ(j.at("e_i_min").at("mean").get<double>(), rep.e_i_min().mean);
    int total = 0;
    for (int c : j.at("e_i_min_histogram").at("counts")) total += c;
    EXPECT_EQ(total, 6);
}

TEST(Report, MeanSem) {
    const auto m = mean_sem({1.0, 2.0, 3.0, 4.0});
    EXPECT_DOUBLE_EQ(m.mean, 2.5);
    EXPECT_NEAR(m.sem, std::sqrt(5.0 / 3.0 / 4.0), 1e-15);
    EXPECT_DOUBLE_EQ(stdev({2.0, 4.0}), std::sqrt(2.0));
}
