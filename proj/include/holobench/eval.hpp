#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "holobench/expert.hpp"
#include "holobench/models/model.hpp"
#include "holobench/pgm.hpp"

namespace holo {

// ||I - I~||^2 / sum(I): a squared error over a linear total.
inline double intensity_error(const IntensityImage& target, const IntensityImage& achieved) {
    if (target.size != achieved.size) throw InvalidArgument("intensity_error: shape mismatch");
    const double total = target.total();
    if (!(total > 0.0)) throw InvalidArgument("intensity_error: target has zero total intensity");
    double sq = 0.0;
    for (std::size_t k = 0; k < target.val.size(); ++k) {
        const double d = target.val[k] - achieved.val[k];
        sq += d * d;
    }
    return sq / total;
}

// ||f - f^||^2 (complex) / sum |f|.
inline double f_error(const FMatrix& f, const FMatrix& fhat) {
    const double total = f.abs_sum();
    if (!(total > 0.0)) throw InvalidArgument("f_error: reference f-matrix is empty");
    double sq = 0.0;
    for (int k = 0; k < kGridCells; ++k) sq += std::norm(f.at(k) - fhat.at(k));
    return sq / total;
}

struct EvalTarget {
    std::size_t id = 0;
    IntensityImage intensity;
    std::optional<FMatrix> f; // ground truth when known
};

struct EvalRecord {
    std::size_t target_id = 0;
    std::string model;
    std::vector<double> e_i; // one per draw
    std::vector<double> e_f; // empty without ground truth
    FMatrix best_f;          // draw with the lowest E_I
    IntensityImage best_intensity;

    double e_i_min() const { return *std::min_element(e_i.begin(), e_i.end()); }
    double e_i_max() const { return *std::max_element(e_i.begin(), e_i.end()); }
    double e_f_min() const { return e_f.empty() ? NAN : *std::min_element(e_f.begin(), e_f.end()); }
    double e_f_max() const { return e_f.empty() ? NAN : *std::max_element(e_f.begin(), e_f.end()); }
};

// Produces k candidate f-matrices for one target; draws must be nested, i.e.
// the first m of k draws equal the m draws of a call with k = m.
struct Proposer {
    std::string name;
    std::function<std::vector<FMatrix>(const EvalTarget&, int k, Rng&)> propose;
};

inline Proposer model_proposer(models::GenerativeModel& model) {
    return {models::to_string(model.kind()), [&model](const EvalTarget& t, int k, Rng& rng) {
                const models::Matrix z = model.sample_latent(k, rng);
                const models::Matrix rows = models::intensity_row(t.intensity).replicate(k, 1);
                const models::Matrix out = model.generate(rows, z);
                std::vector<FMatrix> fs;
                for (int r = 0; r < k; ++r)
                    fs.push_back(FMatrix::from_cartesian(std::span<const double>(out.row(r).data(), models::kFeatures)));
                return fs;
            }};
}

// Support and amplitudes once, then k phase redraws.
inline Proposer expert_proposer(const ExpertCalibration& cal) {
    return {"expert", [cal](const EvalTarget& t, int k, Rng& rng) {
                const FMatrix base = expert_support(t.intensity, cal);
                std::vector<FMatrix> fs;
                for (int d = 0; d < k; ++d) fs.push_back(phase_redraw(base, rng));
                return fs;
            }};
}

// Replays the ground-truth f of each target.
inline Proposer identity_replay_proposer() {
    return {"identity-replay", [](const EvalTarget& t, int k, Rng&) {
                if (!t.f) throw InvalidArgument("identity replay needs ground-truth f");
                return std::vector<FMatrix>(static_cast<std::size_t>(k), *t.f);
            }};
}

inline constexpr std::uint64_t kEvalTag = 0xe7a1;

// Renders each of k candidates on the bench and records every error.
inline EvalRecord best_of_k(const Proposer& proposer, const EvalTarget& target, int k, const BenchConfig& bench,
                            Rng& rng) {
    if (k < 1) throw InvalidArgument("best_of_k: k must be positive");
    const auto candidates = proposer.propose(target, k, rng);
    EvalRecord rec;
    rec.target_id = target.id;
    rec.model = proposer.name;
    double best = INFINITY;
    for (std::size_t d = 0; d < candidates.size(); ++d) {
        IntensityImage img = render(candidates[d], bench, d);
        const double e = intensity_error(target.intensity, img);
        rec.e_i.push_back(e);
        if (target.f) rec.e_f.push_back(f_error(*target.f, candidates[d]));
        if (e < best) {
            best = e;
            rec.best_f = candidates[d];
            rec.best_intensity = std::move(img);
        }
    }
    return rec;
}

struct MeanSem {
    double mean = 0.0;
    double sem = 0.0;
};

inline MeanSem mean_sem(const std::vector<double>& v) {
    MeanSem m;
    if (v.empty()) return m;
    for (double x : v) m.mean += x;
    m.mean /= static_cast<double>(v.size());
    if (v.size() > 1) {
        double ss = 0.0;
        for (double x : v) ss += (x - m.mean) * (x - m.mean);
        m.sem = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
    }
    return m;
}

inline double stdev(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_sem(v).mean;
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

struct SuiteReport {
    std::string model;
    std::string suite;
    int k = 0;
    std::vector<EvalRecord> records; // ordered by target id

    std::vector<double> column(double (EvalRecord::*get)() const) const {
        std::vector<double> out;
        for (const auto& r : records) out.push_back((r.*get)());
        return out;
    }
    MeanSem e_i_min() const { return mean_sem(column(&EvalRecord::e_i_min)); }
    MeanSem e_i_max() const { return mean_sem(column(&EvalRecord::e_i_max)); }

    // Fraction of targets whose E_I spread over the draws is below the E_f spread.
    double spread_fraction() const {
        std::size_t n = 0, hit = 0;
        for (const auto& r : records) {
            if (r.e_f.empty()) continue;
            ++n;
            if (stdev(r.e_i) < stdev(r.e_f)) ++hit;
        }
        return n == 0 ? NAN : static_cast<double>(hit) / static_cast<double>(n);
    }
};

// Every target gets its own draw stream, so results do not depend on order and
// different proposers see the same latent sequence.
inline SuiteReport evaluate_suite(const Proposer& proposer, const std::vector<EvalTarget>& targets,
                                  const BenchConfig& bench, int k, std::uint64_t seed, const std::string& suite) {
    SuiteReport rep;
    rep.model = proposer.name;
    rep.suite = suite;
    rep.k = k;
    for (const auto& t : targets) {
        Rng rng(substream(seed, t.id, kEvalTag));
        rep.records.push_back(best_of_k(proposer, t, k, bench, rng));
    }
    std::sort(rep.records.begin(), rep.records.end(),
              [](const EvalRecord& a, const EvalRecord& b) { return a.target_id < b.target_id; });
    return rep;
}

inline std::vector<EvalTarget> test_targets(const Dataset& ds, const std::vector<std::size_t>& records) {
    std::vector<EvalTarget> out;
    for (std::size_t r : records) out.push_back({r, ds.intensity(r), ds.fmatrix(r)});
    return out;
}

// ---- synthetic targets ----

struct GaussianSpot {
    double amplitude = 0.0; // paper units, before the /255 bridge
    double mu_x = 0.0;      // column
    double mu_y = 0.0;      // row
    double var_x = 0.0;
    double var_y = 0.0;
    double cov_xy = 0.0;
};

struct SyntheticTargetSpec {
    std::vector<GaussianSpot> spots;

    int n_spots() const { return static_cast<int>(spots.size()); }
};

struct SyntheticConfig {
    int max_spots = 5;
    double a_min = 40.0;
    double a_max_numerator = 300.0; // A_max = a_max_numerator / sqrt(N_p)
    double margin = 20.0;
    double var_min = 50.0;
    double var_max = 65.0;
    double cov_fraction = 0.8;
    double unit_scale = 255.0;
    int side = 100;
};

inline SyntheticTargetSpec sample_synthetic_spec(Rng& rng, const SyntheticConfig& cfg = {}) {
    SyntheticTargetSpec spec;
    const int np = 1 + static_cast<int>(uniform01(rng) * cfg.max_spots);
    const double a_max = cfg.a_max_numerator / std::sqrt(static_cast<double>(np));
    for (int k = 0; k < np; ++k) {
        GaussianSpot s;
        s.amplitude = uniform(rng, cfg.a_min, a_max);
        s.mu_x = uniform(rng, cfg.margin, cfg.side - 1 - cfg.margin);
        s.mu_y = uniform(rng, cfg.margin, cfg.side - 1 - cfg.margin);
        s.var_x = uniform(rng, cfg.var_min, cfg.var_max);
        s.var_y = uniform(rng, cfg.var_min, cfg.var_max);
        const double bound = cfg.cov_fraction * std::sqrt(s.var_x * s.var_y);
        do {
            s.cov_xy = uniform(rng, -bound, bound);
        } while (s.var_x * s.var_y - s.cov_xy * s.cov_xy <= 0.0);
        spec.spots.push_back(s);
    }
    return spec;
}

// Mixture of bivariate Gaussians on the pixel grid (x = column, y = row),
// divided by the unit scale.
inline IntensityImage render_synthetic(const SyntheticTargetSpec& spec, const SyntheticConfig& cfg = {}) {
    IntensityImage img(cfg.side);
    for (int y = 0; y < cfg.side; ++y)
        for (int x = 0; x < cfg.side; ++x) {
            double v = 0.0;
            for (const auto& s : spec.spots) {
                const double dx = x - s.mu_x, dy = y - s.mu_y;
                const double det = s.var_x * s.var_y - s.cov_xy * s.cov_xy;
                const double q = (s.var_y * dx * dx - 2.0 * s.cov_xy * dx * dy + s.var_x * dy * dy) / det;
                v += s.amplitude * std::exp(-0.5 * q);
            }
            img.val[static_cast<std::size_t>(y) * cfg.side + x] = v / cfg.unit_scale;
        }
    return img;
}

inline std::vector<EvalTarget> make_synthetic_targets(std::size_t n, Rng& rng, const SyntheticConfig& cfg = {}) {
    std::vector<EvalTarget> out;
    for (std::size_t k = 0; k < n; ++k) out.push_back({k, render_synthetic(sample_synthetic_spec(rng, cfg), cfg), {}});
    return out;
}

// ---- report emission ----

inline void write_report_csv(const SuiteReport& rep, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path);
    if (!os) throw IoError("cannot open " + path.string());
    os.precision(17);
    os << "target_id,model,e_i_min,e_i_max,e_f_min,e_f_max";
    for (int d = 0; d < rep.k; ++d) os << ",e_i_draw_" << d + 1;
    for (int d = 0; d < rep.k; ++d) os << ",e_f_draw_" << d + 1;
    os << '\n';
    auto num = [&](double v) -> std::ostream& {
        if (std::isnan(v)) return os;
        return os << v;
    };
    for (const auto& r : rep.records) {
        os << r.target_id << ',' << r.model << ',';
        num(r.e_i_min()) << ',';
        num(r.e_i_max()) << ',';
        num(r.e_f_min()) << ',';
        num(r.e_f_max());
        for (double e : r.e_i) num((os << ',', e));
        for (int d = 0; d < rep.k; ++d) {
            os << ',';
            if (static_cast<std::size_t>(d) < r.e_f.size()) num(r.e_f[static_cast<std::size_t>(d)]);
        }
        os << '\n';
    }
    if (!os.flush()) throw IoError("write failed: " + path.string());
}

inline nlohmann::json histogram(const std::vector<double>& v, int bins) {
    if (v.empty()) return nlohmann::json::object();
    const double hi = std::max(*std::max_element(v.begin(), v.end()), 1e-300);
    std::vector<int> counts(static_cast<std::size_t>(bins), 0);
    for (double x : v) ++counts[static_cast<std::size_t>(std::min(bins - 1, static_cast<int>(x / hi * bins)))];
    return {{"lo", 0.0}, {"hi", hi}, {"counts", counts}};
}

inline nlohmann::json report_summary(const SuiteReport& rep) {
    auto ms = [](MeanSem m) { return nlohmann::json{{"mean", m.mean}, {"sem", m.sem}}; };
    nlohmann::json j = {{"model", rep.model},
                        {"suite", rep.suite},
                        {"k", rep.k},
                        {"targets", rep.records.size()},
                        {"e_i_min", ms(rep.e_i_min())},
                        {"e_i_max", ms(rep.e_i_max())},
                        {"e_i_min_histogram", histogram(rep.column(&EvalRecord::e_i_min), 20)}};
    if (!rep.records.empty() && !rep.records.front().e_f.empty()) {
        j["e_f_min"] = ms(mean_sem(rep.column(&EvalRecord::e_f_min)));
        j["e_f_max"] = ms(mean_sem(rep.column(&EvalRecord::e_f_max)));
        j["e_f_min_histogram"] = histogram(rep.column(&EvalRecord::e_f_min), 20);
        j["spread_fraction"] = rep.spread_fraction();
    }
    return j;
}

// Target and best reconstruction for the last `count` targets.
inline void write_gallery(const SuiteReport& rep, const std::vector<EvalTarget>& targets,
                          const std::filesystem::path& dir, std::size_t count = 12) {
    std::filesystem::create_directories(dir);
    const std::size_t n = std::min(count, rep.records.size());
    for (std::size_t k = rep.records.size() - n; k < rep.records.size(); ++k) {
        const auto& r = rep.records[k];
        const auto it = std::find_if(targets.begin(), targets.end(), [&](const EvalTarget& t) { return t.id == r.target_id; });
        if (it == targets.end()) continue;
        const std::string stem = std::to_string(r.target_id);
        write_pgm(dir / ("target_" + stem + ".pgm"), it->intensity);
        write_pgm(dir / ("best_" + stem + ".pgm"), r.best_intensity);
    }
}

} // namespace holo
