#pragma once

// Non-learned baseline: threshold the image, take 4-connected components,
// map each component centroid to an f-matrix index through an affine fit, set
// the amplitude from the component peak and draw random phases.

#include <algorithm>
#include <cmath>
#include <vector>

#include <nlohmann/json.hpp>

#include "holobench/dataset.hpp"
#include "holobench/optics.hpp"

namespace holo {

struct ExpertCalibration {
    // i = a_y * row + b_y, j = a_x * col + b_x
    double a_x = 0.1;
    double b_x = -1.5;
    double a_y = 0.1;
    double b_y = -1.5;
    double c = 1.0;
    double threshold_fraction = 0.5;
    double residual = 0.0; // worst index error of the fit

    void validate() const {
        if (a_x == 0.0 || a_y == 0.0) throw ConfigError("expert calibration slope must be nonzero");
        if (!(c > 0.0)) throw ConfigError("expert amplitude scale must be positive");
        if (!(threshold_fraction > 0.0 && threshold_fraction <= 1.0))
            throw ConfigError("threshold_fraction must lie in (0, 1]");
    }
};

inline nlohmann::json to_json(const ExpertCalibration& cal) {
    return {{"a_x", cal.a_x}, {"b_x", cal.b_x}, {"a_y", cal.a_y},           {"b_y", cal.b_y},
            {"c", cal.c},     {"threshold_fraction", cal.threshold_fraction}, {"residual", cal.residual}};
}

inline ExpertCalibration expert_calibration_from_json(const nlohmann::json& j) {
    ExpertCalibration cal;
    try {
        cal.a_x = j.at("a_x").get<double>();
        cal.b_x = j.at("b_x").get<double>();
        cal.a_y = j.at("a_y").get<double>();
        cal.b_y = j.at("b_y").get<double>();
        cal.c = j.value("c", 1.0);
        cal.threshold_fraction = j.value("threshold_fraction", 0.5);
        cal.residual = j.value("residual", 0.0);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad expert calibration: ") + e.what());
    }
    cal.validate();
    return cal;
}

struct Peak {
    double row = 0.0; // intensity-weighted centroid over the bounding box
    double col = 0.0;
    double peak = 0.0;
    int pixels = 0;
};

// Components of {I >= thr * max(I)} under 4-connectivity, in raster order of
// their first pixel.
inline std::vector<Peak> find_peaks(const IntensityImage& img, double threshold_fraction) {
    const int n = img.size;
    const double mx = img.max();
    if (!(mx > 0.0)) throw InvalidArgument("no peaks: image has no positive intensity");
    const double thr = threshold_fraction * mx;
    std::vector<int> label(img.val.size(), -1);
    std::vector<Peak> peaks;
    std::vector<int> stack;
    for (int start = 0; start < n * n; ++start) {
        if (label[static_cast<std::size_t>(start)] >= 0 || img.val[static_cast<std::size_t>(start)] < thr) continue;
        const int id = static_cast<int>(peaks.size());
        int r0 = n, r1 = -1, c0 = n, c1 = -1;
        Peak pk;
        stack.assign(1, start);
        label[static_cast<std::size_t>(start)] = id;
        while (!stack.empty()) {
            const int p = stack.back();
            stack.pop_back();
            const int r = p / n, col = p % n;
            r0 = std::min(r0, r);
            r1 = std::max(r1, r);
            c0 = std::min(c0, col);
            c1 = std::max(c1, col);
            pk.peak = std::max(pk.peak, img.val[static_cast<std::size_t>(p)]);
            ++pk.pixels;
            const int nbr[4][2] = {{r - 1, col}, {r + 1, col}, {r, col - 1}, {r, col + 1}};
            for (const auto& [rr, cc] : nbr) {
                if (rr < 0 || rr >= n || cc < 0 || cc >= n) continue;
                const auto q = static_cast<std::size_t>(rr * n + cc);
                if (label[q] >= 0 || img.val[q] < thr) continue;
                label[q] = id;
                stack.push_back(rr * n + cc);
            }
        }
        double w = 0.0, wr = 0.0, wc = 0.0;
        for (int r = r0; r <= r1; ++r)
            for (int col = c0; col <= c1; ++col) {
                const double v = img.at(r, col);
                w += v;
                wr += v * r;
                wc += v * col;
            }
        pk.row = wr / w;
        pk.col = wc / w;
        peaks.push_back(pk);
    }
    return peaks;
}

// Nearest integer with ties going down: 3.5 -> 3.
inline int round_half_down(double x) { return static_cast<int>(std::ceil(x - 0.5)); }

// Renders all 64 single-element f-matrices and fits the affine centroid-to-
// index map per axis by least squares.
inline ExpertCalibration calibrate(const BenchConfig& bench, double c = 1.0, double threshold_fraction = 0.5) {
    std::vector<double> rows, cols, is, js;
    BenchConfig clean = bench;
    clean.jitter_amplitude = 0.0;
    for (int i = 0; i < kGridSide; ++i)
        for (int j = 0; j < kGridSide; ++j) {
            FMatrix f;
            f.set(i, j, 1.0, 0.0);
            const auto peaks = find_peaks(render(f, clean), threshold_fraction);
            const auto best = std::max_element(peaks.begin(), peaks.end(),
                                               [](const Peak& a, const Peak& b) { return a.peak < b.peak; });
            rows.push_back(best->row);
            cols.push_back(best->col);
            is.push_back(i);
            js.push_back(j);
        }
    auto fit = [](const std::vector<double>& x, const std::vector<double>& y) {
        const double n = static_cast<double>(x.size());
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (std::size_t k = 0; k < x.size(); ++k) {
            sx += x[k];
            sy += y[k];
            sxx += x[k] * x[k];
            sxy += x[k] * y[k];
        }
        const double den = n * sxx - sx * sx;
        if (den == 0.0) throw NumericError("expert calibration: degenerate spot positions");
        const double a = (n * sxy - sx * sy) / den;
        return std::pair{a, (sy - a * sx) / n};
    };
    ExpertCalibration cal;
    std::tie(cal.a_y, cal.b_y) = fit(rows, is);
    std::tie(cal.a_x, cal.b_x) = fit(cols, js);
    cal.c = c;
    cal.threshold_fraction = threshold_fraction;
    for (std::size_t k = 0; k < rows.size(); ++k) {
        cal.residual = std::max(cal.residual, std::abs(cal.a_y * rows[k] + cal.b_y - is[k]));
        cal.residual = std::max(cal.residual, std::abs(cal.a_x * cols[k] + cal.b_x - js[k]));
    }
    if (cal.residual > 0.5) throw NumericError("expert calibration failed: residual exceeds 0.5 index units");
    cal.validate();
    return cal;
}

// Amplitude-only estimate (all phases 0). Centroids outside the grid are
// clamped to the nearest edge element; collisions keep the larger amplitude.
inline FMatrix expert_support(const IntensityImage& img, const ExpertCalibration& cal) {
    FMatrix f;
    for (const Peak& p : find_peaks(img, cal.threshold_fraction)) {
        const int i = std::clamp(round_half_down(cal.a_y * p.row + cal.b_y), 0, kGridSide - 1);
        const int j = std::clamp(round_half_down(cal.a_x * p.col + cal.b_x), 0, kGridSide - 1);
        const double amp = cal.c * p.peak;
        if (amp > f.amp[i * kGridSide + j]) f.set(i, j, amp, 0.0);
    }
    return f;
}

// Support and amplitudes from the image, phases drawn uniformly in [0, 2pi).
inline FMatrix expert_estimate(const IntensityImage& img, const ExpertCalibration& cal, Rng& rng) {
    return phase_redraw(expert_support(img, cal), rng);
}

} // namespace holo
