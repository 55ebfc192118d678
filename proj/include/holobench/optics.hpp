#pragma once

// Deterministic stand-in for the holographic bench: f-matrix -> phase
// hologram (blazed-grating superposition) -> Fourier-plane camera intensity.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "holobench/core/error.hpp"
#include "holobench/core/rng.hpp"

namespace holo {

inline constexpr int kGridSide = 8;
inline constexpr int kGridCells = kGridSide * kGridSide;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

using cplx = std::complex<double>;

// Maps an angle to [0, 2pi). Values that round up to 2pi fold back to 0.
inline double wrap_phase(double a) {
    double w = std::fmod(a, kTwoPi);
    if (w < 0.0) w += kTwoPi;
    if (w >= kTwoPi) w = 0.0;
    return w;
}

// arg into [0, 2pi) with arg(0) := 0.
inline double arg_0_2pi(cplx z) {
    if (z.real() == 0.0 && z.imag() == 0.0) return 0.0;
    double a = std::atan2(z.imag(), z.real());
    if (a < 0.0) {
        a += kTwoPi;
        if (a >= kTwoPi) a = 0.0;
    }
    return a;
}

// 8x8 complex weighting matrix stored in polar form (row-major, index i*8+j).
struct FMatrix {
    std::array<double, kGridCells> amp{};
    std::array<double, kGridCells> phase{};

    static constexpr int index(int i, int j) { return i * kGridSide + j; }

    cplx at(int i, int j) const { return std::polar(amp[index(i, j)], phase[index(i, j)]); }
    cplx at(int k) const { return std::polar(amp[k], phase[k]); }

    void set(int i, int j, double a, double phi) {
        amp[index(i, j)] = a;
        phase[index(i, j)] = a == 0.0 ? 0.0 : wrap_phase(phi);
    }

    int nonzero_count() const {
        return static_cast<int>(std::count_if(amp.begin(), amp.end(), [](double a) { return a != 0.0; }));
    }
    bool empty() const { return nonzero_count() == 0; }

    std::vector<int> support() const {
        std::vector<int> s;
        for (int k = 0; k < kGridCells; ++k)
            if (amp[k] != 0.0) s.push_back(k);
        return s;
    }

    double abs_sum() const {
        double s = 0.0;
        for (double a : amp) s += a;
        return s;
    }

    // Throws InvalidArgument if any invariant is violated.
    void validate() const {
        for (int k = 0; k < kGridCells; ++k) {
            if (!std::isfinite(amp[k]) || amp[k] < 0.0)
                throw InvalidArgument("f-matrix amplitude must be finite and non-negative");
            if (!std::isfinite(phase[k]) || phase[k] < 0.0 || phase[k] >= kTwoPi)
                throw InvalidArgument("f-matrix phase must lie in [0, 2pi)");
        }
    }

    // Interleaved (Re, Im) pairs, 128 values. This is the network representation.
    std::array<double, 2 * kGridCells> to_cartesian() const {
        std::array<double, 2 * kGridCells> out{};
        for (int k = 0; k < kGridCells; ++k) {
            const cplx c = at(k);
            out[2 * k] = c.real();
            out[2 * k + 1] = c.imag();
        }
        return out;
    }

    template <typename Range>
    static FMatrix from_cartesian(const Range& re_im) {
        FMatrix f;
        for (int k = 0; k < kGridCells; ++k) {
            const cplx c(re_im[2 * k], re_im[2 * k + 1]);
            f.amp[k] = std::abs(c);
            f.phase[k] = f.amp[k] == 0.0 ? 0.0 : arg_0_2pi(c);
        }
        return f;
    }

    // Multiplies every element by c * e^{i phi}; c > 0.
    FMatrix scaled(double c, double phi = 0.0) const {
        FMatrix g = *this;
        for (int k = 0; k < kGridCells; ++k) {
            if (amp[k] == 0.0) continue;
            g.amp[k] = c * amp[k];
            g.phase[k] = wrap_phase(phase[k] + phi);
        }
        return g;
    }
};

// Fixed set of 64 spatial frequencies, given as integer DFT bins of the padded
// Fourier plane. Crop pixels are DFT bins, so one bin equals one camera pixel.
struct FrequencyGrid {
    int pad_size = 1000;
    std::array<int, kGridSide> bin{-35, -25, -15, -5, 5, 15, 25, 35};
    int slm_size = 200;
    int crop_size = 100;

    static FrequencyGrid standard() { return FrequencyGrid{}; }

    int crop_scale() const { return 1; }

    void validate() const {
        if (pad_size <= 0 || slm_size <= 0 || crop_size <= 0)
            throw ConfigError("frequency grid sizes must be positive");
        if (slm_size > pad_size || crop_size > pad_size)
            throw ConfigError("slm and crop sizes must not exceed the padded size");
        std::set<std::pair<int, int>> pairs;
        for (int a : bin)
            for (int b : bin) pairs.emplace(a, b);
        if (pairs.size() != static_cast<std::size_t>(kGridCells))
            throw ConfigError("frequency bins must be distinct");
        const int half = crop_size / 2;
        for (int b : bin) {
            const int p = half + b * crop_scale();
            if (p < 10 || p > crop_size - 1 - 10)
                throw ConfigError("spot positions must keep a 10 pixel margin inside the crop");
        }
    }

    bool operator==(const FrequencyGrid&) const = default;
};

struct Hologram {
    int size = 0;
    std::vector<double> phase; // row-major size x size, values in [0, 2pi)

    double at(int m, int n) const { return phase[static_cast<std::size_t>(m) * size + n]; }
};

struct IntensityImage {
    int size = 0;
    std::vector<double> val; // row-major size x size, values >= 0

    IntensityImage() = default;
    explicit IntensityImage(int n) : size(n), val(static_cast<std::size_t>(n) * n, 0.0) {}

    double at(int r, int c) const { return val[static_cast<std::size_t>(r) * size + c]; }
    double& at(int r, int c) { return val[static_cast<std::size_t>(r) * size + c]; }

    double total() const {
        double s = 0.0;
        for (double v : val) s += v;
        return s;
    }
    double max() const { return val.empty() ? 0.0 : *std::max_element(val.begin(), val.end()); }
    std::pair<int, int> argmax() const {
        const auto it = std::max_element(val.begin(), val.end());
        const auto k = static_cast<int>(it - val.begin());
        return {k / size, k % size};
    }
};

struct BenchConfig {
    FrequencyGrid grid{};
    double jitter_amplitude = 0.0; // multiplicative intensity jitter in [1-j, 1+j]
    bool quantize_8bit = false;
    std::uint64_t rng_seed = 0;

    void validate() const {
        grid.validate();
        if (!(jitter_amplitude >= 0.0) || jitter_amplitude > 0.1)
            throw ConfigError("jitter_amplitude must lie in [0, 0.1]");
    }
};

namespace detail {

using CMatrix = Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// e^{sign * i 2pi k m / P} with the product reduced modulo P in integers first.
inline cplx twiddle(long long k, long long m, int pad, int sign) {
    long long r = (k * m) % pad;
    if (r < 0) r += pad;
    const double a = kTwoPi * static_cast<double>(r) / static_cast<double>(pad);
    return {std::cos(a), sign * std::sin(a)};
}

} // namespace detail

// h_{m,n} = arg[sum_{i,j} f_ij exp(i 2pi (u_i m + u_j n) / P)] in [0, 2pi).
// Amplitudes are divided by their maximum first; arg is gain invariant, and
// the division makes c*f and f produce identical bits whenever c*a is exact.
inline Hologram compute_hologram(const FMatrix& f, const FrequencyGrid& grid) {
    f.validate();
    grid.validate();
    const double amax = *std::max_element(f.amp.begin(), f.amp.end());
    if (amax == 0.0) throw EmptyFMatrixError();

    const int S = grid.slm_size;
    detail::CMatrix F(kGridSide, kGridSide);
    for (int i = 0; i < kGridSide; ++i)
        for (int j = 0; j < kGridSide; ++j) {
            const int k = FMatrix::index(i, j);
            F(i, j) = f.amp[k] == 0.0 ? cplx{} : std::polar(f.amp[k] / amax, f.phase[k]);
        }

    detail::CMatrix T(S, kGridSide);
    for (int m = 0; m < S; ++m)
        for (int i = 0; i < kGridSide; ++i) T(m, i) = detail::twiddle(grid.bin[i], m, grid.pad_size, +1);

    const detail::CMatrix Z = T * F * T.transpose();

    Hologram h;
    h.size = S;
    h.phase.resize(static_cast<std::size_t>(S) * S);
    for (int m = 0; m < S; ++m)
        for (int n = 0; n < S; ++n) h.phase[static_cast<std::size_t>(m) * S + n] = arg_0_2pi(Z(m, n));
    return h;
}

// Camera image of a hologram: unit-amplitude aperture, padded DFT, centred
// crop, |.|^2 / (S*S)^2. Only the cropped bins are evaluated (separable
// partial DFT), which equals cropping a full padded transform.
inline IntensityImage simulate_intensity(const Hologram& h, const BenchConfig& cfg, std::uint64_t stream = 0) {
    cfg.validate();
    const FrequencyGrid& g = cfg.grid;
    if (h.size != g.slm_size || h.phase.size() != static_cast<std::size_t>(h.size) * h.size)
        throw InvalidArgument("hologram shape does not match the bench");
    for (double p : h.phase)
        if (!std::isfinite(p) || p < 0.0 || p >= kTwoPi)
            throw InvalidArgument("hologram phase must lie in [0, 2pi)");

    const int S = g.slm_size;
    const int C = g.crop_size;
    const int half = C / 2;

    detail::CMatrix E(S, S);
    for (int m = 0; m < S; ++m)
        for (int n = 0; n < S; ++n) {
            const double p = h.phase[static_cast<std::size_t>(m) * S + n];
            E(m, n) = cplx(std::cos(p), std::sin(p));
        }

    detail::CMatrix W(C, S);
    for (int k = 0; k < C; ++k)
        for (int m = 0; m < S; ++m) W(k, m) = detail::twiddle(k - half, m, g.pad_size, -1);

    const detail::CMatrix Fc = W * E * W.transpose();

    const double norm = static_cast<double>(S) * S * static_cast<double>(S) * S;
    IntensityImage img(C);
    for (int r = 0; r < C; ++r)
        for (int c = 0; c < C; ++c) img.at(r, c) = std::norm(Fc(r, c)) / norm;

    if (cfg.jitter_amplitude > 0.0) {
        Rng rng = substream(cfg.rng_seed, stream, 0x6a17);
        const double factor = uniform(rng, 1.0 - cfg.jitter_amplitude, 1.0 + cfg.jitter_amplitude);
        for (double& v : img.val) v *= factor;
    }
    if (cfg.quantize_8bit) {
        for (double& v : img.val) v = std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
    }
    return img;
}

inline IntensityImage render(const FMatrix& f, const BenchConfig& cfg, std::uint64_t stream = 0) {
    return simulate_intensity(compute_hologram(f, cfg.grid), cfg, stream);
}

struct PixelPos {
    int row = 0;
    int col = 0;
    bool operator==(const PixelPos&) const = default;
};

// Camera pixel of the spot produced by element (i, j) alone.
inline PixelPos spot_position(int i, int j, const FrequencyGrid& grid) {
    if (i < 0 || i >= kGridSide || j < 0 || j >= kGridSide)
        throw InvalidArgument("f-matrix index out of range");
    const int half = grid.crop_size / 2;
    return {half + grid.bin[i] * grid.crop_scale(), half + grid.bin[j] * grid.crop_scale()};
}

} // namespace holo
