#pragma once

// Sparse f-matrix sampler, phase redraws and the binary (f, I) corpus format.
//
// File layout (little-endian):
//   "HOLO" | u32 version | u64 record_count
//   grid:    u32 pad_size | u32 slm_size | u32 crop_size | i32 bin[8]
//   sampler: f64 C | u64 n_patterns | u32 phase_redraws | u64 rng_seed
//   bench:   f64 jitter | u8 quantize_8bit | u64 rng_seed
//   records: f32 amp[64] | f32 phase[64] | f32 intensity[crop*crop]

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "holobench/core/binary_io.hpp"
#include "holobench/core/error.hpp"
#include "holobench/core/rng.hpp"
#include "holobench/optics.hpp"

namespace holo {

struct SamplerConfig {
    double sparseness_threshold = 0.95; // C: element is nonzero iff u > C
    std::uint64_t n_patterns = 50'000;
    std::uint32_t phase_redraws = 3;
    std::uint64_t rng_seed = 0;

    void validate() const {
        if (!(sparseness_threshold > 0.0 && sparseness_threshold < 1.0))
            throw ConfigError("sparseness threshold must lie in (0, 1)");
        if (kGridCells * (1.0 - sparseness_threshold) < 1.0)
            throw ConfigError("sparseness threshold leaves fewer than one expected nonzero element");
        if (n_patterns == 0) throw ConfigError("n_patterns must be positive");
        if (phase_redraws == 0) throw ConfigError("phase_redraws must be at least 1");
    }
};

// Bernoulli preselection of spatial frequencies; amplitude ~ U(0,1), phase
// ~ U[0,2pi) on selected cells. Values are drawn as float so the stored
// record reproduces the simulated image exactly. Resamples empty matrices.
inline FMatrix sample_fmatrix(const SamplerConfig& cfg, Rng& rng) {
    cfg.validate();
    for (;;) {
        FMatrix f;
        for (int k = 0; k < kGridCells; ++k) {
            if (uniform01(rng) <= cfg.sparseness_threshold) continue;
            float a = 0.0f;
            while (a == 0.0f) a = static_cast<float>(uniform01(rng));
            if (a >= 1.0f) a = std::nextafter(1.0f, 0.0f);
            f.amp[k] = a;
            f.phase[k] = uniform_phase_f32(rng);
        }
        if (!f.empty()) return f;
    }
}

// New phases on the support; amplitudes and zero cells untouched.
inline FMatrix phase_redraw(const FMatrix& f, Rng& rng) {
    if (f.empty()) throw EmptyFMatrixError();
    FMatrix g = f;
    for (int k = 0; k < kGridCells; ++k)
        if (g.amp[k] != 0.0) g.phase[k] = uniform_phase_f32(rng);
    return g;
}

struct Record {
    FMatrix f;
    IntensityImage intensity;
};

struct DatasetHeader {
    std::uint32_t version = 1;
    std::uint64_t record_count = 0;
    FrequencyGrid grid{};
    SamplerConfig sampler{};
    double jitter_amplitude = 0.0;
    bool quantize_8bit = false;
    std::uint64_t bench_seed = 0;

    BenchConfig bench() const {
        BenchConfig b;
        b.grid = grid;
        b.jitter_amplitude = jitter_amplitude;
        b.quantize_8bit = quantize_8bit;
        b.rng_seed = bench_seed;
        return b;
    }

    std::size_t pixels() const { return static_cast<std::size_t>(grid.crop_size) * grid.crop_size; }
    std::size_t record_bytes() const { return (2 * kGridCells + pixels()) * sizeof(float); }
};

inline constexpr std::uint32_t kDatasetVersion = 1;

namespace detail {

inline void write_header(std::ostream& os, const DatasetHeader& h) {
    io::write_magic(os, "HOLO");
    io::write_le<std::uint32_t>(os, h.version);
    io::write_le<std::uint64_t>(os, h.record_count);
    io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(h.grid.pad_size));
    io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(h.grid.slm_size));
    io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(h.grid.crop_size));
    for (int b : h.grid.bin) io::write_le<std::int32_t>(os, b);
    io::write_le<double>(os, h.sampler.sparseness_threshold);
    io::write_le<std::uint64_t>(os, h.sampler.n_patterns);
    io::write_le<std::uint32_t>(os, h.sampler.phase_redraws);
    io::write_le<std::uint64_t>(os, h.sampler.rng_seed);
    io::write_le<double>(os, h.jitter_amplitude);
    io::write_le<std::uint8_t>(os, h.quantize_8bit ? 1 : 0);
    io::write_le<std::uint64_t>(os, h.bench_seed);
}

inline DatasetHeader read_header(std::istream& is) {
    io::expect_magic(is, "HOLO");
    DatasetHeader h;
    h.version = io::read_le<std::uint32_t>(is);
    if (h.version != kDatasetVersion) throw IoError("unsupported dataset version " + std::to_string(h.version));
    h.record_count = io::read_le<std::uint64_t>(is);
    h.grid.pad_size = static_cast<int>(io::read_le<std::uint32_t>(is));
    h.grid.slm_size = static_cast<int>(io::read_le<std::uint32_t>(is));
    h.grid.crop_size = static_cast<int>(io::read_le<std::uint32_t>(is));
    for (int& b : h.grid.bin) b = io::read_le<std::int32_t>(is);
    h.sampler.sparseness_threshold = io::read_le<double>(is);
    h.sampler.n_patterns = io::read_le<std::uint64_t>(is);
    h.sampler.phase_redraws = io::read_le<std::uint32_t>(is);
    h.sampler.rng_seed = io::read_le<std::uint64_t>(is);
    h.jitter_amplitude = io::read_le<double>(is);
    h.quantize_8bit = io::read_le<std::uint8_t>(is) != 0;
    h.bench_seed = io::read_le<std::uint64_t>(is);
    return h;
}

// Records of one amplitude pattern: the pattern draw and each phase redraw
// use their own substream keyed by the pattern index.
inline std::vector<Record> make_pattern_records(const SamplerConfig& cfg, const BenchConfig& bench,
                                                std::uint64_t pattern) {
    Rng rng = substream(cfg.rng_seed, pattern, 0x5a3e);
    const FMatrix base = sample_fmatrix(cfg, rng);
    std::vector<Record> out;
    out.reserve(cfg.phase_redraws);
    for (std::uint32_t r = 0; r < cfg.phase_redraws; ++r) {
        FMatrix f = phase_redraw(base, rng);
        const std::uint64_t record_index = pattern * cfg.phase_redraws + r;
        IntensityImage img = render(f, bench, record_index);
        out.push_back({std::move(f), std::move(img)});
    }
    return out;
}

inline void write_record(std::ostream& os, const Record& rec) {
    std::array<float, kGridCells> amp{}, phase{};
    for (int k = 0; k < kGridCells; ++k) {
        amp[k] = static_cast<float>(rec.f.amp[k]);
        phase[k] = static_cast<float>(rec.f.phase[k]);
    }
    std::vector<float> px(rec.intensity.val.size());
    std::transform(rec.intensity.val.begin(), rec.intensity.val.end(), px.begin(),
                   [](double v) { return static_cast<float>(v); });
    io::write_le_array<float>(os, amp);
    io::write_le_array<float>(os, phase);
    io::write_le_array<float>(os, px);
}

} // namespace detail

inline unsigned resolve_threads(unsigned requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("HOLOBENCH_THREADS")) {
        try {
            const long v = std::stol(env);
            if (v > 0) return static_cast<unsigned>(v);
        } catch (const std::exception&) {
        }
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

// Builds the corpus; output bytes depend only on the seeds, not on `threads`.
inline DatasetHeader build_dataset(const SamplerConfig& cfg, const BenchConfig& bench,
                                   const std::filesystem::path& path, unsigned threads = 1) {
    cfg.validate();
    bench.validate();
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");

    DatasetHeader header;
    header.version = kDatasetVersion;
    header.record_count = cfg.n_patterns * cfg.phase_redraws;
    header.grid = bench.grid;
    header.sampler = cfg;
    header.jitter_amplitude = bench.jitter_amplitude;
    header.quantize_8bit = bench.quantize_8bit;
    header.bench_seed = bench.rng_seed;
    detail::write_header(os, header);

    threads = std::max(1u, threads);
    const std::uint64_t chunk = std::max<std::uint64_t>(threads * 4ull, 16);
    for (std::uint64_t start = 0; start < cfg.n_patterns; start += chunk) {
        const std::uint64_t end = std::min(cfg.n_patterns, start + chunk);
        std::vector<std::vector<Record>> results(end - start);
        if (threads == 1) {
            for (std::uint64_t p = start; p < end; ++p) results[p - start] = detail::make_pattern_records(cfg, bench, p);
        } else {
            std::vector<std::jthread> workers;
            for (unsigned t = 0; t < threads; ++t) {
                workers.emplace_back([&, t] {
                    for (std::uint64_t p = start + t; p < end; p += threads)
                        results[p - start] = detail::make_pattern_records(cfg, bench, p);
                });
            }
        }
        for (const auto& recs : results)
            for (const auto& rec : recs) detail::write_record(os, rec);
    }
    if (!os.flush()) throw IoError("write failed: " + path.string());
    return header;
}

// Whole corpus held in memory as float, as stored on disk.
class Dataset {
public:
    static Dataset load(const std::filesystem::path& path) {
        std::ifstream is(path, std::ios::binary);
        if (!is) throw IoError("cannot open dataset " + path.string());
        Dataset ds;
        ds.header_ = detail::read_header(is);
        const std::size_t n = ds.header_.record_count;
        ds.amp_.resize(n * kGridCells);
        ds.phase_.resize(n * kGridCells);
        ds.pixels_.resize(n * ds.header_.pixels());
        const std::size_t px = ds.header_.pixels();
        for (std::size_t r = 0; r < n; ++r) {
            io::read_le_array<float>(is, std::span(ds.amp_.data() + r * kGridCells, kGridCells));
            io::read_le_array<float>(is, std::span(ds.phase_.data() + r * kGridCells, kGridCells));
            io::read_le_array<float>(is, std::span(ds.pixels_.data() + r * px, px));
        }
        return ds;
    }

    const DatasetHeader& header() const { return header_; }
    std::size_t size() const { return header_.record_count; }
    int crop_size() const { return header_.grid.crop_size; }

    FMatrix fmatrix(std::size_t r) const {
        FMatrix f;
        for (int k = 0; k < kGridCells; ++k) {
            f.amp[k] = amp_[r * kGridCells + k];
            f.phase[k] = phase_[r * kGridCells + k];
        }
        return f;
    }

    IntensityImage intensity(std::size_t r) const {
        IntensityImage img(crop_size());
        const std::size_t px = header_.pixels();
        std::copy(pixels_.begin() + static_cast<std::ptrdiff_t>(r * px),
                  pixels_.begin() + static_cast<std::ptrdiff_t>((r + 1) * px), img.val.begin());
        return img;
    }

    std::span<const float> intensity_f32(std::size_t r) const {
        const std::size_t px = header_.pixels();
        return {pixels_.data() + r * px, px};
    }

private:
    DatasetHeader header_;
    std::vector<float> amp_;
    std::vector<float> phase_;
    std::vector<float> pixels_;
};

// FNV-1a over the file bytes; printed by the CLI as a reproducibility check.
inline std::string file_hash(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    std::uint64_t h = 0xcbf29ce484222325ull;
    std::array<char, 1 << 16> buf{};
    while (is) {
        is.read(buf.data(), buf.size());
        for (std::streamsize k = 0; k < is.gcount(); ++k) {
            h ^= static_cast<unsigned char>(buf[static_cast<std::size_t>(k)]);
            h *= 0x100000001b3ull;
        }
    }
    std::ostringstream ss;
    ss << std::hex << std::setw(16) << std::setfill('0') << h;
    return ss.str();
}

inline nlohmann::json grid_to_json(const FrequencyGrid& g) {
    return {{"pad_size", g.pad_size}, {"bins", g.bin}, {"slm_size", g.slm_size}, {"crop_size", g.crop_size}};
}

inline nlohmann::json bench_to_json(const BenchConfig& b) {
    return {{"grid", grid_to_json(b.grid)},
            {"jitter_amplitude", b.jitter_amplitude},
            {"quantize_8bit", b.quantize_8bit},
            {"rng_seed", b.rng_seed}};
}

inline nlohmann::json sampler_to_json(const SamplerConfig& s) {
    return {{"sparseness_threshold", s.sparseness_threshold},
            {"n_patterns", s.n_patterns},
            {"phase_redraws", s.phase_redraws},
            {"rng_seed", s.rng_seed}};
}

inline std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream ss;
    ss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return ss.str();
}

// JSON sidecar next to the dataset: seeds, C, counts, grid, bench config.
inline nlohmann::json dataset_manifest(const DatasetHeader& h, const std::string& hash) {
    return {{"format", "HOLO"},
            {"version", h.version},
            {"record_count", h.record_count},
            {"sampler", sampler_to_json(h.sampler)},
            {"bench", bench_to_json(h.bench())},
            {"file_hash", hash},
            {"created_utc", utc_timestamp()}};
}

} // namespace holo
