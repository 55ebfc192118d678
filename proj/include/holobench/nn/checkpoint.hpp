#pragma once

// Checkpoint file (little-endian):
//   "HBCK" | u32 version | str kind | str config_json | u64 count
//   count x ( str name | u64 rows | u64 cols | f64 data[rows*cols] )
// where str is u32 length + bytes. Tensors are written in visit order.

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "holobench/core/binary_io.hpp"
#include "holobench/nn/tensor.hpp"

namespace holo::nn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    std::string kind;
    std::string config_json;
    std::vector<std::pair<std::string, Matrix>> tensors;

    // Snapshot of everything a state visitor exposes.
    template <typename Visitable>
    void capture(Visitable& v) {
        v.visit_state([this](const std::string& name, Matrix& m) { tensors.emplace_back(name, m); });
    }

    // Restores every tensor the visitor asks for; shapes must match.
    template <typename Visitable>
    void restore(Visitable& v) const {
        std::map<std::string, const Matrix*> index;
        for (const auto& [name, m] : tensors) index[name] = &m;
        v.visit_state([&](const std::string& name, Matrix& m) {
            const auto it = index.find(name);
            if (it == index.end()) throw IoError("checkpoint is missing tensor '" + name + "'");
            if (it->second->rows() != m.rows() || it->second->cols() != m.cols())
                throw IoError("checkpoint tensor '" + name + "' has the wrong shape");
            m = *it->second;
        });
    }

    void save(const std::filesystem::path& path) const {
        if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
        std::ofstream os(path, std::ios::binary);
        if (!os) throw IoError("cannot open " + path.string() + " for writing");
        io::write_magic(os, "HBCK");
        io::write_le<std::uint32_t>(os, kCheckpointVersion);
        io::write_string(os, kind);
        io::write_string(os, config_json);
        io::write_le<std::uint64_t>(os, tensors.size());
        for (const auto& [name, m] : tensors) {
            io::write_string(os, name);
            io::write_le<std::uint64_t>(os, static_cast<std::uint64_t>(m.rows()));
            io::write_le<std::uint64_t>(os, static_cast<std::uint64_t>(m.cols()));
            io::write_le_array<double>(os, std::span<const double>(m.data(), static_cast<std::size_t>(m.size())));
        }
        if (!os.flush()) throw IoError("write failed: " + path.string());
    }

    static Checkpoint load(const std::filesystem::path& path) {
        std::ifstream is(path, std::ios::binary);
        if (!is) throw IoError("cannot open checkpoint " + path.string());
        io::expect_magic(is, "HBCK");
        const auto version = io::read_le<std::uint32_t>(is);
        if (version != kCheckpointVersion) throw IoError("unsupported checkpoint version");
        Checkpoint ck;
        ck.kind = io::read_string(is);
        ck.config_json = io::read_string(is);
        const auto n = io::read_le<std::uint64_t>(is);
        for (std::uint64_t k = 0; k < n; ++k) {
            std::string name = io::read_string(is);
            const auto rows = io::read_le<std::uint64_t>(is);
            const auto cols = io::read_le<std::uint64_t>(is);
            if (rows * cols > (1ull << 32)) throw IoError("checkpoint tensor too large");
            Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
            io::read_le_array<double>(is, std::span<double>(m.data(), static_cast<std::size_t>(m.size())));
            ck.tensors.emplace_back(std::move(name), std::move(m));
        }
        return ck;
    }
};

} // namespace holo::nn
