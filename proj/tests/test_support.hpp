#pragma once

#include <algorithm>
#include <numeric>
#include <vector>

#include "holobench/core/rng.hpp"
#include "holobench/optics.hpp"

namespace holo::fixtures {

// Random f-matrix with `nnz` nonzero elements; values are float-representable,
// like every f-matrix stored in a dataset.
inline FMatrix random_fmatrix(Rng& rng, int nnz) {
    std::vector<int> cells(kGridCells);
    std::iota(cells.begin(), cells.end(), 0);
    std::shuffle(cells.begin(), cells.end(), rng);
    FMatrix f;
    for (int q = 0; q < nnz; ++q) {
        float a = 0.0f;
        while (a == 0.0f) a = static_cast<float>(uniform01(rng));
        f.amp[cells[q]] = a;
        f.phase[cells[q]] = uniform_phase_f32(rng);
    }
    return f;
}

inline FMatrix single_element(int i, int j, double amp = 1.0, double phase = 0.0) {
    FMatrix f;
    f.set(i, j, amp, phase);
    return f;
}

} // namespace holo::fixtures
