#pragma once

#include "lgdist/data.hpp"
#include "lgdist/rng.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace lgdist::testing {

/// Parity-valid rectangular lattice of rows x cols spots.
inline std::vector<SpotCoord> lattice(int rows, int cols) {
    std::vector<SpotCoord> out;
    for (int r = 0; r < rows; ++r) {
        for (int k = 0; k < cols; ++k) {
            out.push_back({r, 2 * k + (r % 2)});
        }
    }
    return out;
}

inline Slide random_slide(const std::string& id, int rows, int cols, int genes, std::uint64_t seed,
                          double observed_prob = 1.0) {
    const auto coords = lattice(rows, cols);
    CounterRng rng(seed);
    ExpressionMatrix x(static_cast<Eigen::Index>(coords.size()), genes);
    MaskMatrix m(static_cast<Eigen::Index>(coords.size()), genes);
    for (Eigen::Index k = 0; k < x.size(); ++k) {
        x.data()[k] = static_cast<float>(rng.normal());
        m.data()[k] = rng.uniform() < observed_prob ? 1 : 0;
    }
    return Slide(id, coords, x, m);
}

inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("lgdist_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace lgdist::testing
