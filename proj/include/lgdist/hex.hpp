#pragma once

#include <compare>
#include <cstddef>
#include <functional>
#include <vector>

namespace lgdist {

/// Visium array coordinate. Rows are offset so that (row + col) is even.
struct SpotCoord {
    int row = 0;
    int col = 0;

    auto operator<=>(const SpotCoord&) const = default;
};

struct SpotCoordHash {
    std::size_t operator()(const SpotCoord& c) const noexcept {
        return std::hash<long long>{}((static_cast<long long>(c.row) << 32) ^ static_cast<unsigned>(c.col));
    }
};

inline bool has_valid_parity(SpotCoord c) { return ((c.row + c.col) % 2 + 2) % 2 == 0; }

/// Number of hex steps between two parity-valid coordinates.
int hex_distance(SpotCoord a, SpotCoord b);

/// Number of neighbor slots for a hop count: 0, 6 or 18.
std::size_t neighbor_count(int hops);

/// Formal neighbor positions of `coord`, ring by ring, each ring clockwise
/// starting east of the center. Positions may lie outside any slide.
/// hops = 1 gives 6 positions, hops = 2 gives 18 (ring 1 then ring 2).
std::vector<SpotCoord> hex_neighbors(SpotCoord coord, int hops);

} // namespace lgdist
