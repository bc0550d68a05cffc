#include "lgdist/hex.hpp"

#include "lgdist/error.hpp"

#include <array>
#include <cstdlib>
#include <string>

namespace lgdist {

namespace {

struct Offset {
    int dr;
    int dc;
};

constexpr std::array<Offset, 6> kRing1{{{0, 2}, {1, 1}, {1, -1}, {0, -2}, {-1, -1}, {-1, 1}}};

constexpr std::array<Offset, 12> kRing2{{
    {0, 4}, {1, 3}, {2, 2}, {2, 0}, {2, -2}, {1, -3},
    {0, -4}, {-1, -3}, {-2, -2}, {-2, 0}, {-2, 2}, {-1, 3},
}};

std::string describe(SpotCoord c) {
    return "(" + std::to_string(c.row) + ", " + std::to_string(c.col) + ")";
}

} // namespace

int hex_distance(SpotCoord a, SpotCoord b) {
    const int dr = std::abs(a.row - b.row);
    const int dc = std::abs(a.col - b.col);
    return dr + (dc > dr ? (dc - dr) / 2 : 0);
}

std::size_t neighbor_count(int hops) {
    switch (hops) {
    case 0:
        return 0;
    case 1:
        return 6;
    case 2:
        return 18;
    default:
        fail(ErrorKind::InvalidArgument, "hops must be 0, 1 or 2, got " + std::to_string(hops));
    }
}

std::vector<SpotCoord> hex_neighbors(SpotCoord coord, int hops) {
    require(has_valid_parity(coord), ErrorKind::CoordinateParity,
            "coordinate " + describe(coord) + " violates the (row + col) even parity rule");
    require(hops == 1 || hops == 2, ErrorKind::InvalidArgument,
            "hex_neighbors expects hops in {1, 2}, got " + std::to_string(hops));

    std::vector<SpotCoord> out;
    out.reserve(neighbor_count(hops));
    for (const auto& o : kRing1) {
        out.push_back({coord.row + o.dr, coord.col + o.dc});
    }
    if (hops == 2) {
        for (const auto& o : kRing2) {
            out.push_back({coord.row + o.dr, coord.col + o.dc});
        }
    }
    return out;
}

} // namespace lgdist
