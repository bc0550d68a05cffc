#include "doctest.h"

#include "lgdist/error.hpp"
#include "lgdist/hex.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <set>

using namespace lgdist;

namespace {

// Breadth-first search over the 6-neighbor graph, independent of the ring tables.
std::set<SpotCoord> bfs_within(SpotCoord start, int max_hops) {
    const int dr[] = {0, 0, 1, 1, -1, -1};
    const int dc[] = {2, -2, 1, -1, 1, -1};
    std::map<SpotCoord, int> dist{{start, 0}};
    std::deque<SpotCoord> queue{start};
    while (!queue.empty()) {
        const auto c = queue.front();
        queue.pop_front();
        if (dist[c] == max_hops) {
            continue;
        }
        for (int k = 0; k < 6; ++k) {
            const SpotCoord n{c.row + dr[k], c.col + dc[k]};
            if (!dist.count(n)) {
                dist[n] = dist[c] + 1;
                queue.push_back(n);
            }
        }
    }
    std::set<SpotCoord> out;
    for (const auto& [c, d] : dist) {
        if (d > 0) {
            out.insert(c);
        }
    }
    return out;
}

} // namespace

TEST_CASE("one-hop neighbors of (2,4) in clockwise order from east") {
    const auto n = hex_neighbors({2, 4}, 1);
    const std::vector<SpotCoord> expected{{2, 6}, {3, 5}, {3, 3}, {2, 2}, {1, 3}, {1, 5}};
    CHECK(n == expected);
}

TEST_CASE("one-hop neighbors at the origin include negative positions") {
    const auto n = hex_neighbors({0, 0}, 1);
    CHECK(n.size() == 6);
    CHECK(std::count_if(n.begin(), n.end(), [](SpotCoord c) { return c.row < 0 || c.col < 0; }) == 4);
}

TEST_CASE("two-hop neighbors match a brute-force box scan and BFS") {
    const SpotCoord center{2, 4};
    const auto n = hex_neighbors(center, 2);
    REQUIRE(n.size() == 18);
    std::set<SpotCoord> scan;
    for (int r = center.row - 2; r <= center.row + 2; ++r) {
        for (int c = center.col - 4; c <= center.col + 4; ++c) {
            const SpotCoord p{r, c};
            if (p != center && has_valid_parity(p) && bfs_within(center, 2).count(p)) {
                scan.insert(p);
            }
        }
    }
    CHECK(std::set<SpotCoord>(n.begin(), n.end()) == scan);
    CHECK(scan == bfs_within(center, 2));
    for (std::size_t k = 0; k < 6; ++k) {
        CHECK(hex_distance(center, n[k]) == 1);
    }
    for (std::size_t k = 6; k < 18; ++k) {
        CHECK(hex_distance(center, n[k]) == 2);
    }
}

TEST_CASE("hex_distance agrees with BFS distance on a window") {
    const SpotCoord center{5, 7};
    const auto ring1 = bfs_within(center, 1);
    const auto ring2 = bfs_within(center, 2);
    const auto ring3 = bfs_within(center, 3);
    for (const auto& p : ring3) {
        const int expected = ring1.count(p) ? 1 : (ring2.count(p) ? 2 : 3);
        CHECK(hex_distance(center, p) == expected);
    }
}

TEST_CASE("one-hop adjacency is symmetric and preserves parity") {
    for (int r = 0; r < 6; ++r) {
        for (int c = r % 2; c < 12; c += 2) {
            const SpotCoord a{r, c};
            for (const auto& b : hex_neighbors(a, 1)) {
                CHECK(has_valid_parity(b));
                const auto back = hex_neighbors(b, 1);
                CHECK(std::find(back.begin(), back.end(), a) != back.end());
            }
        }
    }
}

TEST_CASE("invalid parity and hop counts are rejected") {
    try {
        hex_neighbors({1, 2}, 1);
        FAIL("expected a parity error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::CoordinateParity);
    }
    CHECK_THROWS_AS(hex_neighbors({2, 4}, 3), Error);
    CHECK(neighbor_count(0) == 0);
    CHECK(neighbor_count(1) == 6);
    CHECK(neighbor_count(2) == 18);
    CHECK_THROWS_AS(neighbor_count(4), Error);
}
