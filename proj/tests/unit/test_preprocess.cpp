#include "doctest.h"

#include "fixtures.hpp"
#include "oracles.hpp"
#include "lgdist/error.hpp"
#include "lgdist/preprocess.hpp"

#include <algorithm>
#include <cmath>

using namespace lgdist;
using lgdist::testing::from_dense;
using lgdist::testing::lattice;
using lgdist::testing::morans_oracle;
using lgdist::testing::random_slide;

namespace {

std::vector<std::vector<int>> path_graph(std::size_t n) {
    std::vector<std::vector<int>> w(n, std::vector<int>(n, 0));
    for (std::size_t i = 0; i + 1 < n; ++i) {
        w[i][i + 1] = w[i + 1][i] = 1;
    }
    return w;
}

} // namespace

TEST_CASE("Moran's I on a four-node path") {
    const auto w = path_graph(4);
    const std::vector<double> x{1, 1, -1, -1};
    CHECK(morans_i(x, from_dense(w)) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(morans_oracle(x, w) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("Moran's I rejects degenerate input") {
    const auto adj = from_dense(path_graph(4));
    const std::vector<double> constant{5, 5, 5, 5};
    try {
        morans_i(constant, adj);
        FAIL("expected degenerate-input error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::DegenerateInput);
    }
    Adjacency empty;
    empty.nodes = 4;
    CHECK_THROWS_AS(morans_i(std::vector<double>{1, 2, 3, 4}, empty), Error);
}

TEST_CASE("Moran's I uses only edges on disconnected components") {
    // Two components {0,1} and {2,3}; values constant within a component.
    std::vector<std::vector<int>> w(4, std::vector<int>(4, 0));
    w[0][1] = w[1][0] = 1;
    w[2][3] = w[3][2] = 1;
    const std::vector<double> x{3, 3, -2, -2};
    CHECK(std::abs(morans_i(x, from_dense(w)) - morans_oracle(x, w)) < 1e-12);
}

TEST_CASE("Moran's I matches the dense oracle on random graphs") {
    CounterRng rng(42);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 2 + rng.below(49);
        std::vector<std::vector<int>> w(n, std::vector<int>(n, 0));
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                if (rng.uniform() < 0.2) {
                    w[i][j] = w[j][i] = 1;
                }
            }
        }
        w[0][n - 1] = w[n - 1][0] = 1;
        std::vector<double> x(n);
        for (auto& v : x) {
            v = rng.normal();
        }
        const auto adj = from_dense(w);
        const double got = morans_i(x, adj);
        CHECK(std::abs(got - morans_oracle(x, w)) < 1e-10);

        std::vector<double> shifted = x;
        for (auto& v : shifted) {
            v = 3.5 * v + 7.0;
        }
        CHECK(std::abs(morans_i(shifted, adj) - got) < 1e-9);
    }
}

TEST_CASE("hex adjacency edges are the one-hop pairs") {
    const Slide s = random_slide("s", 3, 4, 1, 1);
    const auto adj = hex_adjacency(s);
    for (const auto& [i, j] : adj.edges) {
        CHECK(i < j);
        CHECK(hex_distance(s.coords()[i], s.coords()[j]) == 1);
    }
    // 3 rows x 4 cols lattice: 3 horizontal edges per row, 7 diagonal edges per row pair.
    CHECK(adj.edges.size() == 3 * 3 + 2 * 7);
}

TEST_CASE("gene panel ordering and tie-breaking") {
    const auto coords = lattice(4, 4);
    const auto S = static_cast<Eigen::Index>(coords.size());
    ExpressionMatrix x(S, 4);
    for (Eigen::Index i = 0; i < S; ++i) {
        const auto c = coords[static_cast<std::size_t>(i)];
        x(i, 0) = static_cast<float>(c.row);       // smooth
        x(i, 1) = static_cast<float>((i * 7) % 5); // rough
        x(i, 2) = static_cast<float>(c.row);       // tie with gene 0
        x(i, 3) = 1.0f;                            // zero variance
    }
    const Slide s("s", coords, x, MaskMatrix::Ones(S, 4));
    const Slide* slides[] = {&s};
    const auto sel = build_gene_panel(slides, {"zeta", "rough", "alpha", "flat"}, 1, 3);
    CHECK(sel.panel.names() == std::vector<std::string>{"alpha", "zeta", "rough"});
    CHECK(sel.columns == std::vector<std::size_t>{2, 0, 1});
    CHECK(sel.panel.hsag_count() == 1);

    try {
        build_gene_panel(slides, {"zeta", "rough", "alpha", "flat"}, 1, 4);
        FAIL("expected pool-too-small");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::PoolTooSmall);
    }
    const auto again = build_gene_panel(slides, {"zeta", "rough", "alpha", "flat"}, 1, 3);
    CHECK(again.panel.names() == sel.panel.names());
}

TEST_CASE("median fill from six one-hop values") {
    const auto coords = lattice(5, 5);
    const auto S = static_cast<Eigen::Index>(coords.size());
    ExpressionMatrix x = ExpressionMatrix::Zero(S, 1);
    MaskMatrix m = MaskMatrix::Ones(S, 1);
    Slide probe("p", coords, x, m);
    const auto center = *probe.find({2, 4});
    m(static_cast<Eigen::Index>(center), 0) = 0;
    const auto nb = hex_neighbors({2, 4}, 1);
    for (int k = 0; k < 6; ++k) {
        x(static_cast<Eigen::Index>(*probe.find(nb[static_cast<std::size_t>(k)])), 0) = static_cast<float>(k + 1);
    }
    const auto out = median_precomplete(Slide("p", coords, x, m));
    CHECK(out.expression()(static_cast<Eigen::Index>(center), 0) == doctest::Approx(3.5));
}

TEST_CASE("median fill pools the second ring when the first is sparse") {
    const auto coords = lattice(5, 5);
    const auto S = static_cast<Eigen::Index>(coords.size());
    ExpressionMatrix x = ExpressionMatrix::Zero(S, 1);
    MaskMatrix m = MaskMatrix::Zero(S, 1);
    Slide probe("p", coords, x, m);
    const auto nb = hex_neighbors({2, 4}, 2);
    const std::pair<std::size_t, float> observed[] = {{0, 2.f}, {3, 4.f}, {6, 1.f}, {9, 8.f}, {13, 9.f}};
    for (const auto& [k, v] : observed) {
        const auto j = static_cast<Eigen::Index>(*probe.find(nb[k]));
        x(j, 0) = v;
        m(j, 0) = 1;
    }
    const auto out = median_precomplete(Slide("p", coords, x, m));
    CHECK(out.expression()(static_cast<Eigen::Index>(*probe.find({2, 4})), 0) == 4.0f);
}

TEST_CASE("median fill falls back to zero for an unobserved gene") {
    const Slide s = random_slide("s", 4, 4, 2, 3, 0.0);
    const auto out = median_precomplete(s);
    CHECK(out.expression().isZero(0.0f));
}

TEST_CASE("median fill matches a direct per-entry oracle") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const Slide s = random_slide("s", 8, 8, 3, seed, 0.4);
        const auto out = median_precomplete(s);
        for (std::size_t i = 0; i < s.spot_count(); ++i) {
            for (std::size_t g = 0; g < 3; ++g) {
                const auto gi = static_cast<Eigen::Index>(g);
                const auto ii = static_cast<Eigen::Index>(i);
                if (s.observed(i, g)) {
                    CHECK(out.expression()(ii, gi) == s.expression()(ii, gi));
                    continue;
                }
                const double expected = testing::median_fill_oracle(s, i, g);
                CHECK(out.expression()(ii, gi) == static_cast<float>(expected));
            }
        }
        const auto twice = median_precomplete(out);
        CHECK(twice.expression() == out.expression());
        CHECK(out.observed_mask() == s.observed_mask());
    }
}
