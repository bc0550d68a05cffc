#include "doctest.h"

#include "fixtures.hpp"
#include "lgdist/dataset.hpp"
#include "lgdist/error.hpp"

#include <filesystem>
#include <fstream>

using namespace lgdist;
using lgdist::testing::lattice;
using lgdist::testing::random_slide;
using lgdist::testing::scratch_dir;

namespace {

ErrorKind kind_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an lgdist::Error");
    return ErrorKind::InvalidArgument;
}

Dataset small_dataset() {
    Dataset ds;
    ds.name = "fixture";
    ds.genes = {"g0", "g1", "g2"};
    ds.panel = GenePanel(ds.genes, {0.9, 0.5, 0.1}, 1);
    ds.slides.push_back(random_slide("a", 4, 5, 3, 1, 0.8));
    ds.slides.push_back(random_slide("b", 3, 3, 3, 2, 0.8));
    ds.slides.push_back(random_slide("c", 2, 4, 3, 3, 0.8));
    ds.splits = {{"a"}, {"b"}, {"c"}};
    ds.ground_truth.emplace("a", ds.slides[0].expression());
    return ds;
}

} // namespace

TEST_CASE("slide validation") {
    const auto coords = lattice(2, 2);
    ExpressionMatrix x = ExpressionMatrix::Zero(4, 2);
    MaskMatrix m = MaskMatrix::Ones(4, 2);
    CHECK_NOTHROW(Slide("s", coords, x, m));

    auto bad = coords;
    bad[1] = {0, 1};
    CHECK(kind_of([&] { Slide("s", bad, x, m); }) == ErrorKind::CoordinateParity);
    bad = coords;
    bad[1] = bad[0];
    CHECK(kind_of([&] { Slide("s", bad, x, m); }) == ErrorKind::Format);

    ExpressionMatrix nan = x;
    nan(1, 1) = std::numeric_limits<float>::quiet_NaN();
    CHECK(kind_of([&] { Slide("s", coords, nan, m); }) == ErrorKind::NonFinite);

    MaskMatrix two = m;
    two(0, 0) = 2;
    CHECK(kind_of([&] { Slide("s", coords, x, two); }) == ErrorKind::Format);
    CHECK(kind_of([&] { Slide("s", coords, x, MaskMatrix::Ones(3, 2)); }) == ErrorKind::ShapeMismatch);
    CHECK(kind_of([&] { Slide("s", {}, ExpressionMatrix(0, 2), MaskMatrix(0, 2)); }) == ErrorKind::Format);
}

TEST_CASE("gene panel invariants") {
    GenePanel p({"a", "b", "c"}, {0.9, 0.9, 0.1}, 2);
    CHECK(p.hsag_count() == 2);
    CHECK(p.cg_count() == 1);
    CHECK(p.is_hsag(1));
    CHECK_FALSE(p.is_hsag(2));
    CHECK(p.hsag_only().size() == 2);
    CHECK(p.column_of("c") == 2u);
    CHECK_THROWS_AS(GenePanel({"a", "b"}, {0.1, 0.9}, 1), Error);
    CHECK_THROWS_AS(GenePanel({"a", "a"}, {0.9, 0.1}, 1), Error);
    CHECK_THROWS_AS(GenePanel({"a", "b"}, {0.9, 0.1}, 3), Error);
}

TEST_CASE("interior neighborhood is full") {
    const Slide s = random_slide("s", 7, 7, 4, 9);
    const auto center = *s.find({3, 7});
    const auto nb = build_neighborhood(s, s.expression(), center, 1);
    CHECK(nb.X.rows() == 7);
    CHECK(nb.X.cols() == 4);
    for (auto v : nb.neighbor_valid) {
        CHECK(v == 1);
    }
    const auto positions = hex_neighbors({3, 7}, 1);
    for (std::size_t k = 0; k < 6; ++k) {
        const auto j = *s.find(positions[k]);
        CHECK(nb.X.row(static_cast<Eigen::Index>(k + 1)) == s.expression().row(static_cast<Eigen::Index>(j)).cast<double>());
    }
}

TEST_CASE("corner neighborhood pads absent neighbors with zero rows") {
    const Slide s = random_slide("s", 4, 4, 3, 5);
    const auto nb = build_neighborhood(s, s.expression(), *s.find({0, 0}), 1);
    CHECK(nb.X.rows() == 7);
    int valid_neighbors = 0;
    for (std::size_t k = 1; k < 7; ++k) {
        const bool zero = nb.X.row(static_cast<Eigen::Index>(k)).isZero(0.0);
        if (nb.neighbor_valid[k]) {
            ++valid_neighbors;
        } else {
            CHECK(zero);
        }
    }
    CHECK(valid_neighbors == 2);
    CHECK(nb.neighbor_valid[0] == 1);
}

TEST_CASE("zero-hop neighborhood is the center row") {
    const Slide s = random_slide("s", 3, 3, 5, 11);
    const auto nb = build_neighborhood(s, s.expression(), 4, 0);
    CHECK(nb.X.rows() == 1);
    CHECK(nb.X.row(0) == s.expression().row(4).cast<double>());
    CHECK_THROWS_AS(build_neighborhood(s, s.expression(), 9, 1), Error);
}

TEST_CASE("zero rows coincide with invalid flags across a slide") {
    Slide s = random_slide("s", 6, 6, 2, 13);
    ExpressionMatrix shifted = s.expression().array() + 10.0f;
    for (int hops : {1, 2}) {
        for (std::size_t i = 0; i < s.spot_count(); ++i) {
            const auto nb = build_neighborhood(s, shifted, i, hops);
            for (std::size_t k = 0; k < nb.rows(); ++k) {
                CHECK((nb.X.row(static_cast<Eigen::Index>(k)).isZero(0.0)) == (nb.neighbor_valid[k] == 0));
            }
        }
    }
}

TEST_CASE("stacked batch preserves sample order") {
    const Slide s = random_slide("s", 4, 4, 3, 17);
    std::vector<Neighborhood> items{build_neighborhood(s, s.expression(), 1, 1), build_neighborhood(s, s.expression(), 5, 1)};
    const auto batch = stack_neighborhoods(items);
    CHECK(batch.batch_size() == 2);
    CHECK(batch.X.middleRows(7, 7) == items[1].X);
}

TEST_CASE("dataset round trip is bit-exact") {
    const auto dir = scratch_dir("roundtrip");
    const Dataset ds = small_dataset();
    save_dataset(ds, dir / "d1");
    const Dataset back = load_dataset(dir / "d1");
    REQUIRE(back.slides.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(back.slides[i].coords() == ds.slides[i].coords());
        CHECK(back.slides[i].expression() == ds.slides[i].expression());
        CHECK(back.slides[i].observed_mask() == ds.slides[i].observed_mask());
    }
    CHECK(back.panel->names() == ds.panel->names());
    CHECK(back.panel->morans_i() == ds.panel->morans_i());
    CHECK(back.ground_truth.at("a") == ds.ground_truth.at("a"));
    save_dataset(back, dir / "d2");
    CHECK(read_text(dir / "d1/slides/a/expression.f32") == read_text(dir / "d2/slides/a/expression.f32"));
    CHECK(read_text(dir / "d1/genes.csv") == read_text(dir / "d2/genes.csv"));
}

TEST_CASE("dataset load rejects malformed directories") {
    const auto dir = scratch_dir("malformed");
    save_dataset(small_dataset(), dir);

    SUBCASE("mask value 2") {
        auto bytes = read_text(dir / "slides/b/observed_mask.u8");
        bytes[0] = 2;
        write_text(dir / "slides/b/observed_mask.u8", bytes);
        CHECK(kind_of([&] { load_dataset(dir); }) == ErrorKind::Format);
    }
    SUBCASE("empty slide") {
        write_text(dir / "slides/b/coords.csv", "spot_index,array_row,array_col\n");
        try {
            load_dataset(dir);
            FAIL("expected failure");
        } catch (const Error& e) {
            CHECK(std::string(e.what()).find("empty slide") != std::string::npos);
        }
    }
    SUBCASE("unknown format version") {
        auto meta = read_text(dir / "metadata.json");
        meta.replace(meta.find("\"format_version\": 1"), 19, "\"format_version\": 7");
        write_text(dir / "metadata.json", meta);
        CHECK(kind_of([&] { load_dataset(dir); }) == ErrorKind::Format);
    }
    SUBCASE("truncated expression payload") {
        auto bytes = read_text(dir / "slides/a/expression.f32");
        bytes.resize(bytes.size() - 4);
        write_text(dir / "slides/a/expression.f32", bytes);
        CHECK(kind_of([&] { load_dataset(dir); }) == ErrorKind::ShapeMismatch);
    }
    SUBCASE("parity violation") {
        write_text(dir / "slides/c/coords.csv",
                   "spot_index,array_row,array_col\n0,0,0\n1,0,2\n2,0,4\n3,0,6\n4,1,1\n5,1,3\n6,1,5\n7,1,6\n");
        CHECK(kind_of([&] { load_dataset(dir); }) == ErrorKind::CoordinateParity);
    }
    SUBCASE("non-finite expression") {
        auto bytes = read_text(dir / "slides/a/expression.f32");
        const float inf = std::numeric_limits<float>::infinity();
        std::memcpy(bytes.data(), &inf, sizeof(float));
        write_text(dir / "slides/a/expression.f32", bytes);
        CHECK(kind_of([&] { load_dataset(dir); }) == ErrorKind::NonFinite);
    }
    SUBCASE("overlapping splits") {
        write_text(dir / "splits.json", R"({"train":["a","b"],"val":["b"],"test":["c"]})");
        CHECK(kind_of([&] { load_dataset(dir); }) == ErrorKind::Format);
    }
}
