#include "doctest.h"

#include "lgdist/error.hpp"
#include "lgdist/preprocess.hpp"
#include "lgdist/synthetic.hpp"

#include <algorithm>
#include <cmath>

using namespace lgdist;

namespace {

// The desk fixture: 64 genes of which 8 are spatially associated.
SynthConfig fixture() {
    SynthConfig c;
    c.genes = 64;
    c.hsag_fraction = 0.125;
    return c;
}

std::vector<double> gene_morans(const Slide& s) { return slide_morans_i(s, hex_adjacency(s)); }

double mean_hsag_morans(const SynthConfig& c) {
    const auto s = generate_slide(c, 0);
    const auto I = gene_morans(s.slide);
    const std::size_t H = c.designed_hsag_count();
    double sum = 0.0;
    for (std::size_t j = 0; j < H; ++j) {
        sum += I[j];
    }
    return sum / static_cast<double>(H);
}

} // namespace

TEST_CASE("unsmoothed fields show no spatial autocorrelation") {
    SynthConfig c = fixture();
    c.length_scale = 0.01;
    c.cg_length_scale = 0.01;
    c.dropout_fraction = 0.0;
    c.seed = 3;
    const auto s = generate_slide(c, 0);
    REQUIRE(s.slide.spot_count() == 400);
    for (const double I : gene_morans(s.slide)) {
        CHECK(std::abs(I) < 0.1);
    }
}

TEST_CASE("length five fields are strongly autocorrelated") {
    SynthConfig c = fixture();
    c.dropout_fraction = 0.0;
    c.seed = 4;
    const auto s = generate_slide(c, 0);
    const auto I = gene_morans(s.slide);
    for (std::size_t j = 0; j < c.designed_hsag_count(); ++j) {
        CHECK(I[j] > 0.5);
    }
}

TEST_CASE("longer correlation lengths raise mean Moran's I") {
    for (std::uint64_t seed : {1, 2, 3}) {
        double previous = -1.0;
        for (double ell : {0.5, 1.5, 4.0}) {
            SynthConfig c = fixture();
            c.length_scale = ell;
            c.dropout_fraction = 0.0;
            c.seed = seed;
            const double I = mean_hsag_morans(c);
            CHECK(I > previous);
            previous = I;
        }
    }
}

TEST_CASE("no dropout leaves every entry observed") {
    SynthConfig c = fixture();
    c.dropout_fraction = 0.0;
    const auto s = generate_slide(c, 0);
    CHECK(s.slide.observed_mask().minCoeff() == 1);
    CHECK(s.slide.expression() == s.ground_truth);
}

TEST_CASE("dropout zeroes exactly the unobserved entries") {
    SynthConfig c = fixture();
    c.dropout_fraction = 0.3;
    c.mean_level = 2.0;
    const auto s = generate_slide(c, 1);
    const auto& m = s.slide.observed_mask();
    const auto& x = s.slide.expression();
    const double frac = 1.0 - m.cast<double>().mean();
    CHECK(frac == doctest::Approx(0.3).epsilon(0.05));
    for (Eigen::Index k = 0; k < x.size(); ++k) {
        if (m.data()[k] == 0) {
            CHECK(x.data()[k] == 0.0f);
        } else {
            CHECK(x.data()[k] == s.ground_truth.data()[k]);
        }
    }
}

TEST_CASE("generation is bit-exact per seed") {
    SynthConfig c = fixture();
    c.seed = 9;
    const auto a = generate_slide(c, 2);
    const auto b = generate_slide(c, 2);
    CHECK(a.slide.expression() == b.slide.expression());
    CHECK(a.slide.observed_mask() == b.slide.observed_mask());
    c.seed = 10;
    CHECK(generate_slide(c, 2).ground_truth != a.ground_truth);
}

TEST_CASE("generated panels are ranked by Moran's I") {
    SynthConfig c = fixture();
    c.seed = 11;
    const auto [slide, panel] = generate(c);
    CHECK(panel.size() == c.genes);
    CHECK(panel.hsag_count() == 8);
    CHECK(std::is_sorted(panel.morans_i().rbegin(), panel.morans_i().rend()));
    CHECK(slide.gene_count() == c.genes);
}

TEST_CASE("datasets carry splits, a panel and ground truth") {
    SynthConfig c = fixture();
    c.rows = 12;
    c.cols = 8;
    c.genes = 16;
    c.length_scale = 3.0;
    c.train_slides = 3;
    c.val_slides = 1;
    c.test_slides = 1;
    const Dataset ds = generate_dataset(c);
    CHECK(ds.slides.size() == 5);
    CHECK(ds.splits.train.size() == 3);
    CHECK(ds.splits.val == std::vector<std::string>{"slide_003"});
    CHECK(ds.splits.test == std::vector<std::string>{"slide_004"});
    REQUIRE(ds.panel.has_value());
    CHECK(ds.panel->hsag_count() == 2);
    for (const auto& s : ds.slides) {
        const auto& truth = ds.ground_truth.at(s.id());
        for (Eigen::Index k = 0; k < truth.size(); ++k) {
            if (s.observed_mask().data()[k] != 0) {
                CHECK(truth.data()[k] == s.expression().data()[k]);
            }
        }
    }
}

TEST_CASE("defaults describe a full-size panel") {
    const SynthConfig c;
    CHECK(c.genes == 1024);
    CHECK(c.designed_hsag_count() == 32);
}

TEST_CASE("invalid configurations are rejected") {
    SynthConfig c = fixture();
    c.length_scale = 11.0;
    CHECK_THROWS_AS(c.validate(), Error);
    c = fixture();
    c.cg_correlation = 1.5;
    CHECK_THROWS_AS(c.validate(), Error);
    c = fixture();
    c.dropout_fraction = 1.0;
    CHECK_THROWS_AS(c.validate(), Error);
    c = fixture();
    c.length_scale = 0.0;
    CHECK_THROWS_AS(c.validate(), Error);
    CHECK_THROWS_AS(synth_config_from_json({{"lattice", 3}}), Error);
    c = fixture();
    c.seed = 77;
    CHECK(to_json(synth_config_from_json(to_json(c))) == to_json(c));
}
