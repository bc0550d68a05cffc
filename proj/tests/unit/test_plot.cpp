#include "doctest.h"

#include "fixtures.hpp"
#include "lgdist/error.hpp"
#include "lgdist/plot.hpp"

#include <regex>
#include <set>

using namespace lgdist;

namespace {

std::vector<std::string> attribute_values(const std::string& svg, const std::string& element, const std::string& attr) {
    const std::regex re("<" + element + " class=\"[a-z]+\"[^>]*?" + attr + "=\"([^\"]*)\"");
    std::vector<std::string> out;
    for (auto it = std::sregex_iterator(svg.begin(), svg.end(), re); it != std::sregex_iterator(); ++it) {
        out.push_back((*it)[1]);
    }
    return out;
}

std::size_t count(const std::string& svg, const std::string& needle) {
    std::size_t n = 0;
    for (auto p = svg.find(needle); p != std::string::npos; p = svg.find(needle, p + 1)) {
        ++n;
    }
    return n;
}

} // namespace

TEST_CASE("a constant gene paints every tile the same color") {
    const auto coords = lgdist::testing::lattice(4, 5);
    MapPanel p{"truth", std::vector<std::optional<double>>(coords.size(), 2.5)};
    const auto svg = svg_expression_maps(coords, {p, p}, "gene");
    const auto fills = attribute_values(svg, "polygon", "fill");
    REQUIRE(fills.size() == 40);
    CHECK(std::set<std::string>(fills.begin(), fills.end()).size() == 1);
}

TEST_CASE("maps share one color scale and gray out missing values") {
    const auto coords = lgdist::testing::lattice(1, 3);
    MapPanel a{"a", {0.0, 1.0, 2.0}};
    MapPanel b{"b", {2.0, std::nullopt, 0.0}};
    const auto fills = attribute_values(svg_expression_maps(coords, {a, b}, "g"), "polygon", "fill");
    REQUIRE(fills.size() == 6);
    CHECK(fills[0] == fills[5]);
    CHECK(fills[2] == fills[3]);
    CHECK(fills[4] == "#d0d0d0");
    CHECK_THROWS_AS(svg_expression_maps(coords, {MapPanel{"x", {1.0}}}, "g"), Error);
}

TEST_CASE("perfect predictions sit on the scatter diagonal") {
    const std::vector<double> v = {-1.0, 0.25, 0.5, 3.0, 2.0};
    const auto svg = svg_scatter(v, v, "scatter");
    const auto cx = attribute_values(svg, "circle", "cx");
    const auto cy = attribute_values(svg, "circle", "cy");
    REQUIRE(cx.size() == 5);
    // Square axes over one shared range: on the identity line x - left equals bottom - y.
    for (std::size_t i = 0; i < cx.size(); ++i) {
        CHECK(std::stod(cx[i]) - 60.0 == doctest::Approx(440.0 - std::stod(cy[i])).epsilon(1e-9));
    }
}

TEST_CASE("a single-fraction sweep renders one point") {
    const std::vector<SweepSeries> s = {{"model", {{0.3, 0.1, 0.01, {0.1}}}}};
    const auto svg = svg_sweep_lines(s, "sweep");
    CHECK(count(svg, "class=\"point\"") == 1);
    CHECK(count(svg, "<polyline") == 0);
    const std::vector<SweepSeries> two = {{"a", {{0.1, 0.1, 0.0, {}}, {0.5, 0.2, 0.0, {}}}},
                                          {"b", {{0.1, 0.3, 0.0, {}}, {0.5, 0.4, 0.0, {}}}}};
    CHECK(count(svg_sweep_lines(two, "sweep"), "<polyline") == 2);
}

TEST_CASE("plots are byte-deterministic") {
    const std::vector<double> t = {1.0, 2.0, 3.0};
    const std::vector<double> p = {1.5, 2.0, 2.5};
    CHECK(svg_scatter(t, p, "s") == svg_scatter(t, p, "s"));
    CHECK(ramp_color(0.0) == "#440154");
    CHECK(ramp_color(1.0) == "#fde725");
}
