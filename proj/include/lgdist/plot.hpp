#pragma once

#include "lgdist/evaluation.hpp"
#include "lgdist/hex.hpp"

#include <optional>
#include <string>
#include <vector>

namespace lgdist {

/// One hex-tile map panel. Missing values (nullopt) render as gray tiles.
struct MapPanel {
    std::string title;
    std::vector<std::optional<double>> values;
};

/// Side-by-side expression maps sharing one color scale.
std::string svg_expression_maps(const std::vector<SpotCoord>& coords, const std::vector<MapPanel>& panels,
                                const std::string& title);

/// Predicted (y) against truth (x) on equal axes with the identity diagonal.
std::string svg_scatter(const std::vector<double>& truth, const std::vector<double>& predicted, const std::string& title);

struct SweepSeries {
    std::string name;
    std::vector<SweepRow> rows;
};

/// Mean MSE against masked fraction with one-std error bars per series.
std::string svg_sweep_lines(const std::vector<SweepSeries>& series, const std::string& title);

/// Hex color for a value in [0, 1] on a blue-to-yellow ramp.
std::string ramp_color(double t);

} // namespace lgdist
