#include "lgdist/plot.hpp"

#include "lgdist/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace lgdist {

namespace {

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    for (const char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

std::string header(double w, double h) {
    return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(w) + "\" height=\"" + num(h) + "\" viewBox=\"0 0 " +
           num(w) + " " + num(h) + "\" font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

std::string text(double x, double y, const std::string& s, const char* anchor = "middle") {
    return "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" text-anchor=\"" + anchor + "\">" + escape(s) + "</text>\n";
}

std::string short_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3g", v);
    return buf;
}

} // namespace

std::string ramp_color(double t) {
    static constexpr std::array<std::array<double, 3>, 5> stops = {{
        {68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37},
    }};
    t = std::clamp(std::isfinite(t) ? t : 0.5, 0.0, 1.0);
    const double x = t * static_cast<double>(stops.size() - 1);
    const auto i = std::min(static_cast<std::size_t>(x), stops.size() - 2);
    const double f = x - static_cast<double>(i);
    char buf[8];
    int rgb[3];
    for (int k = 0; k < 3; ++k) {
        rgb[k] = static_cast<int>(std::lround(stops[i][static_cast<std::size_t>(k)] * (1.0 - f) +
                                              stops[i + 1][static_cast<std::size_t>(k)] * f));
    }
    std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", rgb[0], rgb[1], rgb[2]);
    return buf;
}

std::string svg_expression_maps(const std::vector<SpotCoord>& coords, const std::vector<MapPanel>& panels,
                                const std::string& title) {
    require(!coords.empty() && !panels.empty(), ErrorKind::InvalidArgument, "expression map needs spots and panels");
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& p : panels) {
        require(p.values.size() == coords.size(), ErrorKind::ShapeMismatch, "panel '" + p.title + "' has the wrong spot count");
        for (const auto& v : p.values) {
            if (v) {
                lo = std::min(lo, *v);
                hi = std::max(hi, *v);
            }
        }
    }
    const double radius = 8.0;
    const double dx = radius * std::sqrt(3.0) / 2.0;
    const double dy = radius * 1.5;
    int min_r = coords[0].row, max_r = min_r, min_c = coords[0].col, max_c = min_c;
    for (const auto& c : coords) {
        min_r = std::min(min_r, c.row);
        max_r = std::max(max_r, c.row);
        min_c = std::min(min_c, c.col);
        max_c = std::max(max_c, c.col);
    }
    const double panel_w = (max_c - min_c) * dx + 2.0 * radius + 20.0;
    const double panel_h = (max_r - min_r) * dy + 2.0 * radius;
    const double top = 50.0;
    const double width = panel_w * static_cast<double>(panels.size()) + 20.0;
    const double height = top + panel_h + 50.0;

    std::ostringstream out;
    out << header(width, height) << text(width / 2.0, 20.0, title);
    for (std::size_t p = 0; p < panels.size(); ++p) {
        const double ox = 10.0 + panel_w * static_cast<double>(p) + radius;
        out << text(ox - radius + panel_w / 2.0 - 10.0, top - 10.0, panels[p].title);
        for (std::size_t s = 0; s < coords.size(); ++s) {
            const double cx = ox + (coords[s].col - min_c) * dx;
            const double cy = top + radius + (coords[s].row - min_r) * dy;
            std::string points;
            for (int k = 0; k < 6; ++k) {
                const double a = (60.0 * k + 30.0) * 3.14159265358979323846 / 180.0;
                points += (k ? " " : "") + num(cx + radius * std::cos(a)) + "," + num(cy + radius * std::sin(a));
            }
            const auto& v = panels[p].values[s];
            const std::string fill = v ? ramp_color(hi > lo ? (*v - lo) / (hi - lo) : 0.5) : "#d0d0d0";
            out << "<polygon class=\"tile\" points=\"" << points << "\" fill=\"" << fill << "\"/>\n";
        }
    }
    const double bar_y = top + panel_h + 15.0;
    for (int k = 0; k < 50; ++k) {
        out << "<rect x=\"" << num(10.0 + 4.0 * k) << "\" y=\"" << num(bar_y) << "\" width=\"4.00\" height=\"10.00\" fill=\""
            << ramp_color(k / 49.0) << "\"/>\n";
    }
    const bool any = std::isfinite(lo);
    out << text(10.0, bar_y + 25.0, any ? short_number(lo) : "n/a", "start")
        << text(210.0, bar_y + 25.0, any ? short_number(hi) : "n/a", "end") << "</svg>\n";
    return out.str();
}

std::string svg_scatter(const std::vector<double>& truth, const std::vector<double>& predicted, const std::string& title) {
    require(truth.size() == predicted.size() && !truth.empty(), ErrorKind::ShapeMismatch,
            "scatter needs equally many truth and predicted values");
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        lo = std::min({lo, truth[i], predicted[i]});
        hi = std::max({hi, truth[i], predicted[i]});
    }
    if (hi <= lo) {
        lo -= 1.0;
        hi += 1.0;
    }
    const double left = 60.0, top = 40.0, side = 400.0;
    const auto px = [&](double v) { return left + (v - lo) / (hi - lo) * side; };
    const auto py = [&](double v) { return top + side - (v - lo) / (hi - lo) * side; };
    std::ostringstream out;
    out << header(left + side + 30.0, top + side + 50.0) << text(left + side / 2.0, 22.0, title);
    out << "<rect x=\"" << num(left) << "\" y=\"" << num(top) << "\" width=\"" << num(side) << "\" height=\"" << num(side)
        << "\" fill=\"none\" stroke=\"black\"/>\n";
    out << "<line class=\"diagonal\" x1=\"" << num(px(lo)) << "\" y1=\"" << num(py(lo)) << "\" x2=\"" << num(px(hi))
        << "\" y2=\"" << num(py(hi)) << "\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n";
    for (std::size_t i = 0; i < truth.size(); ++i) {
        out << "<circle class=\"point\" cx=\"" << num(px(truth[i])) << "\" cy=\"" << num(py(predicted[i]))
            << "\" r=\"2.00\" fill=\"#3b528b\" fill-opacity=\"0.5\"/>\n";
    }
    out << text(left + side / 2.0, top + side + 35.0, "truth") << text(left, top + side + 15.0, short_number(lo), "start")
        << text(left + side, top + side + 15.0, short_number(hi), "end")
        << "<text x=\"20.00\" y=\"" << num(top + side / 2.0) << "\" text-anchor=\"middle\" transform=\"rotate(-90 20.00 "
        << num(top + side / 2.0) << ")\">predicted</text>\n</svg>\n";
    return out.str();
}

std::string svg_sweep_lines(const std::vector<SweepSeries>& series, const std::string& title) {
    require(!series.empty(), ErrorKind::InvalidArgument, "sweep plot needs at least one series");
    double fmin = std::numeric_limits<double>::infinity(), fmax = -fmin;
    double ymax = 0.0;
    for (const auto& s : series) {
        require(!s.rows.empty(), ErrorKind::InvalidArgument, "sweep series '" + s.name + "' has no rows");
        for (const auto& r : s.rows) {
            fmin = std::min(fmin, r.fraction);
            fmax = std::max(fmax, r.fraction);
            ymax = std::max(ymax, r.mean_mse + r.std_mse);
        }
    }
    if (fmax <= fmin) {
        fmin -= 0.05;
        fmax += 0.05;
    }
    if (ymax <= 0.0) {
        ymax = 1.0;
    }
    const double left = 70.0, top = 40.0, w = 480.0, h = 300.0;
    const auto px = [&](double f) { return left + (f - fmin) / (fmax - fmin) * w; };
    const auto py = [&](double y) { return top + h - y / (ymax * 1.05) * h; };
    static constexpr std::array<const char*, 4> colors = {"#3b528b", "#e15759", "#21918c", "#f28e2b"};
    std::ostringstream out;
    out << header(left + w + 160.0, top + h + 60.0) << text(left + w / 2.0, 22.0, title);
    out << "<rect x=\"" << num(left) << "\" y=\"" << num(top) << "\" width=\"" << num(w) << "\" height=\"" << num(h)
        << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (std::size_t k = 0; k < series.size(); ++k) {
        const char* color = colors[k % colors.size()];
        const auto& rows = series[k].rows;
        if (rows.size() > 1) {
            out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
            for (std::size_t i = 0; i < rows.size(); ++i) {
                out << (i ? " " : "") << num(px(rows[i].fraction)) << "," << num(py(rows[i].mean_mse));
            }
            out << "\"/>\n";
        }
        for (const auto& r : rows) {
            out << "<line x1=\"" << num(px(r.fraction)) << "\" y1=\"" << num(py(r.mean_mse - r.std_mse)) << "\" x2=\""
                << num(px(r.fraction)) << "\" y2=\"" << num(py(r.mean_mse + r.std_mse)) << "\" stroke=\"" << color << "\"/>\n";
            out << "<circle class=\"point\" cx=\"" << num(px(r.fraction)) << "\" cy=\"" << num(py(r.mean_mse))
                << "\" r=\"3.00\" fill=\"" << color << "\"/>\n";
        }
        out << "<rect x=\"" << num(left + w + 15.0) << "\" y=\"" << num(top + 20.0 * k) << "\" width=\"12.00\" height=\"12.00\" fill=\""
            << color << "\"/>\n"
            << text(left + w + 32.0, top + 20.0 * k + 11.0, series[k].name, "start");
    }
    out << text(left + w / 2.0, top + h + 40.0, "masked fraction") << text(left, top + h + 18.0, short_number(fmin), "start")
        << text(left + w, top + h + 18.0, short_number(fmax), "end") << text(left - 5.0, top + 10.0, short_number(ymax), "end")
        << "<text x=\"20.00\" y=\"" << num(top + h / 2.0) << "\" text-anchor=\"middle\" transform=\"rotate(-90 20.00 "
        << num(top + h / 2.0) << ")\">MSE</text>\n</svg>\n";
    return out.str();
}

} // namespace lgdist
