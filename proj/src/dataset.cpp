#include "lgdist/dataset.hpp"

#include "lgdist/error.hpp"

#include "json.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace lgdist {

namespace fs = std::filesystem;
using json = nlohmann::json;

static_assert(std::endian::native == std::endian::little, "payload IO assumes a little-endian host");

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) {
        if (!cell.empty() && cell.back() == '\r') {
            cell.pop_back();
        }
        out.push_back(cell);
    }
    if (!line.empty() && line.back() == ',') {
        out.emplace_back();
    }
    return out;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& file, const std::vector<std::string>& header) {
    std::istringstream in(read_text(file));
    std::string line;
    require(static_cast<bool>(std::getline(in, line)), ErrorKind::Format, file.string() + ": missing header");
    const auto cols = split_csv_line(line);
    require(cols == header, ErrorKind::Format, file.string() + ": unexpected header '" + line + "'");
    std::vector<std::vector<std::string>> rows;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") {
            continue;
        }
        auto cells = split_csv_line(line);
        require(cells.size() == header.size(), ErrorKind::Format,
                file.string() + ": row " + std::to_string(rows.size() + 1) + " has " + std::to_string(cells.size()) +
                    " cells, expected " + std::to_string(header.size()));
        rows.push_back(std::move(cells));
    }
    return rows;
}

long long parse_int(const std::string& text, const fs::path& file) {
    long long v = 0;
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, v);
    require(ec == std::errc{} && ptr == end, ErrorKind::Format, file.string() + ": bad integer '" + text + "'");
    return v;
}

std::vector<std::string> json_strings(const json& j, const char* key) {
    require(j.contains(key) && j.at(key).is_array(), ErrorKind::Format, std::string("splits.json: missing '") + key + "'");
    return j.at(key).get<std::vector<std::string>>();
}

} // namespace

std::string read_text(const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + file.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& file, const std::string& text) {
    if (file.has_parent_path()) {
        fs::create_directories(file.parent_path());
    }
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + file.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    require(static_cast<bool>(out), ErrorKind::Io, "write failed for " + file.string());
}

std::string format_double(double v) {
    if (std::isnan(v)) {
        return "nan";
    }
    if (std::isinf(v)) {
        return v > 0 ? "inf" : "-inf";
    }
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

double parse_double(const std::string& text) {
    if (text == "nan") {
        return std::numeric_limits<double>::quiet_NaN();
    }
    if (text == "inf") {
        return std::numeric_limits<double>::infinity();
    }
    if (text == "-inf") {
        return -std::numeric_limits<double>::infinity();
    }
    double v = 0.0;
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, v);
    require(ec == std::errc{} && ptr == end, ErrorKind::Format, "bad number '" + text + "'");
    return v;
}

ExpressionMatrix read_f32_matrix(const fs::path& file, std::size_t rows, std::size_t cols) {
    const std::string bytes = read_text(file);
    require(bytes.size() == rows * cols * sizeof(float), ErrorKind::ShapeMismatch,
            file.string() + ": expected " + std::to_string(rows * cols * sizeof(float)) + " bytes, found " +
                std::to_string(bytes.size()));
    ExpressionMatrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    if (!bytes.empty()) {
        std::memcpy(m.data(), bytes.data(), bytes.size());
    }
    return m;
}

void write_f32_matrix(const fs::path& file, const ExpressionMatrix& m) {
    write_text(file, std::string(reinterpret_cast<const char*>(m.data()), static_cast<std::size_t>(m.size()) * sizeof(float)));
}

MaskMatrix read_u8_matrix(const fs::path& file, std::size_t rows, std::size_t cols) {
    const std::string bytes = read_text(file);
    require(bytes.size() == rows * cols, ErrorKind::ShapeMismatch,
            file.string() + ": expected " + std::to_string(rows * cols) + " bytes, found " + std::to_string(bytes.size()));
    MaskMatrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    if (!bytes.empty()) {
        std::memcpy(m.data(), bytes.data(), bytes.size());
    }
    return m;
}

void write_u8_matrix(const fs::path& file, const MaskMatrix& m) {
    write_text(file, std::string(reinterpret_cast<const char*>(m.data()), static_cast<std::size_t>(m.size())));
}

void SplitSpec::validate(const std::vector<std::string>& slide_ids) const {
    std::set<std::string> seen;
    for (const auto* part : {&train, &val, &test}) {
        for (const auto& id : *part) {
            require(seen.insert(id).second, ErrorKind::Format, "slide '" + id + "' appears in more than one split");
        }
    }
    const std::set<std::string> all(slide_ids.begin(), slide_ids.end());
    require(seen == all, ErrorKind::Format, "splits do not cover exactly the dataset's slides");
}

const Slide& Dataset::slide(const std::string& id) const { return slides[slide_index(id)]; }

std::size_t Dataset::slide_index(const std::string& id) const {
    for (std::size_t i = 0; i < slides.size(); ++i) {
        if (slides[i].id() == id) {
            return i;
        }
    }
    fail(ErrorKind::InvalidArgument, "unknown slide '" + id + "'");
}

std::vector<const Slide*> Dataset::split(const std::vector<std::string>& ids) const {
    std::vector<const Slide*> out;
    out.reserve(ids.size());
    for (const auto& id : ids) {
        out.push_back(&slide(id));
    }
    return out;
}

const GenePanel& Dataset::require_panel() const {
    require(panel.has_value(), ErrorKind::InvalidArgument,
            "dataset '" + name + "' has no ranked gene panel; run preprocess first");
    return *panel;
}

Slide Dataset::precompleted_slide(const std::string& id) const {
    const auto it = precompleted.find(id);
    require(it != precompleted.end(), ErrorKind::InvalidArgument,
            "slide '" + id + "' has no precompleted expression; run preprocess first");
    return slide(id).with_expression(it->second);
}

Dataset load_dataset(const fs::path& dir) {
    require(fs::is_directory(dir), ErrorKind::Io, "dataset directory " + dir.string() + " does not exist");
    json meta;
    try {
        meta = json::parse(read_text(dir / "metadata.json"));
    } catch (const json::exception& e) {
        fail(ErrorKind::Format, "metadata.json: " + std::string(e.what()));
    }
    require(meta.value("format_version", -1) == kDatasetFormatVersion, ErrorKind::Format,
            "unknown dataset format version " + meta.value("format_version", json(nullptr)).dump());

    Dataset ds;
    ds.name = meta.value("name", std::string{});
    const auto G = meta.at("G").get<std::size_t>();
    const auto hsag_count = meta.at("hsag_count").get<std::size_t>();
    const auto slide_ids = meta.at("slides").get<std::vector<std::string>>();

    const auto gene_rows = read_csv(dir / "genes.csv", {"index", "name", "morans_i", "is_hsag"});
    require(gene_rows.size() == G, ErrorKind::ShapeMismatch,
            "genes.csv has " + std::to_string(gene_rows.size()) + " rows but metadata G = " + std::to_string(G));
    std::vector<double> morans;
    std::size_t flagged = 0;
    bool ranked = true;
    for (std::size_t i = 0; i < gene_rows.size(); ++i) {
        const auto& r = gene_rows[i];
        require(parse_int(r[0], dir / "genes.csv") == static_cast<long long>(i), ErrorKind::Format,
                "genes.csv: index column out of order at row " + std::to_string(i));
        ds.genes.push_back(r[1]);
        const double m = parse_double(r[2]);
        ranked = ranked && !std::isnan(m);
        morans.push_back(m);
        const auto h = parse_int(r[3], dir / "genes.csv");
        require(h == 0 || h == 1, ErrorKind::Format, "genes.csv: is_hsag must be 0 or 1");
        if (h == 1) {
            require(flagged == i, ErrorKind::Format, "genes.csv: HSAG rows must precede context-gene rows");
            ++flagged;
        }
    }
    if (ranked) {
        require(flagged == hsag_count, ErrorKind::Format,
                "genes.csv flags " + std::to_string(flagged) + " HSAGs but metadata hsag_count = " + std::to_string(hsag_count));
        ds.panel = GenePanel(ds.genes, morans, hsag_count);
    }

    json splits;
    try {
        splits = json::parse(read_text(dir / "splits.json"));
    } catch (const json::exception& e) {
        fail(ErrorKind::Format, "splits.json: " + std::string(e.what()));
    }
    ds.splits.train = json_strings(splits, "train");
    ds.splits.val = json_strings(splits, "val");
    ds.splits.test = json_strings(splits, "test");
    ds.splits.validate(slide_ids);

    for (const auto& id : slide_ids) {
        const fs::path sdir = dir / "slides" / id;
        const auto coord_rows = read_csv(sdir / "coords.csv", {"spot_index", "array_row", "array_col"});
        require(!coord_rows.empty(), ErrorKind::Format, "slide '" + id + "': empty slide");
        std::vector<SpotCoord> coords;
        coords.reserve(coord_rows.size());
        for (std::size_t i = 0; i < coord_rows.size(); ++i) {
            require(parse_int(coord_rows[i][0], sdir / "coords.csv") == static_cast<long long>(i), ErrorKind::Format,
                    "slide '" + id + "': spot_index out of order at row " + std::to_string(i));
            coords.push_back({static_cast<int>(parse_int(coord_rows[i][1], sdir / "coords.csv")),
                              static_cast<int>(parse_int(coord_rows[i][2], sdir / "coords.csv"))});
        }
        const auto S = coords.size();
        auto expr = read_f32_matrix(sdir / "expression.f32", S, G);
        auto mask = read_u8_matrix(sdir / "observed_mask.u8", S, G);
        ds.slides.emplace_back(id, std::move(coords), std::move(expr), std::move(mask));

        for (const auto& [file, target] : {std::pair{"expression_precompleted.f32", &ds.precompleted},
                                           std::pair{"ground_truth.f32", &ds.ground_truth}}) {
            if (fs::exists(sdir / file)) {
                auto m = read_f32_matrix(sdir / file, S, G);
                for (Eigen::Index k = 0; k < m.size(); ++k) {
                    require(std::isfinite(m.data()[k]), ErrorKind::NonFinite,
                            "slide '" + id + "': non-finite value in " + file);
                }
                target->emplace(id, std::move(m));
            }
        }
    }
    return ds;
}

void save_dataset(const Dataset& ds, const fs::path& dir) {
    require(!ds.slides.empty(), ErrorKind::InvalidArgument, "dataset has no slides");
    const std::size_t G = ds.genes.size();
    if (ds.panel) {
        require(ds.panel->names() == ds.genes, ErrorKind::ShapeMismatch, "panel gene order differs from dataset genes");
    }
    std::vector<std::string> ids;
    for (const auto& s : ds.slides) {
        require(s.gene_count() == G, ErrorKind::ShapeMismatch,
                "slide '" + s.id() + "' has " + std::to_string(s.gene_count()) + " genes, dataset has " + std::to_string(G));
        ids.push_back(s.id());
    }
    ds.splits.validate(ids);
    fs::create_directories(dir);

    json meta = {{"format_version", kDatasetFormatVersion},
                 {"name", ds.name},
                 {"G", G},
                 {"hsag_count", ds.panel ? ds.panel->hsag_count() : 0},
                 {"slides", ids}};
    write_text(dir / "metadata.json", meta.dump(2) + "\n");

    std::string genes = "index,name,morans_i,is_hsag\n";
    for (std::size_t i = 0; i < G; ++i) {
        const double m = ds.panel ? ds.panel->morans_i()[i] : std::numeric_limits<double>::quiet_NaN();
        const int h = ds.panel && ds.panel->is_hsag(i) ? 1 : 0;
        genes += std::to_string(i) + "," + ds.genes[i] + "," + format_double(m) + "," + std::to_string(h) + "\n";
    }
    write_text(dir / "genes.csv", genes);

    json splits = {{"train", ds.splits.train}, {"val", ds.splits.val}, {"test", ds.splits.test}};
    write_text(dir / "splits.json", splits.dump(2) + "\n");

    for (const auto& s : ds.slides) {
        const fs::path sdir = dir / "slides" / s.id();
        fs::create_directories(sdir);
        std::string coords = "spot_index,array_row,array_col\n";
        for (std::size_t i = 0; i < s.spot_count(); ++i) {
            coords += std::to_string(i) + "," + std::to_string(s.coords()[i].row) + "," + std::to_string(s.coords()[i].col) + "\n";
        }
        write_text(sdir / "coords.csv", coords);
        write_f32_matrix(sdir / "expression.f32", s.expression());
        write_u8_matrix(sdir / "observed_mask.u8", s.observed_mask());
        for (const auto& [file, source] : {std::pair{"expression_precompleted.f32", &ds.precompleted},
                                           std::pair{"ground_truth.f32", &ds.ground_truth}}) {
            const auto it = source->find(s.id());
            if (it != source->end()) {
                require(it->second.rows() == s.expression().rows() && it->second.cols() == s.expression().cols(),
                        ErrorKind::ShapeMismatch, "slide '" + s.id() + "': " + file + " shape differs from expression");
                write_f32_matrix(sdir / file, it->second);
            } else if (fs::exists(sdir / file)) {
                fs::remove(sdir / file);
            }
        }
    }
}

} // namespace lgdist
