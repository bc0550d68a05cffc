#include "lgdist/data.hpp"

#include "lgdist/error.hpp"

#include <algorithm>
#include <cmath>

namespace lgdist {

namespace {

std::string coord_text(SpotCoord c) {
    return "(" + std::to_string(c.row) + ", " + std::to_string(c.col) + ")";
}

} // namespace

Slide::Slide(std::string id, std::vector<SpotCoord> coords, ExpressionMatrix expression, MaskMatrix observed_mask)
    : id_(std::move(id)),
      coords_(std::move(coords)),
      expression_(std::move(expression)),
      observed_mask_(std::move(observed_mask)) {
    require(!coords_.empty(), ErrorKind::Format, "slide '" + id_ + "': empty slide");
    require(static_cast<std::size_t>(expression_.rows()) == coords_.size(), ErrorKind::ShapeMismatch,
            "slide '" + id_ + "': expression has " + std::to_string(expression_.rows()) + " rows but " +
                std::to_string(coords_.size()) + " coordinates");
    require(observed_mask_.rows() == expression_.rows() && observed_mask_.cols() == expression_.cols(),
            ErrorKind::ShapeMismatch, "slide '" + id_ + "': observed_mask shape differs from expression shape");

    index_.reserve(coords_.size());
    for (std::size_t i = 0; i < coords_.size(); ++i) {
        const SpotCoord c = coords_[i];
        require(c.row >= 0 && c.col >= 0, ErrorKind::Format,
                "slide '" + id_ + "': negative array coordinate " + coord_text(c));
        require(has_valid_parity(c), ErrorKind::CoordinateParity,
                "slide '" + id_ + "': coordinate " + coord_text(c) + " violates the parity rule");
        const bool inserted = index_.emplace(c, i).second;
        require(inserted, ErrorKind::Format, "slide '" + id_ + "': duplicate coordinate " + coord_text(c));
    }
    for (Eigen::Index k = 0; k < expression_.size(); ++k) {
        require(std::isfinite(expression_.data()[k]), ErrorKind::NonFinite,
                "slide '" + id_ + "': non-finite expression value at flat index " + std::to_string(k));
        const auto m = observed_mask_.data()[k];
        require(m == 0 || m == 1, ErrorKind::Format,
                "slide '" + id_ + "': observed_mask value " + std::to_string(m) + " is not 0 or 1");
    }
}

std::optional<std::size_t> Slide::find(SpotCoord c) const {
    const auto it = index_.find(c);
    if (it == index_.end()) {
        return std::nullopt;
    }
    return it->second;
}

Slide Slide::with_expression(ExpressionMatrix expression) const {
    return Slide(id_, coords_, std::move(expression), observed_mask_);
}

Slide Slide::with_mask(MaskMatrix observed_mask) const {
    return Slide(id_, coords_, expression_, std::move(observed_mask));
}

Slide Slide::select_genes(std::span<const std::size_t> columns) const {
    ExpressionMatrix e(expression_.rows(), static_cast<Eigen::Index>(columns.size()));
    MaskMatrix m(observed_mask_.rows(), static_cast<Eigen::Index>(columns.size()));
    for (std::size_t j = 0; j < columns.size(); ++j) {
        require(columns[j] < gene_count(), ErrorKind::OutOfRange, "gene column out of range");
        e.col(static_cast<Eigen::Index>(j)) = expression_.col(static_cast<Eigen::Index>(columns[j]));
        m.col(static_cast<Eigen::Index>(j)) = observed_mask_.col(static_cast<Eigen::Index>(columns[j]));
    }
    return Slide(id_, coords_, std::move(e), std::move(m));
}

GenePanel::GenePanel(std::vector<std::string> names, std::vector<double> morans_i, std::size_t hsag_count)
    : names_(std::move(names)), morans_i_(std::move(morans_i)), hsag_count_(hsag_count) {
    require(names_.size() == morans_i_.size(), ErrorKind::ShapeMismatch, "gene names and Moran's I lengths differ");
    require(hsag_count_ <= names_.size(), ErrorKind::InvalidArgument, "hsag_count exceeds the number of genes");
    for (std::size_t i = 1; i < morans_i_.size(); ++i) {
        require(morans_i_[i - 1] >= morans_i_[i], ErrorKind::Format,
                "gene panel is not sorted by descending Moran's I at gene '" + names_[i] + "'");
    }
    auto sorted = names_;
    std::sort(sorted.begin(), sorted.end());
    require(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end(), ErrorKind::Format,
            "gene names are not unique");
}

std::optional<std::size_t> GenePanel::column_of(const std::string& name) const {
    const auto it = std::find(names_.begin(), names_.end(), name);
    if (it == names_.end()) {
        return std::nullopt;
    }
    return static_cast<std::size_t>(it - names_.begin());
}

GenePanel GenePanel::hsag_only() const {
    const auto n = static_cast<std::ptrdiff_t>(hsag_count_);
    return GenePanel({names_.begin(), names_.begin() + n}, {morans_i_.begin(), morans_i_.begin() + n}, hsag_count_);
}

Neighborhood build_neighborhood(const Slide& slide, const ExpressionMatrix& values, std::size_t spot, int hops) {
    require(spot < slide.spot_count(), ErrorKind::OutOfRange,
            "spot index " + std::to_string(spot) + " out of range for slide '" + slide.id() + "' with " +
                std::to_string(slide.spot_count()) + " spots");
    require(values.rows() == static_cast<Eigen::Index>(slide.spot_count()), ErrorKind::ShapeMismatch,
            "value matrix rows differ from the slide's spot count");
    const std::size_t n = neighbor_count(hops);
    const auto g = values.cols();
    const SpotCoord center = slide.coords()[spot];

    Neighborhood out;
    out.center_spot = spot;
    out.hops = hops;
    out.X = Matrix::Zero(static_cast<Eigen::Index>(n + 1), g);
    out.coords.reserve(n + 1);
    out.neighbor_valid.assign(n + 1, 0);

    out.X.row(0) = values.row(static_cast<Eigen::Index>(spot)).cast<double>();
    out.coords.push_back(center);
    out.neighbor_valid[0] = 1;
    if (n > 0) {
        const auto positions = hex_neighbors(center, hops);
        for (std::size_t k = 0; k < n; ++k) {
            out.coords.push_back(positions[k]);
            if (const auto idx = slide.find(positions[k])) {
                out.X.row(static_cast<Eigen::Index>(k + 1)) = values.row(static_cast<Eigen::Index>(*idx)).cast<double>();
                out.neighbor_valid[k + 1] = 1;
            }
        }
    }

    const auto mask_cols = std::min<Eigen::Index>(g, slide.observed_mask().cols());
    out.center_observed.resize(static_cast<std::size_t>(g), 0);
    for (Eigen::Index j = 0; j < mask_cols; ++j) {
        out.center_observed[static_cast<std::size_t>(j)] = slide.observed_mask()(static_cast<Eigen::Index>(spot), j);
    }
    return out;
}

Neighborhood build_neighborhood(const Slide& slide, const GenePanel& panel, std::size_t spot, int hops) {
    require(slide.gene_count() == panel.size(), ErrorKind::ShapeMismatch,
            "slide '" + slide.id() + "' has " + std::to_string(slide.gene_count()) + " genes but the panel has " +
                std::to_string(panel.size()));
    return build_neighborhood(slide, slide.expression(), spot, hops);
}

NeighborhoodBatch stack_neighborhoods(std::span<const Neighborhood> items) {
    NeighborhoodBatch batch;
    if (items.empty()) {
        return batch;
    }
    batch.tokens = items.front().rows();
    const auto g = items.front().X.cols();
    batch.X.resize(static_cast<Eigen::Index>(items.size() * batch.tokens), g);
    batch.coords.reserve(items.size() * batch.tokens);
    batch.valid.reserve(items.size() * batch.tokens);
    for (std::size_t b = 0; b < items.size(); ++b) {
        const auto& item = items[b];
        require(item.rows() == batch.tokens && item.X.cols() == g, ErrorKind::ShapeMismatch,
                "neighborhoods in a batch must share a shape");
        batch.X.middleRows(static_cast<Eigen::Index>(b * batch.tokens), static_cast<Eigen::Index>(batch.tokens)) = item.X;
        batch.coords.insert(batch.coords.end(), item.coords.begin(), item.coords.end());
        batch.valid.insert(batch.valid.end(), item.neighbor_valid.begin(), item.neighbor_valid.end());
    }
    return batch;
}

} // namespace lgdist

namespace lgdist {

NeighborhoodBatch NeighborhoodSet::gather(std::span<const std::size_t> samples) const {
    NeighborhoodBatch out;
    const std::size_t T = batch.tokens;
    out.tokens = T;
    out.X.resize(static_cast<Eigen::Index>(samples.size() * T), batch.X.cols());
    out.coords.reserve(samples.size() * T);
    out.valid.reserve(samples.size() * T);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const std::size_t s = samples[i];
        require(s < size(), ErrorKind::OutOfRange, "neighborhood sample index out of range");
        out.X.middleRows(static_cast<Eigen::Index>(i * T), static_cast<Eigen::Index>(T)) =
            batch.X.middleRows(static_cast<Eigen::Index>(s * T), static_cast<Eigen::Index>(T));
        out.coords.insert(out.coords.end(), batch.coords.begin() + static_cast<std::ptrdiff_t>(s * T),
                          batch.coords.begin() + static_cast<std::ptrdiff_t>((s + 1) * T));
        out.valid.insert(out.valid.end(), batch.valid.begin() + static_cast<std::ptrdiff_t>(s * T),
                         batch.valid.begin() + static_cast<std::ptrdiff_t>((s + 1) * T));
    }
    return out;
}

NeighborhoodSet collect_neighborhoods(std::span<const Slide* const> slides, std::span<const ExpressionMatrix* const> values,
                                      int hops) {
    require(slides.size() == values.size(), ErrorKind::ShapeMismatch, "one value matrix is needed per slide");
    std::vector<Neighborhood> items;
    NeighborhoodSet set;
    for (std::size_t i = 0; i < slides.size(); ++i) {
        for (std::size_t s = 0; s < slides[i]->spot_count(); ++s) {
            items.push_back(build_neighborhood(*slides[i], *values[i], s, hops));
            set.refs.push_back({i, s});
        }
    }
    set.batch = stack_neighborhoods(items);
    return set;
}

} // namespace lgdist
