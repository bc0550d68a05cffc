#pragma once

#include "lgdist/hex.hpp"
#include "lgdist/matrix.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace lgdist {

/// One tissue section: S spots by G genes plus the measured/dropout mask.
/// Immutable once constructed; derived slides are produced by the `with_*`
/// helpers.
class Slide {
public:
    Slide() = default;

    /// Validates shapes, parity, coordinate uniqueness and finiteness.
    Slide(std::string id, std::vector<SpotCoord> coords, ExpressionMatrix expression, MaskMatrix observed_mask);

    const std::string& id() const { return id_; }
    const std::vector<SpotCoord>& coords() const { return coords_; }
    const ExpressionMatrix& expression() const { return expression_; }
    const MaskMatrix& observed_mask() const { return observed_mask_; }

    std::size_t spot_count() const { return coords_.size(); }
    std::size_t gene_count() const { return static_cast<std::size_t>(expression_.cols()); }

    bool observed(std::size_t spot, std::size_t gene) const { return observed_mask_(spot, gene) != 0; }

    std::optional<std::size_t> find(SpotCoord c) const;

    Slide with_expression(ExpressionMatrix expression) const;
    Slide with_mask(MaskMatrix observed_mask) const;
    /// Keeps only the listed gene columns, in the given order.
    Slide select_genes(std::span<const std::size_t> columns) const;

private:
    std::string id_;
    std::vector<SpotCoord> coords_;
    ExpressionMatrix expression_;
    MaskMatrix observed_mask_;
    std::unordered_map<SpotCoord, std::size_t, SpotCoordHash> index_;
};

/// Ordered gene list. Genes are sorted by descending Moran's I and the first
/// `hsag_count()` entries are the highly spatially associated genes; the rest
/// are context genes.
class GenePanel {
public:
    GenePanel() = default;
    GenePanel(std::vector<std::string> names, std::vector<double> morans_i, std::size_t hsag_count);

    std::size_t size() const { return names_.size(); }
    std::size_t hsag_count() const { return hsag_count_; }
    std::size_t cg_count() const { return size() - hsag_count_; }

    const std::vector<std::string>& names() const { return names_; }
    const std::vector<double>& morans_i() const { return morans_i_; }
    bool is_hsag(std::size_t column) const { return column < hsag_count_; }

    std::optional<std::size_t> column_of(const std::string& name) const;

    /// The same panel without its context genes.
    GenePanel hsag_only() const;

private:
    std::vector<std::string> names_;
    std::vector<double> morans_i_;
    std::size_t hsag_count_ = 0;
};

/// A center spot and its n hexagonal neighbors as an (n+1) x g block.
struct Neighborhood {
    std::size_t center_spot = 0;
    int hops = 1;
    /// Row 0 is the center; rows 1..n follow `hex_neighbors` order.
    Matrix X;
    /// Formal array coordinate of each row, including absent neighbors.
    std::vector<SpotCoord> coords;
    std::vector<std::uint8_t> neighbor_valid;
    std::vector<std::uint8_t> center_observed;

    std::size_t rows() const { return static_cast<std::size_t>(X.rows()); }
};

/// Builds the neighborhood of `spot` from `values` (S x g, already restricted
/// to panel genes). Absent neighbors produce zero rows flagged invalid.
Neighborhood build_neighborhood(const Slide& slide, const ExpressionMatrix& values, std::size_t spot, int hops);

/// Convenience overload reading the slide's own expression.
Neighborhood build_neighborhood(const Slide& slide, const GenePanel& panel, std::size_t spot, int hops);

/// Neighborhoods stacked token-major: sample b occupies rows
/// [b * tokens, (b + 1) * tokens).
struct NeighborhoodBatch {
    std::size_t tokens = 0;
    Matrix X;
    std::vector<SpotCoord> coords;
    std::vector<std::uint8_t> valid;

    std::size_t batch_size() const { return tokens == 0 ? 0 : static_cast<std::size_t>(X.rows()) / tokens; }
};

NeighborhoodBatch stack_neighborhoods(std::span<const Neighborhood> items);

/// Reference from a stacked sample back to its source spot.
struct SpotRef {
    std::size_t slide = 0;
    std::size_t spot = 0;
};

/// Every spot's neighborhood over a list of slides, stacked in slide then spot
/// order. `values[i]` supplies the expression used for slide i.
struct NeighborhoodSet {
    NeighborhoodBatch batch;
    std::vector<SpotRef> refs;

    std::size_t size() const { return refs.size(); }
    /// Copies the listed samples, in order, into a new batch.
    NeighborhoodBatch gather(std::span<const std::size_t> samples) const;
};

NeighborhoodSet collect_neighborhoods(std::span<const Slide* const> slides, std::span<const ExpressionMatrix* const> values,
                                      int hops);

} // namespace lgdist
